#pragma once

// Deterministic offline stand-in for a chat-completions LLM. Rephrasing applies a
// fixed text transform per selected clause; code generation returns the gold
// program of the request's origin question or a damaged variant of it, with
// damage odds that grow with question length and the share of long words.
// Responses are pure functions of (seed, request id, prompt), so runs are
// reproducible on any machine.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "promptcause/llm.hpp"
#include "promptcause/rephrase.hpp"
#include "promptcause/rng.hpp"

namespace promptcause {

class StudyMockClient : public ChatClient {
 public:
  // `gold` maps origin record ids to a reference program.
  StudyMockClient(std::map<std::string, std::string> gold, std::uint64_t seed) : gold_(std::move(gold)), seed_(seed) {}

  bool thread_safe() const override { return true; }
  int calls() const { return calls_.load(); }

  ChatResponse complete(const ChatRequest& req) override {
    ++calls_;
    if (req.max_tokens <= 0) throw Error("max_tokens must be positive");
    const auto& text = req.last_user_text();
    const auto question = MockClient::echo_payload(text);
    std::string out;
    if (text.rfind(kRephraseHeader, 0) == 0) {
      out = rephrase(question, clauses(text));
    } else if (text.rfind(kGenerateHeader, 0) == 0) {
      out = "```python\n" + program(req.id, question) + "```";
    } else {
      out = question;
    }
    return {out, "stop", static_cast<int>(text.size() / 4), static_cast<int>(out.size() / 4)};
  }

  static std::vector<std::string> clauses(const std::string& meta_prompt) {
    std::vector<std::string> out;
    std::istringstream in(meta_prompt);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("<question>", 0) == 0) break;
      for (std::string_view label : {"Instructions: ", "Role: ", "Scenario: "}) {
        if (line.rfind(label, 0) != 0) continue;
        std::string body = line.substr(label.size());
        if (!body.empty() && body.back() == '.') body.pop_back();
        std::size_t start = 0;
        while (start <= body.size()) {
          auto end = body.find("; ", start);
          if (end == std::string::npos) end = body.size();
          out.push_back(body.substr(start, end - start));
          start = end + 2;
        }
      }
    }
    return out;
  }

  static std::string rephrase(std::string q, const std::vector<std::string>& cl) {
    std::string prefix, suffix;
    for (const auto& c : cl) {
      if (c == "make it short") {
        q = shorten(q);
      } else if (c == "make it long") {
        suffix += " Read the whole input carefully before you start, because every value matters for the answer. Think about the"
                  " smallest and the largest cases that the statement allows. Then print the result exactly in the format that is"
                  " described above, without any extra words or blank lines.";
      } else if (c == "make it formal") {
        q = "Consider the following computational task, stated formally. " +
            replace_all(replace_all(replace_all(q, "Read ", "Obtain "), "print ", "output "), "Given ", "Provided ");
      } else if (c == "make it fluent") {
        q = replace_all(q, ". ", ", and ");
      } else if (c == "make it more technical") {
        suffix += " The implementation must guarantee deterministic asymptotic complexity, validate boundary conditions"
                  " rigorously, and process standardized input streams efficiently.";
      } else if (c == "make it simple") {
        for (auto [from, to] : {std::pair{"integers", "numbers"}, {"integer", "number"}, {"determine", "find"}, {"compute", "get"},
                                {"output", "print"}, {"calculate", "get"}, {"Determine", "Find"}, {"Compute", "Get"},
                                {"contains", "has"}, {"following", "next"}})
          q = replace_all(q, from, to);
        q = replace_all(q, ", ", ". ");
      } else if (c == "as a student") {
        prefix = "I am a student and need help with this exercise: " + prefix;
      } else if (c == "as a teacher") {
        prefix = "Here is an exercise for my class: " + prefix;
      } else if (c == "as an expert programmer") {
        prefix = "As an experienced programmer, solve the following: " + prefix;
      } else if (c == "in a programming competition") {
        suffix += " This problem is from a programming competition.";
      } else if (c == "in a job interview") {
        prefix = "You are in a job interview. " + prefix;
      } else if (c == "in a textbook exercise") {
        prefix = "Textbook exercise. " + prefix;
      } else {
        suffix += " (" + c + ")";
      }
    }
    return prefix + q + suffix;
  }

  std::string program(const std::string& request_id, const std::string& question) const {
    const auto origin = origin_of_id(request_id);
    auto it = gold_.find(origin);
    const std::string gold = it == gold_.end() ? "print(input())\n" : ensure_newline(it->second);

    std::size_t words = 0, long_words = 0;
    {
      std::istringstream in(question);
      std::string w;
      while (in >> w) {
        ++words;
        if (w.size() > 8) ++long_words;
      }
    }
    const double len = std::clamp((static_cast<double>(words) - 15.0) / 60.0, 0.0, 1.0);
    const double lw = words ? static_cast<double>(long_words) / static_cast<double>(words) : 0.0;
    Rng rng(derive_seed(seed_, fnv1a(question, fnv1a(request_id))));
    double u = rng.uniform();

    const double p_syntax = 0.02 + 0.08 * lw;
    const double p_runtime = 0.02 + 0.20 * len;
    const double p_wrong = 0.02 + 0.45 * len;
    const double p_timeout = 0.01;
    if ((u -= p_syntax) < 0) return gold + "\ndef broken(:\n    pass\n";
    if ((u -= p_runtime) < 0) return "_ = 1 // 0\n" + gold;
    if ((u -= p_wrong) < 0) return gold + "print(0)\n";
    if ((u -= p_timeout) < 0) return "while True:\n    pass\n";
    if (rng.bernoulli(0.15 + 0.6 * lw)) return replace_all(gold, " = ", "=");
    if (rng.bernoulli(0.4)) return "# solution\n" + gold;
    return gold;
  }

 private:
  static std::string ensure_newline(std::string s) {
    if (s.empty() || s.back() != '\n') s += '\n';
    return s;
  }

  static std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
      s.replace(pos, from.size(), to);
      pos += to.size();
    }
    return s;
  }

  // Drops articles and any sentences after the second.
  static std::string shorten(const std::string& q) {
    std::string out;
    std::size_t sentences = 0;
    for (std::size_t i = 0; i < q.size() && sentences < 2; ++i) {
      out += q[i];
      if ((q[i] == '.' || q[i] == '?' || q[i] == '!') && (i + 1 == q.size() || q[i + 1] == ' ')) ++sentences;
    }
    for (std::string_view a : {" the ", " a ", " an "}) out = replace_all(out, a, " ");
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  }

  std::map<std::string, std::string> gold_;
  std::uint64_t seed_;
  std::atomic<int> calls_{0};
};

}  // namespace promptcause
