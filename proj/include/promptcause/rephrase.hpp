#pragma once

// Meta-prompt construction, question rephrasing, code generation and the
// rephrasing sampling plan.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"
#include "promptcause/intention.hpp"
#include "promptcause/llm.hpp"
#include "promptcause/rng.hpp"

namespace promptcause {

inline constexpr std::string_view kRephraseHeader =
    "Rephrase the programming question below. Keep its meaning, input format, output format and constraints unchanged.";
inline constexpr std::string_view kRephraseFooter = "Return only the rephrased question.";
inline constexpr std::string_view kGenerateHeader =
    "Write a Python 3 program that solves the problem below. Read from standard input and write to standard output. "
    "Return only the code.";

namespace detail {

inline std::string question_block(std::string_view question) {
  return std::string(MockClient::kQuestionOpen) + std::string(question) + MockClient::kQuestionClose;
}

inline std::string_view group_label(IntentionGroup g) {
  switch (g) {
    case IntentionGroup::instruction: return "Instructions";
    case IntentionGroup::role: return "Role";
    case IntentionGroup::scenario: return "Scenario";
  }
  return "?";
}

}  // namespace detail

// Selected clauses appear grouped as instruction, role, scenario; registry
// order is kept within a group. An all-zero selection gives the bare template.
inline std::string build_meta_prompt(std::string_view question, const IntentionVector& selection, const IntentionRegistry& registry) {
  if (registry.empty()) throw Error("intention registry is empty");
  if (selection.size() != registry.size())
    throw LengthMismatch("selection has " + std::to_string(selection.size()) + " bits, registry has " + std::to_string(registry.size()));
  std::string out(kRephraseHeader);
  out += '\n';
  for (auto g : {IntentionGroup::instruction, IntentionGroup::role, IntentionGroup::scenario}) {
    std::string clauses;
    for (std::size_t i = 0; i < registry.size(); ++i)
      if (selection[i] && registry[i].group == g) clauses += (clauses.empty() ? "" : "; ") + registry[i].surface_text;
    if (!clauses.empty()) out += std::string(detail::group_label(g)) + ": " + clauses + ".\n";
  }
  out += kRephraseFooter;
  out += "\n\n";
  out += detail::question_block(question);
  return out;
}

inline std::string build_generation_prompt(std::string_view question) {
  return std::string(kGenerateHeader) + "\n\n" + detail::question_block(question);
}

// Body of the first fenced block when the text has one, otherwise the text.
inline std::string strip_code_fences(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) return std::string(text);
  auto body = text.find('\n', open);
  if (body == std::string_view::npos) return std::string(text);
  ++body;
  const auto close = text.find("```", body);
  std::string_view inner = text.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body);
  if (!inner.empty() && inner.back() == '\n') inner.remove_suffix(1);
  return std::string(inner);
}

struct LlmParams {
  std::optional<double> temperature;
  int max_tokens = 2000;
  RetryPolicy retry;
  std::size_t max_inflight = 4;
};

inline LlmParams default_rephrase_params() {
  LlmParams p;
  p.temperature = 0.7;
  return p;
}

inline std::string rephrase_question(std::string_view question, const IntentionVector& selection, const IntentionRegistry& registry,
                                     ChatClient& client, const LlmParams& params = default_rephrase_params(),
                                     const std::string& record_id = "q", AuditLog* audit = nullptr) {
  ChatRequest req{record_id, {{"user", build_meta_prompt(question, selection, registry)}}, params.temperature, params.max_tokens};
  return complete_with_retry(client, req, params.retry, audit).text;
}

struct GenerateResult {
  std::vector<std::string> solutions;  // slot order, empty slots skipped
  std::size_t empty_slots = 0;
  std::vector<std::string> errors;
};

// `n` independent completions with ids `record_id#slot`. Empty responses are
// recorded per slot; a transport failure that outlives the retries is thrown.
inline GenerateResult generate_code(std::string_view question, ChatClient& client, int n = 3, int max_tokens = 2000,
                                    const std::string& record_id = "q", const LlmParams& params = {}, AuditLog* audit = nullptr) {
  if (n < 1) throw Error("solution count must be >= 1");
  if (max_tokens < 1) throw Error("max_tokens must be positive");
  const auto prompt = build_generation_prompt(question);
  std::vector<ChatRequest> reqs;
  for (int s = 0; s < n; ++s) reqs.push_back({record_id + "#" + std::to_string(s), {{"user", prompt}}, params.temperature, max_tokens});
  const auto outcomes = complete_batch(client, reqs, params.retry, params.max_inflight, audit);
  GenerateResult out;
  for (const auto& o : outcomes) {
    if (o.response) {
      out.solutions.push_back(strip_code_fences(o.response->text));
    } else if (o.empty) {
      ++out.empty_slots;
      out.errors.push_back(o.error);
    } else {
      throw TransportError(o.error);
    }
  }
  return out;
}

// Which (origin, selection) pairs get rephrased: every single intention plus
// `random_combos` distinct seeded combinations with at least two bits.
struct SamplingPlan {
  bool one_hots = true;
  std::size_t random_combos = 4;
  std::uint64_t seed = 0;
};

inline std::vector<IntentionVector> plan_selections(const std::string& origin_id, std::size_t bits, const SamplingPlan& plan) {
  std::vector<IntentionVector> out;
  if (plan.one_hots)
    for (std::size_t i = 0; i < bits; ++i) {
      IntentionVector v(bits);
      v.set(i, true);
      out.push_back(std::move(v));
    }
  if (bits < 2 || plan.random_combos == 0) return out;
  // 2^bits - bits - 1 vectors have two or more bits set.
  const double available = bits >= 63 ? 1e18 : static_cast<double>((std::uint64_t{1} << bits) - bits - 1);
  const std::size_t want = static_cast<std::size_t>(std::min<double>(static_cast<double>(plan.random_combos), available));
  Rng rng(derive_seed(plan.seed, fnv1a(origin_id)));
  std::vector<IntentionVector> combos;
  while (combos.size() < want) {
    IntentionVector v(bits);
    for (std::size_t k = 0; k < bits; ++k) v.set(k, rng.bernoulli(0.25));
    if (v.count() < 2 || std::find(combos.begin(), combos.end(), v) != combos.end()) continue;
    combos.push_back(std::move(v));
  }
  out.insert(out.end(), combos.begin(), combos.end());
  return out;
}

inline std::string rephrased_id(const std::string& origin_id, const IntentionVector& v) { return origin_id + "~" + v.str(); }

// Origin id encoded in a record or request id (`origin~bits#slot`).
inline std::string origin_of_id(std::string_view id) {
  const auto cut = id.find_first_of("~#");
  return std::string(id.substr(0, cut));
}

struct RephraseOutcome {
  std::vector<PromptRecord> records;  // originals first (zero selection), then rephrasings
  std::vector<std::string> failures;  // "id: error"
};

// Originals are kept as the no-intention control. Rephrased records inherit
// tests and difficulty and start without solutions.
inline RephraseOutcome rephrase_dataset(const std::vector<PromptRecord>& dataset, const IntentionRegistry& registry, ChatClient& client,
                                        const SamplingPlan& plan, const LlmParams& params = default_rephrase_params(),
                                        AuditLog* audit = nullptr) {
  validate_registry(registry);
  RephraseOutcome out;
  std::vector<ChatRequest> reqs;
  std::vector<PromptRecord> pending;
  for (const auto& rec : dataset) {
    if (!rec.is_original()) continue;
    PromptRecord orig = rec;
    orig.intention_vector = IntentionVector(registry.size());
    orig.solutions.clear();
    out.records.push_back(orig);
    for (const auto& sel : plan_selections(rec.id, registry.size(), plan)) {
      PromptRecord r = orig;
      r.id = rephrased_id(rec.id, sel);
      r.origin_id = rec.id;
      r.intention_vector = sel;
      reqs.push_back({r.id, {{"user", build_meta_prompt(rec.question_text, sel, registry)}}, params.temperature, params.max_tokens});
      pending.push_back(std::move(r));
    }
  }
  const auto outcomes = complete_batch(client, reqs, params.retry, params.max_inflight, audit);
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (!outcomes[i].response) {
      out.failures.push_back(pending[i].id + ": " + outcomes[i].error);
      continue;
    }
    pending[i].question_text = outcomes[i].response->text;
    out.records.push_back(std::move(pending[i]));
  }
  return out;
}

struct GenerateOutcome {
  std::vector<PromptRecord> records;
  std::vector<std::string> failures;
  std::size_t empty_slots = 0;
};

// Replaces every record's solutions with `n` generated programs.
inline GenerateOutcome generate_dataset(const std::vector<PromptRecord>& records, ChatClient& client, int n = 3, const LlmParams& params = {},
                                        AuditLog* audit = nullptr) {
  GenerateOutcome out;
  for (const auto& rec : records) {
    PromptRecord r = rec;
    r.solutions.clear();
    try {
      auto g = generate_code(rec.question_text, client, n, params.max_tokens, rec.id, params, audit);
      r.solutions = std::move(g.solutions);
      out.empty_slots += g.empty_slots;
      for (auto& e : g.errors) out.failures.push_back(rec.id + ": " + e);
    } catch (const TransportError& e) {
      out.failures.push_back(rec.id + ": " + e.what());
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace promptcause
