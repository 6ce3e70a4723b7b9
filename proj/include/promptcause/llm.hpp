#pragma once

// Chat-completion client abstraction: request/response types, a scriptable
// mock, a retrying caller with a JSONL audit log, and an HTTP client for
// chat-completions style endpoints.

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptcause/error.hpp"

namespace promptcause {

struct ChatMessage {
  std::string role;  // system, user, assistant
  std::string text;
};

struct ChatRequest {
  std::string id;  // caller-chosen, echoed in the audit log
  std::vector<ChatMessage> messages;
  std::optional<double> temperature;  // unset: provider default
  int max_tokens = 2000;

  const std::string& last_user_text() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
      if (it->role == "user") return it->text;
    throw Error("chat request '" + id + "' has no user message");
  }
};

struct ChatResponse {
  std::string text;
  std::string finish_reason = "stop";
  int prompt_tokens = 0;
  int completion_tokens = 0;

  bool normal() const { return finish_reason == "stop" || finish_reason == "length"; }
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
  // Whether complete() may be called from several threads at once.
  virtual bool thread_safe() const { return false; }
};

// Scriptable offline client. Modes are tried in order: injected failures,
// fixture table (keyed by the last user message), responder, echo.
class MockClient : public ChatClient {
 public:
  using Responder = std::function<ChatResponse(const ChatRequest&)>;

  static std::unique_ptr<MockClient> echo() { return std::make_unique<MockClient>(); }

  static std::unique_ptr<MockClient> fixtures(std::map<std::string, std::string> table) {
    auto c = std::make_unique<MockClient>();
    c->table_ = std::move(table);
    return c;
  }

  static std::unique_ptr<MockClient> responder(Responder r) {
    auto c = std::make_unique<MockClient>();
    c->responder_ = std::move(r);
    return c;
  }

  // The next `n` calls throw TransportError.
  void fail_next(int n) { failures_ = n; }

  int calls() const { return calls_; }

  ChatResponse complete(const ChatRequest& req) override {
    ++calls_;
    if (req.max_tokens <= 0) throw Error("max_tokens must be positive");
    if (failures_ > 0) {
      --failures_;
      throw TransportError("injected transport failure");
    }
    const auto& text = req.last_user_text();
    if (!table_.empty()) {
      auto it = table_.find(text);
      if (it == table_.end()) throw TransportError("no fixture for request '" + req.id + "'");
      return {it->second, "stop", 0, 0};
    }
    if (responder_) return responder_(req);
    return {echo_payload(text), "stop", 0, 0};
  }

  // The question block of a meta-prompt when present, otherwise the whole text.
  static std::string echo_payload(const std::string& text) {
    const auto open = text.find(kQuestionOpen);
    const auto close = text.rfind(kQuestionClose);
    if (open == std::string::npos || close == std::string::npos || close < open) return text;
    const auto begin = open + std::string_view(kQuestionOpen).size();
    return text.substr(begin, close - begin);
  }

  static constexpr const char* kQuestionOpen = "<question>\n";
  static constexpr const char* kQuestionClose = "\n</question>";

 private:
  std::map<std::string, std::string> table_;
  Responder responder_;
  int failures_ = 0;
  int calls_ = 0;
};

// Append-only JSONL record of every attempt. No timestamps, so logs from
// deterministic runs are reproducible.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(const std::string& path) : out_(std::make_unique<std::ofstream>(path, std::ios::app)) {
    if (!*out_) throw IoError("cannot open audit log " + path);
  }

  void record(const ChatRequest& req, int attempt, const ChatResponse* resp, const std::string& error) {
    nlohmann::json j{{"id", req.id}, {"attempt", attempt}, {"max_tokens", req.max_tokens}};
    if (req.temperature) j["temperature"] = *req.temperature;
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"text", m.text}});
    j["messages"] = msgs;
    if (resp)
      j["response"] = {{"text", resp->text},
                       {"finish_reason", resp->finish_reason},
                       {"prompt_tokens", resp->prompt_tokens},
                       {"completion_tokens", resp->completion_tokens}};
    if (!error.empty()) j["error"] = error;
    std::lock_guard lock(mu_);
    entries_.push_back(j.dump());
    if (out_) *out_ << entries_.back() << '\n' << std::flush;
  }

  const std::vector<std::string>& entries() const { return entries_; }

 private:
  std::unique_ptr<std::ofstream> out_;
  std::mutex mu_;
  std::vector<std::string> entries_;
};

struct RetryPolicy {
  int retries = 3;  // total attempts = retries + 1
  double base_delay_s = 1.0;
  double multiplier = 2.0;
  std::function<void(double)> sleep = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };

  // Delay before attempt k (k >= 1; attempt 0 is immediate).
  double delay_before(int attempt) const {
    double d = base_delay_s;
    for (int i = 1; i < attempt; ++i) d *= multiplier;
    return d;
  }
};

// Calls the client with retries on TransportError. A response that is empty or
// ends abnormally raises EmptyResponse without retrying.
inline ChatResponse complete_with_retry(ChatClient& client, const ChatRequest& req, const RetryPolicy& policy,
                                        AuditLog* audit = nullptr) {
  if (policy.retries < 0) throw Error("retries must be >= 0");
  std::string last_error;
  for (int attempt = 0; attempt <= policy.retries; ++attempt) {
    if (attempt > 0 && policy.sleep) policy.sleep(policy.delay_before(attempt));
    try {
      ChatResponse r = client.complete(req);
      if (audit) audit->record(req, attempt, &r, "");
      if (!r.normal() || r.text.empty())
        throw EmptyResponse("empty or abnormal response for request '" + req.id + "' (finish_reason " + r.finish_reason + ")");
      return r;
    } catch (const TransportError& e) {
      last_error = e.what();
      if (audit) audit->record(req, attempt, nullptr, last_error);
    }
  }
  throw TransportError("request '" + req.id + "' failed after " + std::to_string(policy.retries + 1) + " attempts: " + last_error);
}

// Runs requests with at most `max_inflight` concurrent calls (1 when the
// client is not thread-safe). Results keep request order; per-request errors
// are captured rather than thrown.
struct BatchOutcome {
  std::optional<ChatResponse> response;
  std::string error;
  bool empty = false;  // EmptyResponse
};

inline std::vector<BatchOutcome> complete_batch(ChatClient& client, const std::vector<ChatRequest>& reqs, const RetryPolicy& policy,
                                                std::size_t max_inflight, AuditLog* audit = nullptr) {
  std::vector<BatchOutcome> out(reqs.size());
  auto run_one = [&](std::size_t i) {
    try {
      out[i].response = complete_with_retry(client, reqs[i], policy, audit);
    } catch (const EmptyResponse& e) {
      out[i].empty = true;
      out[i].error = e.what();
    } catch (const Error& e) {
      out[i].error = e.what();
    }
  };
  const std::size_t workers = client.thread_safe() ? std::max<std::size_t>(1, max_inflight) : 1;
  if (workers == 1) {
    for (std::size_t i = 0; i < reqs.size(); ++i) run_one(i);
    return out;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, reqs.size()); ++w)
    pool.emplace_back([&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= reqs.size()) return;
          i = next++;
        }
        run_one(i);
      }
    });
  for (auto& t : pool) t.join();
  return out;
}

struct HttpClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 120.0;
};

}  // namespace promptcause
