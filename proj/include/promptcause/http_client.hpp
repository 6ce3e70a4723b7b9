#pragma once

// Live chat-completions client over HTTP(S). Include only where a network
// client is needed; define CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL) for https.

#include <httplib.h>

#include <cstdlib>
#include <string>

#include <nlohmann/json.hpp>

#include "promptcause/error.hpp"
#include "promptcause/llm.hpp"

namespace promptcause {

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (!key || !*key) throw Error("environment variable " + cfg_.api_key_env + " is not set");
    key_ = key;
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw Error("endpoint must start with http:// or https://");
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    base_ = cfg_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
  }

  bool thread_safe() const override { return true; }

  ChatResponse complete(const ChatRequest& req) override {
    if (req.max_tokens <= 0) throw Error("max_tokens must be positive");
    nlohmann::json body{{"model", cfg_.model}, {"max_tokens", req.max_tokens}, {"n", 1}};
    if (req.temperature) body["temperature"] = *req.temperature;
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.text}});
    body["messages"] = msgs;

    httplib::Client cli(base_);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + key_}};
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request '" + req.id + "': " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError("request '" + req.id + "': HTTP " + std::to_string(res->status));
    try {
      const auto j = nlohmann::json::parse(res->body);
      const auto& choice = j.at("choices").at(0);
      ChatResponse out;
      const auto& content = choice.at("message").at("content");
      out.text = content.is_string() ? content.get<std::string>() : "";
      out.finish_reason = choice.value("finish_reason", "stop");
      if (j.contains("usage")) {
        out.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        out.completion_tokens = j["usage"].value("completion_tokens", 0);
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw TransportError("request '" + req.id + "': malformed response: " + e.what());
    }
  }

 private:
  HttpClientConfig cfg_;
  std::string key_;
  std::string base_;
  std::string path_;
};

}  // namespace promptcause
