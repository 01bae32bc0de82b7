#pragma once

// OpenAI-compatible chat completions client. Deterministic settings
// (temperature 0), bounded retries with exponential backoff on transport
// failures and retryable status codes.

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridai/backend.hpp"

#include "httplib.h"

namespace gridai {

namespace remotedetail {

inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  std::size_t scheme = endpoint.find("://");
  std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  std::size_t slash = endpoint.find('/', host_start);
  if (slash == std::string::npos) return {endpoint, std::string()};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

inline std::string completions_path(std::string prefix) {
  const std::string leaf = "/chat/completions";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  if (prefix.size() >= leaf.size() &&
      prefix.compare(prefix.size() - leaf.size(), leaf.size(), leaf) == 0)
    return prefix;
  return prefix + leaf;
}

inline nlohmann::json wire_messages(const Conversation& conv) {
  nlohmann::json out = nlohmann::json::array();
  int call_seq = 0;
  for (const auto& m : conv.messages) {
    nlohmann::json jm;
    jm["role"] = role_name(m.role);
    if (m.role == Role::assistant && m.tool_call) {
      jm["content"] = m.content.empty() ? nlohmann::json() : nlohmann::json(m.content);
      std::string id = m.tool_call->id.empty()
                           ? "call_" + std::to_string(call_seq)
                           : m.tool_call->id;
      jm["tool_calls"] = nlohmann::json::array({nlohmann::json{
          {"id", id},
          {"type", "function"},
          {"function",
           {{"name", m.tool_call->name}, {"arguments", m.tool_call->args.dump()}}}}});
    } else {
      jm["content"] = m.content;
    }
    if (m.role == Role::tool) jm["tool_call_id"] = m.tool_call_id;
    ++call_seq;
    out.push_back(std::move(jm));
  }
  return out;
}

inline nlohmann::json wire_tools(const std::vector<ToolSchema>& tools) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : tools)
    out.push_back({{"type", "function"},
                   {"function",
                    {{"name", t.name},
                     {"description", t.description},
                     {"parameters", t.parameters}}}});
  return out;
}

}  // namespace remotedetail

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(BackendConfig config) : config_(std::move(config)) {
    auto [origin, prefix] = remotedetail::split_endpoint(config_.endpoint);
    origin_ = origin;
    path_ = remotedetail::completions_path(prefix);
    if (const char* key = std::getenv(config_.api_key_env.c_str()))
      api_key_ = key;
  }

  std::string name() const override { return "remote"; }

  CompletionResult complete(const Conversation& conv,
                            const std::vector<ToolSchema>& tools) override {
    if (config_.endpoint.empty() || config_.model.empty())
      return BackendError{BackendErrorKind::backend_unavailable,
                          "remote backend requires an endpoint and a model"};

    nlohmann::json body;
    body["model"] = conv.model_id.empty() ? config_.model : conv.model_id;
    body["temperature"] = 0;
    body["messages"] = remotedetail::wire_messages(conv);
    if (!tools.empty()) body["tools"] = remotedetail::wire_tools(tools);
    std::string payload = body.dump();

    std::string last_failure = "no attempt made";
    int attempts = config_.max_retries < 0 ? 1 : config_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0) {
        int ms = 100 << (attempt - 1);
        if (ms > 1600) ms = 1600;
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
      }
      httplib::Client client(origin_);
      client.set_connection_timeout(config_.timeout_seconds, 0);
      client.set_read_timeout(config_.timeout_seconds, 0);
      client.set_write_timeout(config_.timeout_seconds, 0);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = client.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_failure = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_failure = "status " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        return BackendError{BackendErrorKind::backend_unavailable,
                            "status " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200)};
      return parse_reply(res->body);
    }
    return BackendError{BackendErrorKind::backend_unavailable,
                        "gave up after " + std::to_string(attempts) + " attempts, last: " +
                            last_failure};
  }

 private:
  static CompletionResult parse_reply(const std::string& body) {
    nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty() || !doc["choices"][0].contains("message"))
      return BackendError{BackendErrorKind::backend_unavailable,
                          "malformed completion envelope"};
    const auto& wire = doc["choices"][0]["message"];
    std::string content;
    if (wire.contains("content") && wire["content"].is_string())
      content = wire["content"].get<std::string>();

    if (wire.contains("tool_calls") && wire["tool_calls"].is_array() &&
        !wire["tool_calls"].empty()) {
      const auto& call = wire["tool_calls"][0];
      if (!call.contains("function") || !call["function"].contains("name") ||
          !call["function"]["name"].is_string())
        return BackendError{BackendErrorKind::malformed_tool_call,
                            "tool call without a function name"};
      ToolCall tc;
      tc.name = call["function"]["name"].get<std::string>();
      if (call.contains("id") && call["id"].is_string()) tc.id = call["id"].get<std::string>();
      std::string args = "{}";
      if (call["function"].contains("arguments") && call["function"]["arguments"].is_string())
        args = call["function"]["arguments"].get<std::string>();
      if (args.empty()) args = "{}";
      nlohmann::json parsed = nlohmann::json::parse(args, nullptr, false);
      if (parsed.is_discarded() || !parsed.is_object())
        return BackendError{BackendErrorKind::malformed_tool_call,
                            "tool call arguments for " + tc.name + " are not a JSON object"};
      tc.args = std::move(parsed);
      Message reply = Message::assistant_tool_call(std::move(tc));
      reply.content = std::move(content);
      return reply;
    }
    return Message::assistant(std::move(content));
  }

  BackendConfig config_;
  std::string origin_;
  std::string path_;
  std::string api_key_;
};

}  // namespace gridai
