#pragma once

// Conversational backend abstraction with tool calling. Three
// implementations live in sibling headers: remote (OpenAI-compatible HTTP),
// replay (scripted transcripts), heuristic (deterministic, model-free).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace gridai {

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json args = nlohmann::json::object();
  bool operator==(const ToolCall&) const = default;
};

struct Message {
  enum class Role { system, user, assistant, tool };
  Role role = Role::user;
  std::string content;
  std::optional<ToolCall> tool_call;  // assistant turns that invoke a tool
  std::string tool_call_id;           // tool turns: the call being answered

  static Message system(std::string text) { return {Role::system, std::move(text), {}, {}}; }
  static Message user(std::string text) { return {Role::user, std::move(text), {}, {}}; }
  static Message assistant(std::string text) { return {Role::assistant, std::move(text), {}, {}}; }
  static Message assistant_tool_call(ToolCall call) {
    return {Role::assistant, "", std::move(call), {}};
  }
  static Message tool_result(std::string call_id, std::string content) {
    return {Role::tool, std::move(content), {}, std::move(call_id)};
  }
};

using Role = Message::Role;

inline const char* role_name(Message::Role role) {
  switch (role) {
    case Message::Role::system: return "system";
    case Message::Role::user: return "user";
    case Message::Role::assistant: return "assistant";
    case Message::Role::tool: return "tool";
  }
  return "user";
}

struct Conversation {
  std::string model_id;
  std::vector<Message> messages;

  void add(Message m) { messages.push_back(std::move(m)); }

  const Message* last_of(Message::Role role) const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
      if (it->role == role) return &*it;
    return nullptr;
  }

  // Legal turn order: an assistant turn never directly follows another
  // assistant turn; tool turns only answer a pending assistant tool call.
  bool well_formed() const {
    bool pending_tool = false;
    for (std::size_t i = 0; i < messages.size(); ++i) {
      const Message& m = messages[i];
      switch (m.role) {
        case Message::Role::system:
          if (i != 0) return false;
          break;
        case Message::Role::assistant:
          if (i > 0 && messages[i - 1].role == Message::Role::assistant) return false;
          pending_tool = m.tool_call.has_value();
          break;
        case Message::Role::tool:
          if (!pending_tool) return false;
          pending_tool = false;
          break;
        case Message::Role::user:
          if (pending_tool) return false;
          break;
      }
    }
    return true;
  }

  // Role-tagged plain text view; what the heuristic backend pattern-matches.
  std::string joined_text() const {
    std::string out;
    for (const auto& m : messages) {
      out += "[";
      out += role_name(m.role);
      out += "]\n";
      out += m.content;
      out += "\n";
    }
    return out;
  }
};

struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters = nlohmann::json::object();
};

enum class BackendErrorKind { backend_unavailable, replay_mismatch, malformed_tool_call };

inline const char* backend_error_kind_name(BackendErrorKind k) {
  switch (k) {
    case BackendErrorKind::backend_unavailable: return "backend_unavailable";
    case BackendErrorKind::replay_mismatch: return "replay_mismatch";
    case BackendErrorKind::malformed_tool_call: return "malformed_tool_call";
  }
  return "backend_unavailable";
}

struct BackendError {
  BackendErrorKind kind = BackendErrorKind::backend_unavailable;
  std::string detail;
  int turn = -1;  // replay divergence index when known
};

using CompletionResult = std::variant<Message, BackendError>;

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual CompletionResult complete(const Conversation& conv,
                                    const std::vector<ToolSchema>& tools) = 0;
};

enum class BackendKind { remote, replay, heuristic };

inline const char* backend_kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::remote: return "remote";
    case BackendKind::replay: return "replay";
    case BackendKind::heuristic: return "heuristic";
  }
  return "heuristic";
}

inline std::optional<BackendKind> backend_kind_from(std::string_view name) {
  if (name == "remote") return BackendKind::remote;
  if (name == "replay") return BackendKind::replay;
  if (name == "heuristic") return BackendKind::heuristic;
  return std::nullopt;
}

struct BackendConfig {
  BackendKind kind = BackendKind::heuristic;
  std::string endpoint;         // remote: OpenAI-compatible base URL
  std::string model;            // remote: model name sent with each request
  std::string api_key_env = "GRIDAI_API_KEY";
  std::string transcript_path;  // replay: source; other kinds: record here when set
  int timeout_seconds = 60;
  int max_retries = 3;
};

// Canonical request form used for transcript keys: message list plus tool
// schemas sorted by name. Volatile fields (model id, tool-call ids) are
// excluded so a replayed run keys identically to the recorded one.
inline nlohmann::json normalize_request(const Conversation& conv,
                                        const std::vector<ToolSchema>& tools) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : conv.messages) {
    nlohmann::json jm{{"role", role_name(m.role)}, {"content", m.content}};
    if (m.tool_call)
      jm["tool_call"] = {{"name", m.tool_call->name}, {"args", m.tool_call->args}};
    msgs.push_back(std::move(jm));
  }
  std::vector<const ToolSchema*> sorted;
  for (const auto& t : tools) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const ToolSchema* a, const ToolSchema* b) { return a->name < b->name; });
  nlohmann::json jt = nlohmann::json::array();
  for (const auto* t : sorted)
    jt.push_back({{"name", t->name}, {"description", t->description},
                  {"parameters", t->parameters}});
  return {{"messages", std::move(msgs)}, {"tools", std::move(jt)}};
}

inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string request_key(const Conversation& conv, const std::vector<ToolSchema>& tools) {
  uint64_t h = fnv1a64(normalize_request(conv, tools).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// Message <-> transcript JSON.
inline nlohmann::json message_to_json(const Message& m) {
  nlohmann::json j{{"role", role_name(m.role)}, {"content", m.content}};
  if (m.tool_call)
    j["tool_call"] = {{"id", m.tool_call->id},
                      {"name", m.tool_call->name},
                      {"args", m.tool_call->args}};
  if (!m.tool_call_id.empty()) j["tool_call_id"] = m.tool_call_id;
  return j;
}

inline std::optional<Message> message_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("role") || !j.contains("content")) return std::nullopt;
  if (!j["role"].is_string() || !j["content"].is_string()) return std::nullopt;
  Message m;
  std::string role = j["role"].get<std::string>();
  if (role == "system") m.role = Message::Role::system;
  else if (role == "user") m.role = Message::Role::user;
  else if (role == "assistant") m.role = Message::Role::assistant;
  else if (role == "tool") m.role = Message::Role::tool;
  else return std::nullopt;
  m.content = j["content"].get<std::string>();
  if (j.contains("tool_call") && !j["tool_call"].is_null()) {
    ToolCall call;
    call.id = j["tool_call"].value("id", "");
    if (!j["tool_call"].contains("name") || !j["tool_call"]["name"].is_string())
      return std::nullopt;
    call.name = j["tool_call"]["name"].get<std::string>();
    call.args = j["tool_call"].value("args", nlohmann::json::object());
    m.tool_call = std::move(call);
  }
  m.tool_call_id = j.value("tool_call_id", "");
  return m;
}

}  // namespace gridai
