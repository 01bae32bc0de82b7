#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace gridai {

enum class AgentTarget { assess, generate, repair, mem_update };

inline const char* agent_target_name(AgentTarget t) {
  switch (t) {
    case AgentTarget::assess: return "assess";
    case AgentTarget::generate: return "generate";
    case AgentTarget::repair: return "repair";
    case AgentTarget::mem_update: return "mem_update";
  }
  return "assess";
}

// The routing currency of the whole pipeline: which agent runs next, on which
// sample, against which stored rule.
struct Action {
  AgentTarget target = AgentTarget::assess;
  std::string sample_id;
  std::optional<uint32_t> sid;

  bool operator==(const Action&) const = default;
};

inline bool action_valid(const Action& a) {
  switch (a.target) {
    case AgentTarget::repair: return a.sid.has_value();
    case AgentTarget::generate: return !a.sid.has_value();
    case AgentTarget::mem_update: return a.sid.has_value();
    case AgentTarget::assess: return true;
  }
  return false;
}

}  // namespace gridai
