#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridai/action.hpp"
#include "gridai/agents.hpp"
#include "gridai/backend.hpp"
#include "gridai/http.hpp"
#include "gridai/memory_repo.hpp"

namespace gridai {

struct OrchestratorConfig {
  int max_reassess_cycles = 2;
  int generation_restarts = 3;
  bool repair_enabled = true;
  bool tool_validation = true;
  bool use_representatives = true;
  AgentConfig agent;
};

struct Outcome {
  enum class Kind { already_covered, generated, repaired, forced_generate };

  std::string sample_id;
  Kind kind = Kind::generated;
  uint32_t final_sid = 0;
  int cycles_used = 0;
  std::string transcript_ref;
};

inline const char* outcome_kind_name(Outcome::Kind kind) {
  switch (kind) {
    case Outcome::Kind::already_covered: return "already_covered";
    case Outcome::Kind::generated: return "generated";
    case Outcome::Kind::repaired: return "repaired";
    case Outcome::Kind::forced_generate: return "forced_generate";
  }
  return "unknown";
}

inline nlohmann::json outcome_to_json(const Outcome& outcome) {
  return nlohmann::json{{"sample_id", outcome.sample_id},
                        {"kind", outcome_kind_name(outcome.kind)},
                        {"final_sid", outcome.final_sid},
                        {"cycles_used", outcome.cycles_used},
                        {"transcript_ref", outcome.transcript_ref}};
}

struct RunError {
  std::string sample_id;
  AgentFailure failure;
};

using SampleResult = std::variant<Outcome, RunError>;

struct RouteContext {
  int count = 0;
  bool forced = false;
};

// Drives one sample through the agent pipeline until a memory update lands
// or the pipeline gives up. Rules only reach the repository through the
// mem_update leg, so every successful outcome ends there.
class Orchestrator {
 public:
  struct Terminal {
    uint64_t revision = 0;
  };

  using RouteResult = std::variant<Action, Terminal, AgentFailure>;

  Orchestrator(Backend& backend, MemoryRepo& repo, OrchestratorConfig config,
               std::filesystem::path run_dir = {})
      : config_(config),
        run_dir_(std::move(run_dir)),
        runtime_(backend, repo,
                 AgentOptions{config.agent, config.tool_validation,
                              config.use_representatives}) {
    if (!run_dir_.empty()) std::filesystem::create_directories(run_dir_);
  }

  // Delivers one action to its agent and returns what comes back. Repair
  // handing control back to assess costs one reassess cycle; once the count
  // passes the threshold the next dispatch skips assessment entirely and
  // goes straight to generation.
  RouteResult route(const Action& action, const AttackSample& sample,
                    RouteContext& ctx) {
    if (!action_valid(action)) {
      return AgentFailure{AgentFailure::Kind::invalid,
                          "malformed action for target " +
                              std::string(agent_target_name(action.target))};
    }
    switch (action.target) {
      case AgentTarget::assess: {
        if (ctx.count > config_.max_reassess_cycles) {
          ctx.forced = true;
          return Action{AgentTarget::generate, sample.id, std::nullopt};
        }
        auto result = runtime_.assess(sample);
        if (auto* failure = std::get_if<AgentFailure>(&result)) return *failure;
        Action next = std::get<Action>(result);
        if (next.target == AgentTarget::repair && !config_.repair_enabled) {
          next = Action{AgentTarget::generate, sample.id, std::nullopt};
        }
        return next;
      }
      case AgentTarget::generate: {
        auto result = runtime_.generate(sample, config_.generation_restarts);
        if (auto* failure = std::get_if<AgentFailure>(&result)) return *failure;
        return std::get<Action>(result);
      }
      case AgentTarget::repair: {
        auto result = runtime_.repair(sample, *action.sid);
        if (auto* failure = std::get_if<AgentFailure>(&result)) return *failure;
        Action next = std::get<Action>(result);
        if (next.target == AgentTarget::assess) {
          ++ctx.count;
          if (ctx.count > config_.max_reassess_cycles) {
            ctx.forced = true;
            next = Action{AgentTarget::generate, sample.id, std::nullopt};
          }
        }
        return next;
      }
      case AgentTarget::mem_update: {
        auto result = runtime_.update_memory(action, sample);
        if (auto* failure = std::get_if<AgentFailure>(&result)) return *failure;
        return Terminal{std::get<uint64_t>(result)};
      }
    }
    return AgentFailure{AgentFailure::Kind::invalid, "unknown action target"};
  }

  SampleResult process_sample(const AttackSample& sample) {
    runtime_.reset_buffer();
    std::ofstream transcript;
    std::string transcript_ref;
    if (!run_dir_.empty()) {
      transcript_ref = transcript_name(sample.id);
      transcript.open(run_dir_ / transcript_ref,
                      std::ios::binary | std::ios::trunc);
      runtime_.set_sink([&transcript](const nlohmann::json& event) {
        transcript << event.dump() << '\n';
      });
    }
    auto result = drive(sample);
    if (!run_dir_.empty()) {
      runtime_.set_sink(nullptr);
      if (auto* outcome = std::get_if<Outcome>(&result)) {
        outcome->transcript_ref = transcript_ref;
      }
    }
    return result;
  }

  std::vector<SampleResult> run_stream(const std::vector<AttackSample>& samples) {
    std::vector<SampleResult> results;
    results.reserve(samples.size());
    std::ofstream outcomes;
    if (!run_dir_.empty()) {
      outcomes.open(run_dir_ / "outcomes.jsonl", std::ios::binary | std::ios::trunc);
    }
    for (const auto& sample : samples) {
      results.push_back(process_sample(sample));
      if (!outcomes.is_open()) continue;
      if (auto* outcome = std::get_if<Outcome>(&results.back())) {
        outcomes << outcome_to_json(*outcome).dump() << '\n';
      } else {
        const auto& error = std::get<RunError>(results.back());
        outcomes << nlohmann::json{{"sample_id", error.sample_id},
                                   {"error", agent_failure_kind_name(
                                                 error.failure.kind)},
                                   {"detail", error.failure.detail}}
                        .dump()
                 << '\n';
      }
    }
    return results;
  }

  AgentRuntime& runtime() { return runtime_; }
  const OrchestratorConfig& config() const { return config_; }

 private:
  SampleResult drive(const AttackSample& sample) {
    RouteContext ctx;
    Action action{AgentTarget::assess, sample.id, std::nullopt};
    AgentTarget previous = AgentTarget::assess;
    const int step_cap = 4 * config_.max_reassess_cycles + 16;
    for (int step = 0; step < step_cap; ++step) {
      auto result = route(action, sample, ctx);
      if (auto* failure = std::get_if<AgentFailure>(&result)) {
        return RunError{sample.id, *failure};
      }
      if (auto* terminal = std::get_if<Terminal>(&result)) {
        Outcome outcome;
        outcome.sample_id = sample.id;
        outcome.final_sid = action.sid.value_or(0);
        outcome.cycles_used = ctx.count;
        switch (previous) {
          case AgentTarget::assess:
            outcome.kind = Outcome::Kind::already_covered;
            break;
          case AgentTarget::repair:
            outcome.kind = Outcome::Kind::repaired;
            break;
          case AgentTarget::generate:
            outcome.kind = ctx.forced ? Outcome::Kind::forced_generate
                                      : Outcome::Kind::generated;
            break;
          case AgentTarget::mem_update:
            outcome.kind = Outcome::Kind::generated;
            break;
        }
        return outcome;
      }
      previous = action.target;
      action = std::get<Action>(result);
    }
    return RunError{sample.id,
                    AgentFailure{AgentFailure::Kind::invalid,
                                 "dispatch loop exceeded step budget"}};
  }

  static std::string transcript_name(const std::string& sample_id) {
    std::string name;
    for (char c : sample_id) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
      name.push_back(ok ? c : '_');
    }
    return name + ".jsonl";
  }

  OrchestratorConfig config_;
  std::filesystem::path run_dir_;
  AgentRuntime runtime_;
};

}  // namespace gridai
