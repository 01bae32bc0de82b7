#pragma once

// The four agent behaviors: assess, generate, repair, update-memory. Each is
// a bounded prompt/tool loop over the backend. Rules reach the repository
// only through update_memory; generate and repair stage their result in a
// rule buffer and emit the follow-up action.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridai/action.hpp"
#include "gridai/backend.hpp"
#include "gridai/http.hpp"
#include "gridai/match.hpp"
#include "gridai/memory_repo.hpp"
#include "gridai/prompts.hpp"
#include "gridai/rule.hpp"

namespace gridai {

struct AgentConfig {
  int max_candidate_retries = 3;  // M: candidate rounds within one conversation
  int candidates_per_round = 5;
  int max_tool_calls = 20;  // per agent invocation, model-driven and pipeline alike
};

struct AgentOptions {
  AgentConfig limits;
  bool tool_validation = true;     // off: candidates stored without engine gating
  bool use_representatives = true; // off: no payloads stored or shown in prompts
};

struct AgentFailure {
  enum class Kind { backend, budget, exhausted, invalid };
  Kind kind = Kind::invalid;
  std::string detail;
  std::optional<BackendError> backend_error;
};

inline const char* agent_failure_kind_name(AgentFailure::Kind k) {
  switch (k) {
    case AgentFailure::Kind::backend: return "backend";
    case AgentFailure::Kind::budget: return "budget";
    case AgentFailure::Kind::exhausted: return "exhausted";
    case AgentFailure::Kind::invalid: return "invalid";
  }
  return "invalid";
}

// verdict grammar: (True|False), (digits|None) with optional emphasis marks
struct AssessVerdict {
  bool is_variant = false;
  std::optional<uint32_t> sid;
};

inline std::optional<AssessVerdict> parse_verdict(const std::string& text) {
  static const std::regex grammar(R"(^[\s*]*(True|False)\s*,\s*([0-9]+|None)[\s*]*$)");
  std::smatch m;
  if (!std::regex_match(text, m, grammar)) return std::nullopt;
  AssessVerdict verdict;
  verdict.is_variant = m[1] == "True";
  if (m[2] != "None") {
    uint32_t sid = 0;
    for (char c : m[2].str()) sid = sid * 10 + static_cast<uint32_t>(c - '0');
    verdict.sid = sid;
  }
  if (verdict.is_variant && !verdict.sid) return std::nullopt;
  return verdict;
}

inline std::optional<uint32_t> first_integer(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && (text[i] < '0' || text[i] > '9')) ++i;
  if (i == text.size()) return std::nullopt;
  uint32_t value = 0;
  while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
    value = value * 10 + static_cast<uint32_t>(text[i] - '0');
    ++i;
  }
  return value;
}

// ---- tool registry ----

class ToolDispatcher {
 public:
  ToolDispatcher(MemoryRepo& repo, std::map<std::string, AttackSample> samples,
                 std::string staging_name, bool validated_writes)
      : repo_(repo),
        samples_(std::move(samples)),
        staging_file_(repo.staging_dir() / (sanitize(staging_name) + ".rules")),
        validated_writes_(validated_writes) {}

  static std::vector<ToolSchema> schemas() {
    auto str_array = [] {
      return nlohmann::json{{"type", "array"}, {"items", {{"type", "string"}}}};
    };
    std::vector<ToolSchema> out;
    out.push_back(
        {"query_memory", "Read stored rules; optional sid filter.",
         {{"type", "object"},
          {"properties",
           {{"sids", {{"type", "array"}, {"items", {{"type", "integer"}}}}}}}}});
    out.push_back({"save_rules",
                   "Stage candidate rules (replaces the current staging buffer).",
                   {{"type", "object"},
                    {"properties", {{"rules", str_array()}}},
                    {"required", {"rules"}}}});
    out.push_back(
        {"check_and_test",
         "Validate rule format and test alerts against samples. source is "
         "'staging' or 'memory'; sample_ids defaults to every known sample.",
         {{"type", "object"},
          {"properties",
           {{"source", {{"type", "string"}, {"enum", {"staging", "memory"}}}},
            {"sample_ids", str_array()}}},
          {"required", {"source"}}}});
    out.push_back(
        {"write_memory",
         "Store a rule under a sid, optionally with a representative sample.",
         {{"type", "object"},
          {"properties",
           {{"sid", {{"type", "integer"}}},
            {"rule_text", {{"type", "string"}}},
            {"representative_id", {{"type", "string"}}}}},
          {"required", {"sid", "rule_text"}}}});
    return out;
  }

  const std::vector<std::string>& staged() const { return staged_; }
  void clear_staged() { staged_.clear(); }

  void save(std::vector<std::string> rules) {
    staged_ = std::move(rules);
    std::ofstream out(staging_file_, std::ios::binary | std::ios::trunc);
    for (const auto& r : staged_) out << r << "\n";
  }

  ValidationReport check(const std::string& source, const std::vector<std::string>& ids) {
    std::string text = source == "memory" ? repo_.export_ruleset() : staged_text();
    std::vector<AttackSample> subjects;
    if (ids.empty()) {
      for (const auto& [id, sample] : samples_) subjects.push_back(sample);
    } else {
      for (const auto& id : ids) {
        auto it = samples_.find(id);
        if (it != samples_.end()) subjects.push_back(it->second);
      }
    }
    return check_and_test(text, subjects);
  }

  std::variant<uint64_t, RepoError> write(uint32_t sid, const std::string& rule_text,
                                          const std::optional<std::string>& repr_id) {
    RuleItem item;
    item.rule_sid = sid;
    item.rule_text = rule_text;
    if (repr_id) {
      auto found = samples_.find(*repr_id);
      if (found != samples_.end()) {
        item.repr_id = *repr_id;
        item.repr_raw = found->second.raw;
      } else if (auto existing = repo_.get(sid);
                 existing && existing->repr_id == *repr_id && existing->repr_raw) {
        item.repr_id = existing->repr_id;
        item.repr_raw = existing->repr_raw;
      } else {
        return RepoError{RepoErrorKind::not_found,
                         "representative sample " + *repr_id + " is not available here"};
      }
    }
    return validated_writes_ ? repo_.upsert(std::move(item))
                             : repo_.upsert_unchecked(std::move(item));
  }

  std::vector<RuleItem> query(const std::optional<std::vector<uint32_t>>& sids) const {
    if (!sids) return repo_.get_all();
    std::vector<RuleItem> out;
    for (uint32_t sid : *sids)
      if (auto item = repo_.get(sid)) out.push_back(*item);
    return out;
  }

  // Model-facing entry point; argument errors come back as data, never throw.
  nlohmann::json dispatch(const ToolCall& call) {
    auto non_negative = [](const nlohmann::json& v) {
      return v.is_number_unsigned() ||
             (v.is_number_integer() && v.get<int64_t>() >= 0);
    };
    if (call.name == "query_memory") {
      std::optional<std::vector<uint32_t>> filter;
      if (call.args.contains("sids")) {
        if (!call.args["sids"].is_array()) return arg_error("sids must be an array");
        std::vector<uint32_t> sids;
        for (const auto& v : call.args["sids"]) {
          if (!non_negative(v)) return arg_error("sids must hold positive integers");
          sids.push_back(v.get<uint32_t>());
        }
        filter = std::move(sids);
      }
      nlohmann::json items = nlohmann::json::array();
      for (const auto& item : query(filter)) {
        nlohmann::json ji{{"sid", item.rule_sid},
                          {"rule_text", item.rule_text},
                          {"revision", item.revision}};
        if (item.repr_id) ji["representative_id"] = *item.repr_id;
        items.push_back(std::move(ji));
      }
      return {{"items", std::move(items)}};
    }
    if (call.name == "save_rules") {
      if (!call.args.contains("rules") || !call.args["rules"].is_array())
        return arg_error("rules must be an array of strings");
      std::vector<std::string> rules;
      for (const auto& v : call.args["rules"]) {
        if (!v.is_string()) return arg_error("rules must be an array of strings");
        rules.push_back(v.get<std::string>());
      }
      save(std::move(rules));
      return {{"staged", staged_.size()}};
    }
    if (call.name == "check_and_test") {
      std::string source = call.args.value("source", "");
      if (source != "staging" && source != "memory")
        return arg_error("source must be 'staging' or 'memory'");
      std::vector<std::string> ids;
      if (call.args.contains("sample_ids")) {
        if (!call.args["sample_ids"].is_array()) return arg_error("sample_ids must be an array");
        for (const auto& v : call.args["sample_ids"]) {
          if (!v.is_string()) return arg_error("sample_ids must hold strings");
          ids.push_back(v.get<std::string>());
        }
      }
      return check(source, ids).to_json();
    }
    if (call.name == "write_memory") {
      if (!call.args.contains("sid") || !non_negative(call.args["sid"]) ||
          !call.args.contains("rule_text") || !call.args["rule_text"].is_string())
        return arg_error("write_memory needs sid (integer) and rule_text (string)");
      std::optional<std::string> repr_id;
      if (call.args.contains("representative_id")) {
        if (!call.args["representative_id"].is_string())
          return arg_error("representative_id must be a string");
        repr_id = call.args["representative_id"].get<std::string>();
      }
      auto result =
          write(call.args["sid"].get<uint32_t>(), call.args["rule_text"].get<std::string>(),
                repr_id);
      if (auto* err = std::get_if<RepoError>(&result))
        return {{"error",
                 {{"kind", repo_error_kind_name(err->kind)}, {"detail", err->detail}}}};
      return {{"revision", std::get<uint64_t>(result)}};
    }
    return {{"error", {{"kind", "unknown_tool"}, {"detail", call.name}}}};
  }

 private:
  static nlohmann::json arg_error(const std::string& detail) {
    return {{"error", {{"kind", "bad_arguments"}, {"detail", detail}}}};
  }

  static std::string sanitize(const std::string& name) {
    std::string out;
    for (char c : name)
      out.push_back((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                            (c >= '0' && c <= '9') || c == '-' || c == '_'
                        ? c
                        : '_');
    return out.empty() ? std::string("sample") : out;
  }

  std::string staged_text() const {
    std::string out;
    for (const auto& r : staged_) {
      out += r;
      out += "\n";
    }
    return out;
  }

  MemoryRepo& repo_;
  std::map<std::string, AttackSample> samples_;
  std::vector<std::string> staged_;
  std::filesystem::path staging_file_;
  bool validated_writes_ = true;
};

// ---- agent runtime ----

using EventSink = std::function<void(const nlohmann::json&)>;

struct StagedRule {
  uint32_t sid = 0;
  std::string text;
};

class AgentRuntime {
 public:
  AgentRuntime(Backend& backend, MemoryRepo& repo, AgentOptions options, EventSink sink = {})
      : backend_(backend), repo_(repo), options_(options), sink_(std::move(sink)) {}

  const std::optional<StagedRule>& staged_rule() const { return staged_; }
  void reset_buffer() { staged_.reset(); }
  void set_sink(EventSink sink) { sink_ = std::move(sink); }

  // Step 1: the engine itself decides covered samples. Step 2: the backend
  // judges variant-or-new over the stored rules.
  std::variant<Action, AgentFailure> assess(const AttackSample& sample) {
    int budget = options_.limits.max_tool_calls;
    ToolDispatcher tools(repo_, {{sample.id, sample}}, sample.id, options_.tool_validation);

    if (repo_.size() > 0) {
      auto report = run_tool_check(tools, "assess", "memory", {sample.id}, budget);
      if (auto* fail = std::get_if<AgentFailure>(&report)) return *fail;
      auto alerting = std::get<ValidationReport>(report).alerting_sids(sample.id);
      if (!alerting.empty()) {
        Action next{AgentTarget::mem_update, sample.id, *alerting.begin()};
        emit("assess", "action", {{"reason", "engine_alert"}, {"sid", *next.sid}});
        return next;
      }
    } else {
      emit("assess", "action", {{"reason", "empty_repo"}});
      return Action{AgentTarget::generate, sample.id, std::nullopt};
    }

    Conversation conv;
    conv.model_id = model_id_;
    add(conv, "assess", Message::system(prompts::system_role()));
    auto items = repo_.get_all();
    add(conv, "assess",
        Message::user(prompts::assess(items, options_.use_representatives, sample)));

    for (int attempt = 0; attempt < 2; ++attempt) {
      auto reply = chat("assess", conv, tools, budget);
      if (auto* fail = std::get_if<AgentFailure>(&reply)) return *fail;
      auto verdict = parse_verdict(std::get<Message>(reply).content);
      bool known = verdict && (!verdict->is_variant || repo_.get(*verdict->sid).has_value());
      if (verdict && known) {
        if (verdict->is_variant) {
          emit("assess", "action", {{"reason", "verdict_variant"}, {"sid", *verdict->sid}});
          return Action{AgentTarget::repair, sample.id, verdict->sid};
        }
        emit("assess", "action", {{"reason", "verdict_new"}});
        return Action{AgentTarget::generate, sample.id, std::nullopt};
      }
      if (attempt == 0) add(conv, "assess", Message::user(prompts::reprompt_verdict()));
    }
    emit("assess", "action", {{"reason", "unparseable_verdict_default"}});
    return Action{AgentTarget::generate, sample.id, std::nullopt};
  }

  // Two-stage generation with in-conversation retries (M) and full-restart
  // attempts. On success the winning rule sits in the rule buffer and the
  // returned action sends it to update_memory.
  std::variant<Action, AgentFailure> generate(const AttackSample& sample, int restart_budget) {
    if (restart_budget < 1) restart_budget = 1;
    std::optional<AgentFailure> soft_failure;
    for (int attempt = 0; attempt < restart_budget; ++attempt) {
      auto result = generate_once(sample);
      if (auto* action = std::get_if<Action>(&result)) return *action;
      AgentFailure fail = std::get<AgentFailure>(result);
      if (fail.kind == AgentFailure::Kind::backend) return fail;
      soft_failure = std::move(fail);
      emit("generate", "restart", {{"attempt", attempt + 1}});
    }
    return AgentFailure{AgentFailure::Kind::exhausted,
                        "generation budget exhausted: " +
                            (soft_failure ? soft_failure->detail : std::string("no rounds"))};
  }

  // Repair against the stored representative; each candidate must alert on
  // both payloads. M failed rounds hand the sample back to assessment.
  std::variant<Action, AgentFailure> repair(const AttackSample& sample, uint32_t sid) {
    auto item = repo_.get(sid);
    if (!item) {
      emit("repair", "action", {{"reason", "missing_rule"}, {"sid", sid}});
      return Action{AgentTarget::assess, sample.id, std::nullopt};
    }
    if (!item->has_representative()) {
      emit("repair", "action", {{"reason", "missing_representative"}, {"sid", sid}});
      return Action{AgentTarget::assess, sample.id, std::nullopt};
    }
    auto loaded = load_http_sample(*item->repr_raw, *item->repr_id, SampleLabel::attack);
    if (std::holds_alternative<IngestError>(loaded))
      return AgentFailure{AgentFailure::Kind::invalid,
                          "stored representative for sid " + std::to_string(sid) +
                              " does not parse"};
    AttackSample repr = std::get<AttackSample>(std::move(loaded));

    int budget = options_.limits.max_tool_calls;
    ToolDispatcher tools(repo_, {{sample.id, sample}, {repr.id, repr}}, sample.id,
                         options_.tool_validation);
    Conversation conv;
    conv.model_id = model_id_;
    add(conv, "repair", Message::system(prompts::system_role()));
    add(conv, "repair", Message::user(prompts::repair_analysis(sample, *item, true)));
    auto analysis = chat("repair", conv, tools, budget);
    if (auto* fail = std::get_if<AgentFailure>(&analysis)) return *fail;
    add(conv, "repair",
        Message::user(
            prompts::repair_rules(*item, sample, true, options_.limits.candidates_per_round)));

    const int rounds = options_.limits.max_candidate_retries;
    for (int round = 0; round < rounds; ++round) {
      tools.clear_staged();  // only rules staged during this round's chat count
      auto reply = chat("repair", conv, tools, budget);
      if (auto* fail = std::get_if<AgentFailure>(&reply)) return *fail;
      auto candidates = collect_candidates(tools, std::get<Message>(reply).content);
      bool last_round = round + 1 >= rounds;

      if (candidates.empty()) {
        if (!last_round)
          add(conv, "repair",
              Message::user(prompts::feedback_format(
                  {{ErrorKind::syntax, 0, "no candidate rules found in the reply"}})));
        continue;
      }

      if (!options_.tool_validation) {
        std::string text = renumber_rule(candidates.front(), sid).value_or(candidates.front());
        staged_ = StagedRule{sid, text};
        emit("repair", "staged", {{"sid", sid}, {"validated", false}});
        return Action{AgentTarget::mem_update, sample.id, sid};
      }

      auto checked = validate_candidates(tools, "repair", candidates,
                                         {sample.id, repr.id}, budget);
      if (auto* fail = std::get_if<AgentFailure>(&checked)) return *fail;
      ValidationReport report = std::get<ValidationReport>(std::move(checked));

      if (!report.format_ok) {
        if (!last_round)
          add(conv, "repair", Message::user(prompts::feedback_format(report.format_errors)));
        continue;
      }
      std::set<uint32_t> on_new = report.alerting_sids(sample.id);
      std::set<uint32_t> on_repr = report.alerting_sids(repr.id);
      std::set<uint32_t> qualifying;
      for (uint32_t s : on_new)
        if (on_repr.count(s)) qualifying.insert(s);

      if (qualifying.empty()) {
        if (!last_round) {
          std::vector<std::string> missed;
          if (on_new.empty()) missed.push_back(sample.id);
          if (on_repr.empty()) missed.push_back(repr.id);
          if (missed.empty()) missed = {sample.id, repr.id};
          add(conv, "repair", Message::user(prompts::feedback_no_alert(missed, {})));
        }
        continue;
      }

      auto chosen = choose_sid("repair", conv, tools, qualifying, budget);
      if (auto* fail = std::get_if<AgentFailure>(&chosen)) return *fail;
      auto text = candidate_text(candidates, std::get<uint32_t>(chosen));
      if (!text) continue;
      auto renumbered = renumber_rule(*text, sid);
      if (!renumbered) continue;

      auto recheck = revalidate(tools, "repair", *renumbered, {sample.id, repr.id}, budget);
      if (auto* fail = std::get_if<AgentFailure>(&recheck)) return *fail;
      if (!std::get<bool>(recheck)) continue;

      staged_ = StagedRule{sid, *renumbered};
      emit("repair", "staged", {{"sid", sid}, {"rule", *renumbered}});
      return Action{AgentTarget::mem_update, sample.id, sid};
    }
    emit("repair", "action", {{"reason", "rounds_exhausted"}, {"sid", sid}});
    return Action{AgentTarget::assess, sample.id, sid};
  }

  // Terminal step of every path: commit the buffered rule (or keep the stored
  // one) and settle which payload represents the rule from now on.
  std::variant<uint64_t, AgentFailure> update_memory(const Action& action,
                                                     const AttackSample& sample) {
    if (action.target != AgentTarget::mem_update || !action.sid)
      return AgentFailure{AgentFailure::Kind::invalid, "update_memory needs a mem_update action"};
    uint32_t sid = *action.sid;
    auto item = repo_.get(sid);
    if (staged_ && staged_->sid != sid)
      return AgentFailure{AgentFailure::Kind::invalid,
                          "rule buffer holds sid " + std::to_string(staged_->sid) +
                              ", action names " + std::to_string(sid)};
    if (!staged_ && !item)
      return AgentFailure{AgentFailure::Kind::invalid,
                          "nothing to store for sid " + std::to_string(sid)};
    std::string rule_text = staged_ ? staged_->text : item->rule_text;

    int budget = options_.limits.max_tool_calls;
    std::map<std::string, AttackSample> universe{{sample.id, sample}};
    std::optional<AttackSample> incumbent;
    if (options_.use_representatives && item && item->has_representative() &&
        *item->repr_id != sample.id) {
      auto loaded = load_http_sample(*item->repr_raw, *item->repr_id, SampleLabel::attack);
      if (std::holds_alternative<AttackSample>(loaded)) {
        incumbent = std::get<AttackSample>(std::move(loaded));
        universe.emplace(incumbent->id, *incumbent);
      }
    }
    ToolDispatcher tools(repo_, std::move(universe), sample.id, options_.tool_validation);

    if (!options_.use_representatives) {
      auto written = run_tool_write(tools, "mem_update", sid, rule_text, std::nullopt, budget);
      if (auto* fail = std::get_if<AgentFailure>(&written)) return *fail;
      if (auto* err = std::get_if<RepoError>(&written))
        return AgentFailure{AgentFailure::Kind::invalid,
                            std::string(repo_error_kind_name(err->kind)) + ": " + err->detail};
      staged_.reset();
      return std::get<uint64_t>(written);
    }

    std::string winner = sample.id;
    if (incumbent) {
      RuleItem view = *item;
      view.rule_text = rule_text;
      auto picked = pick_representative(view, *incumbent, sample, tools, budget);
      if (auto* fail = std::get_if<AgentFailure>(&picked)) return *fail;
      winner = std::get<std::string>(picked);
    }

    auto written = run_tool_write(tools, "mem_update", sid, rule_text, winner, budget);
    if (auto* fail = std::get_if<AgentFailure>(&written)) return *fail;
    if (auto* err = std::get_if<RepoError>(&written)) {
      // A representative that no longer alerts gets one shot with the other
      // payload before the cycle fails.
      if (err->kind == RepoErrorKind::representative_mismatch && incumbent) {
        std::string other = winner == sample.id ? incumbent->id : sample.id;
        emit("mem_update", "decision",
             {{"reason", "representative_mismatch_retry"}, {"picked", other}});
        auto retry = run_tool_write(tools, "mem_update", sid, rule_text, other, budget);
        if (auto* fail = std::get_if<AgentFailure>(&retry)) return *fail;
        if (auto* err2 = std::get_if<RepoError>(&retry))
          return AgentFailure{AgentFailure::Kind::invalid,
                              std::string(repo_error_kind_name(err2->kind)) + ": " +
                                  err2->detail};
        staged_.reset();
        return std::get<uint64_t>(retry);
      }
      return AgentFailure{AgentFailure::Kind::invalid,
                          std::string(repo_error_kind_name(err->kind)) + ": " + err->detail};
    }
    staged_.reset();
    return std::get<uint64_t>(written);
  }

 private:
  std::variant<Action, AgentFailure> generate_once(const AttackSample& sample) {
    int budget = options_.limits.max_tool_calls;
    ToolDispatcher tools(repo_, {{sample.id, sample}}, sample.id, options_.tool_validation);
    Conversation conv;
    conv.model_id = model_id_;
    add(conv, "generate", Message::system(prompts::system_role()));
    add(conv, "generate", Message::user(prompts::generate_analysis(sample)));
    auto analysis = chat("generate", conv, tools, budget);
    if (auto* fail = std::get_if<AgentFailure>(&analysis)) return *fail;

    uint32_t sid_floor = repo_.next_sid();
    add(conv, "generate",
        Message::user(prompts::generate_rules(sample, sid_floor,
                                              options_.limits.candidates_per_round)));

    const int rounds = options_.limits.max_candidate_retries;
    for (int round = 0; round < rounds; ++round) {
      tools.clear_staged();  // only rules staged during this round's chat count
      auto reply = chat("generate", conv, tools, budget);
      if (auto* fail = std::get_if<AgentFailure>(&reply)) return *fail;
      auto candidates = collect_candidates(tools, std::get<Message>(reply).content);
      bool last_round = round + 1 >= rounds;

      if (candidates.empty()) {
        if (!last_round)
          add(conv, "generate",
              Message::user(prompts::feedback_format(
                  {{ErrorKind::syntax, 0, "no candidate rules found in the reply"}})));
        continue;
      }

      if (!options_.tool_validation) {
        std::string text = candidates.front();
        uint32_t sid = sid_floor;
        auto parsed = parse_rule(text);
        if (auto* rule = std::get_if<Rule>(&parsed)) sid = rule->sid;
        staged_ = StagedRule{sid, text};
        emit("generate", "staged", {{"sid", sid}, {"validated", false}});
        return Action{AgentTarget::mem_update, sample.id, sid};
      }

      auto checked = validate_candidates(tools, "generate", candidates, {sample.id}, budget);
      if (auto* fail = std::get_if<AgentFailure>(&checked)) return *fail;
      ValidationReport report = std::get<ValidationReport>(std::move(checked));

      if (!report.format_ok) {
        if (!last_round)
          add(conv, "generate", Message::user(prompts::feedback_format(report.format_errors)));
        continue;
      }
      std::set<uint32_t> alerting = report.alerting_sids(sample.id);
      if (alerting.empty()) {
        if (!last_round)
          add(conv, "generate", Message::user(prompts::feedback_no_alert({sample.id}, {})));
        continue;
      }

      auto chosen = choose_sid("generate", conv, tools, alerting, budget);
      if (auto* fail = std::get_if<AgentFailure>(&chosen)) return *fail;
      auto text = candidate_text(candidates, std::get<uint32_t>(chosen));
      if (!text) continue;

      uint32_t allocated = repo_.next_sid();
      auto renumbered = renumber_rule(*text, allocated);
      if (!renumbered) continue;
      auto recheck = revalidate(tools, "generate", *renumbered, {sample.id}, budget);
      if (auto* fail = std::get_if<AgentFailure>(&recheck)) return *fail;
      if (!std::get<bool>(recheck)) continue;

      staged_ = StagedRule{allocated, *renumbered};
      emit("generate", "staged", {{"sid", allocated}, {"rule", *renumbered}});
      return Action{AgentTarget::mem_update, sample.id, allocated};
    }
    return AgentFailure{AgentFailure::Kind::exhausted, "no valid candidate within M rounds"};
  }

  std::variant<std::string, AgentFailure> pick_representative(const RuleItem& view,
                                                              const AttackSample& incumbent,
                                                              const AttackSample& sample,
                                                              ToolDispatcher& tools,
                                                              int& budget) {
    Conversation conv;
    conv.model_id = model_id_;
    add(conv, "mem_update", Message::system(prompts::system_role()));
    add(conv, "mem_update",
        Message::user(prompts::memory_update(view, incumbent.id, incumbent.raw, sample)));
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto reply = chat("mem_update", conv, tools, budget);
      if (auto* fail = std::get_if<AgentFailure>(&reply)) return *fail;
      std::string content = trim(std::get<Message>(reply).content);
      if (content == incumbent.id || content == sample.id) return content;
      bool has_incumbent = content.find(incumbent.id) != std::string::npos;
      bool has_sample = content.find(sample.id) != std::string::npos;
      if (has_incumbent != has_sample) return has_incumbent ? incumbent.id : sample.id;
      if (attempt == 0) add(conv, "mem_update", Message::user(prompts::reprompt_sample_id()));
    }
    emit("mem_update", "decision", {{"reason", "unparseable_choice_keep_incumbent"}});
    return incumbent.id;
  }

  // ---- shared plumbing ----

  static std::string trim(std::string_view text) {
    std::size_t b = 0, e = text.size();
    while (b < e && (text[b] == ' ' || text[b] == '\n' || text[b] == '\r' || text[b] == '\t'))
      ++b;
    while (e > b && (text[e - 1] == ' ' || text[e - 1] == '\n' || text[e - 1] == '\r' ||
                     text[e - 1] == '\t' || text[e - 1] == '*'))
      --e;
    while (b < e && text[b] == '*') ++b;
    return std::string(text.substr(b, e - b));
  }

  void emit(const char* agent, const char* event, nlohmann::json data) {
    if (!sink_) return;
    nlohmann::json record{{"agent", agent}, {"event", event}};
    record["data"] = std::move(data);
    sink_(record);
  }

  void add(Conversation& conv, const char* agent, Message m) {
    if (sink_) {
      nlohmann::json record{{"agent", agent}, {"event", "message"}};
      record["data"] = message_to_json(m);
      sink_(record);
    }
    conv.add(std::move(m));
  }

  bool spend(int& budget) { return --budget >= 0; }

  std::variant<Message, AgentFailure> chat(const char* agent, Conversation& conv,
                                           ToolDispatcher& tools, int& budget) {
    static const std::vector<ToolSchema> schemas = ToolDispatcher::schemas();
    while (true) {
      CompletionResult result = backend_.complete(conv, schemas);
      if (auto* err = std::get_if<BackendError>(&result))
        return AgentFailure{AgentFailure::Kind::backend,
                            std::string(backend_error_kind_name(err->kind)) + ": " + err->detail,
                            *err};
      Message reply = std::get<Message>(std::move(result));
      add(conv, agent, reply);
      if (!reply.tool_call) return reply;
      if (!spend(budget))
        return AgentFailure{AgentFailure::Kind::budget, "tool budget exhausted"};
      nlohmann::json out = tools.dispatch(*reply.tool_call);
      add(conv, agent, Message::tool_result(reply.tool_call->id, out.dump()));
    }
  }

  std::vector<std::string> collect_candidates(ToolDispatcher& tools, const std::string& reply) {
    std::vector<std::string> candidates = tools.staged();
    if (candidates.empty()) candidates = prompts::extract_alert_lines(reply);
    if (static_cast<int>(candidates.size()) > options_.limits.candidates_per_round)
      candidates.resize(static_cast<std::size_t>(options_.limits.candidates_per_round));
    tools.clear_staged();
    return candidates;
  }

  std::variant<ValidationReport, AgentFailure> run_tool_check(
      ToolDispatcher& tools, const char* agent, const std::string& source,
      const std::vector<std::string>& ids, int& budget) {
    if (!spend(budget)) return AgentFailure{AgentFailure::Kind::budget, "tool budget exhausted"};
    ValidationReport report = tools.check(source, ids);
    emit(agent, "tool_check",
         {{"source", source},
          {"format_ok", report.format_ok},
          {"alerts", report.alerts.size()}});
    return report;
  }

  std::variant<ValidationReport, AgentFailure> validate_candidates(
      ToolDispatcher& tools, const char* agent, const std::vector<std::string>& candidates,
      const std::vector<std::string>& ids, int& budget) {
    if (!spend(budget)) return AgentFailure{AgentFailure::Kind::budget, "tool budget exhausted"};
    tools.save(candidates);
    emit(agent, "tool_save", {{"staged", candidates.size()}});
    return run_tool_check(tools, agent, "staging", ids, budget);
  }

  std::variant<bool, AgentFailure> revalidate(ToolDispatcher& tools, const char* agent,
                                              const std::string& rule_text,
                                              const std::vector<std::string>& ids, int& budget) {
    auto checked = validate_candidates(tools, agent, {rule_text}, ids, budget);
    if (auto* fail = std::get_if<AgentFailure>(&checked)) return *fail;
    const ValidationReport& report = std::get<ValidationReport>(checked);
    if (!report.format_ok) return false;
    for (const auto& id : ids)
      if (report.alerting_sids(id).empty()) return false;
    return true;
  }

  std::variant<uint64_t, RepoError, AgentFailure> run_tool_write(
      ToolDispatcher& tools, const char* agent, uint32_t sid, const std::string& rule_text,
      std::optional<std::string> repr_id, int& budget) {
    if (!spend(budget)) return AgentFailure{AgentFailure::Kind::budget, "tool budget exhausted"};
    auto result = tools.write(sid, rule_text, repr_id);
    if (auto* err = std::get_if<RepoError>(&result)) {
      emit(agent, "tool_write",
           {{"sid", sid}, {"error", repo_error_kind_name(err->kind)}, {"detail", err->detail}});
      return *err;
    }
    emit(agent, "tool_write", {{"sid", sid}, {"revision", std::get<uint64_t>(result)}});
    return std::get<uint64_t>(result);
  }

  std::variant<uint32_t, AgentFailure> choose_sid(const char* agent, Conversation& conv,
                                                  ToolDispatcher& tools,
                                                  const std::set<uint32_t>& alerting,
                                                  int& budget) {
    if (alerting.size() == 1) return *alerting.begin();
    add(conv, agent, Message::user(prompts::select_rule(alerting)));
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto reply = chat(agent, conv, tools, budget);
      if (auto* fail = std::get_if<AgentFailure>(&reply)) return *fail;
      auto sid = first_integer(std::get<Message>(reply).content);
      if (sid && alerting.count(*sid)) return *sid;
      if (attempt == 0) add(conv, agent, Message::user(prompts::reprompt_selection()));
    }
    emit(agent, "decision", {{"reason", "selection_fallback_lowest"}});
    return *alerting.begin();
  }

  static std::optional<std::string> candidate_text(const std::vector<std::string>& candidates,
                                                   uint32_t sid) {
    for (const auto& text : candidates) {
      auto parsed = parse_rule(text);
      if (auto* rule = std::get_if<Rule>(&parsed))
        if (rule->sid == sid) return text;
    }
    return std::nullopt;
  }

  Backend& backend_;
  MemoryRepo& repo_;
  AgentOptions options_;
  EventSink sink_;
  std::string model_id_;
  std::optional<StagedRule> staged_;
};

}  // namespace gridai
