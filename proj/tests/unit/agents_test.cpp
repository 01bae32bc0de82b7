#include "gridai/agents.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "gridai/backend_heuristic.hpp"
#include "gridai/orchestrator.hpp"
#include "gridai/prompts.hpp"
#include "support/tmpdir.hpp"

namespace gridai {
namespace {

AttackSample make_sample(const std::string& id, const std::string& uri,
                         const std::string& body = "") {
  std::string raw;
  if (body.empty()) {
    raw = "GET " + uri + " HTTP/1.1\r\nHost: target.example\r\nUser-Agent: probe\r\n\r\n";
  } else {
    raw = "POST " + uri + " HTTP/1.1\r\nHost: target.example\r\nContent-Length: " +
          std::to_string(body.size()) + "\r\n\r\n" + body;
  }
  auto loaded = load_http_sample(raw, id, SampleLabel::attack);
  return std::get<AttackSample>(std::move(loaded));
}

bool text_matches(const std::string& rule_text, const AttackSample& sample) {
  auto parsed = parse_rule(rule_text);
  auto* rule = std::get_if<Rule>(&parsed);
  return rule && rule_matches(*rule, sample);
}

std::string uri_rule(const std::string& content, uint32_t sid, bool nocase = false) {
  return "alert http any any -> any any (msg:\"t" + std::to_string(sid) +
         "\"; flow:to_server,established; http.uri; content:\"" + content + "\"; " +
         (nocase ? "nocase; " : "") + "classtype:web-application-attack; sid:" +
         std::to_string(sid) + "; rev:1;)";
}

// Scripted backend: returns a fixed reply sequence and keeps a copy of every
// conversation it was shown.
class SequenceBackend : public Backend {
 public:
  explicit SequenceBackend(std::vector<Message> replies) : replies_(std::move(replies)) {}

  std::string name() const override { return "sequence"; }

  CompletionResult complete(const Conversation& conv,
                            const std::vector<ToolSchema>&) override {
    ++calls;
    seen.push_back(conv);
    if (cursor_ < replies_.size()) return replies_[cursor_++];
    return BackendError{BackendErrorKind::backend_unavailable, "script exhausted"};
  }

  int calls = 0;
  std::vector<Conversation> seen;

 private:
  std::vector<Message> replies_;
  std::size_t cursor_ = 0;
};

// Always asks for another tool call; used to pin budget enforcement.
class LoopBackend : public Backend {
 public:
  std::string name() const override { return "loop"; }
  CompletionResult complete(const Conversation&, const std::vector<ToolSchema>&) override {
    ++calls;
    return Message::assistant_tool_call({"c" + std::to_string(calls), "query_memory",
                                         nlohmann::json::object()});
  }
  int calls = 0;
};

RuleItem seeded_item(uint32_t sid, const std::string& content, const AttackSample& repr,
                     bool nocase = false) {
  RuleItem item;
  item.rule_sid = sid;
  item.rule_text = uri_rule(content, sid, nocase);
  item.repr_id = repr.id;
  item.repr_raw = repr.raw;
  return item;
}

// ---- verdict grammar ----

TEST(ParseVerdict, AcceptsGrammarForms) {
  auto v = parse_verdict("True, 1000002");
  ASSERT_TRUE(v.has_value());
  EXPECT_TRUE(v->is_variant);
  EXPECT_EQ(v->sid, 1000002u);

  v = parse_verdict("**True, 1000002**");
  ASSERT_TRUE(v.has_value());
  EXPECT_TRUE(v->is_variant);

  v = parse_verdict("  False, None  ");
  ASSERT_TRUE(v.has_value());
  EXPECT_FALSE(v->is_variant);
  EXPECT_FALSE(v->sid.has_value());

  v = parse_verdict("False, 1000001");
  ASSERT_TRUE(v.has_value());
  EXPECT_FALSE(v->is_variant);
  EXPECT_EQ(v->sid, 1000001u);

  v = parse_verdict("True, 1000002\n");
  ASSERT_TRUE(v.has_value());
}

TEST(ParseVerdict, RejectsOffGrammarText) {
  EXPECT_FALSE(parse_verdict("True, None").has_value());
  EXPECT_FALSE(parse_verdict("true, 1000002").has_value());
  EXPECT_FALSE(parse_verdict("True 1000002").has_value());
  EXPECT_FALSE(parse_verdict("The answer is True, 1000002").has_value());
  EXPECT_FALSE(parse_verdict("True, 1000002 because it matches").has_value());
  EXPECT_FALSE(parse_verdict("").has_value());
  EXPECT_FALSE(parse_verdict("Yes").has_value());
}

TEST(ParseVerdict, InvariantHoldsUnderFuzz) {
  std::mt19937 rng(20260818);
  const std::vector<std::string> pieces = {"True",  "False", "None", ",",  " ",
                                           "*",     "10002", "sid",  "\n", "99",
                                           "maybe", ";",     "0"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::uniform_int_distribution<int> len(0, 6);
  for (int i = 0; i < 5000; ++i) {
    std::string text;
    int n = len(rng);
    for (int k = 0; k < n; ++k) text += pieces[pick(rng)];
    auto v = parse_verdict(text);
    if (v && v->is_variant) {
      EXPECT_TRUE(v->sid.has_value()) << "text: " << text;
    }
  }
}

// ---- tool registry ----

TEST(ToolDispatcher, SchemasListTheFourTools) {
  auto schemas = ToolDispatcher::schemas();
  ASSERT_EQ(schemas.size(), 4u);
  EXPECT_EQ(schemas[0].name, "query_memory");
  EXPECT_EQ(schemas[1].name, "save_rules");
  EXPECT_EQ(schemas[2].name, "check_and_test");
  EXPECT_EQ(schemas[3].name, "write_memory");
  for (const auto& s : schemas) EXPECT_EQ(s.parameters.at("type"), "object");
}

TEST(ToolDispatcher, SaveWritesStagingFileAndCheckRuns) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto sample = make_sample("pA", "/vuln/panel?tok=alphaOMEGA4");
  ToolDispatcher tools(repo, {{sample.id, sample}}, "pA", true);

  nlohmann::json saved = tools.dispatch(
      {"c1", "save_rules", {{"rules", {uri_rule("alphaOMEGA4", 1000001)}}}});
  EXPECT_EQ(saved.at("staged"), 1);
  std::ifstream staged(repo.staging_dir() / "pA.rules");
  ASSERT_TRUE(staged.good());
  std::string line;
  std::getline(staged, line);
  EXPECT_EQ(line, uri_rule("alphaOMEGA4", 1000001));

  nlohmann::json checked =
      tools.dispatch({"c2", "check_and_test", {{"source", "staging"}}});
  EXPECT_TRUE(checked.at("format_ok").get<bool>());
  EXPECT_EQ(checked.at("alerts").size(), 1u);
}

TEST(ToolDispatcher, WriteStoresRuleWithRepresentative) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto sample = make_sample("pA", "/vuln/panel?tok=alphaOMEGA4");
  ToolDispatcher tools(repo, {{sample.id, sample}}, "pA", true);

  nlohmann::json written = tools.dispatch({"c1",
                                           "write_memory",
                                           {{"sid", 1000001},
                                            {"rule_text", uri_rule("alphaOMEGA4", 1000001)},
                                            {"representative_id", "pA"}}});
  ASSERT_TRUE(written.contains("revision")) << written.dump();
  auto item = repo.get(1000001);
  ASSERT_TRUE(item.has_value());
  EXPECT_EQ(item->repr_id, "pA");

  nlohmann::json missing = tools.dispatch({"c2",
                                           "write_memory",
                                           {{"sid", 1000002},
                                            {"rule_text", uri_rule("alphaOMEGA4", 1000002)},
                                            {"representative_id", "ghost"}}});
  EXPECT_EQ(missing.at("error").at("kind"), "not_found");
}

TEST(ToolDispatcher, ArgumentErrorsComeBackAsData) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  ToolDispatcher tools(repo, {}, "p", true);

  EXPECT_EQ(tools.dispatch({"c", "save_rules", nlohmann::json::object()})
                .at("error").at("kind"),
            "bad_arguments");
  EXPECT_EQ(tools.dispatch({"c", "check_and_test", {{"source", "elsewhere"}}})
                .at("error").at("kind"),
            "bad_arguments");
  EXPECT_EQ(tools.dispatch({"c", "write_memory", {{"sid", 7}}}).at("error").at("kind"),
            "bad_arguments");
  EXPECT_EQ(tools.dispatch({"c", "query_memory", {{"sids", "nope"}}})
                .at("error").at("kind"),
            "bad_arguments");
  EXPECT_EQ(tools.dispatch({"c", "teleport", {}}).at("error").at("kind"), "unknown_tool");
}

TEST(ToolDispatcher, SanitizesStagingNames) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  ToolDispatcher tools(repo, {}, "p#1/x", true);
  tools.save({uri_rule("token", 1)});
  EXPECT_TRUE(std::filesystem::exists(repo.staging_dir() / "p_1_x.rules"));
}

// ---- assess ----

TEST(AssessAgent, EmptyRepoGoesStraightToGenerate) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  SequenceBackend backend({});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("p1", "/vuln/panel?tok=alphaOMEGA4");

  auto result = runtime.assess(sample);
  ASSERT_TRUE(std::holds_alternative<Action>(result));
  auto action = std::get<Action>(result);
  EXPECT_EQ(action.target, AgentTarget::generate);
  EXPECT_FALSE(action.sid.has_value());
  EXPECT_EQ(backend.calls, 0);
}

TEST(AssessAgent, EngineAlertShortCircuitsWithoutBackend) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?tok=alphaOMEGA4");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "alphaOMEGA4", repr))));
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000002, "panel", repr))));

  SequenceBackend backend({});
  AgentRuntime runtime(backend, repo, {});
  auto covered = make_sample("p1", "/vuln/panel?tok=alphaOMEGA4&x=1");

  auto result = runtime.assess(covered);
  ASSERT_TRUE(std::holds_alternative<Action>(result));
  auto action = std::get<Action>(result);
  EXPECT_EQ(action.target, AgentTarget::mem_update);
  EXPECT_EQ(action.sid, 1000001u) << "lowest alerting sid wins";
  EXPECT_EQ(backend.calls, 0);
}

TEST(AssessAgent, VariantVerdictBecomesRepairAction) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?tok=alphaOMEGA4");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "alphaOMEGA4", repr))));

  SequenceBackend backend({Message::assistant("**True, 1000001**")});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("p1", "/vuln/panel?tok=ALPHAomega4");

  auto result = runtime.assess(sample);
  ASSERT_TRUE(std::holds_alternative<Action>(result));
  auto action = std::get<Action>(result);
  EXPECT_EQ(action.target, AgentTarget::repair);
  EXPECT_EQ(action.sid, 1000001u);
  EXPECT_EQ(backend.calls, 1);
}

TEST(AssessAgent, UnknownSidGetsOneRepromptThenDefaultsToGenerate) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?tok=alphaOMEGA4");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "alphaOMEGA4", repr))));

  SequenceBackend backend({Message::assistant("True, 999"),
                           Message::assistant("False, None")});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("p1", "/elsewhere/form?x=1");

  auto result = runtime.assess(sample);
  ASSERT_TRUE(std::holds_alternative<Action>(result));
  EXPECT_EQ(std::get<Action>(result).target, AgentTarget::generate);
  EXPECT_EQ(backend.calls, 2);
  ASSERT_EQ(backend.seen.size(), 2u);
  EXPECT_NE(backend.seen[1].messages.back().content.find("required format"),
            std::string::npos);
}

TEST(AssessAgent, TwoUnparseableVerdictsDefaultToGenerate) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?tok=alphaOMEGA4");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "alphaOMEGA4", repr))));

  SequenceBackend backend({Message::assistant("it is definitely a variant"),
                           Message::assistant("hard to say")});
  AgentRuntime runtime(backend, repo, {});
  auto result = runtime.assess(make_sample("p1", "/elsewhere/form?x=1"));
  ASSERT_TRUE(std::holds_alternative<Action>(result));
  EXPECT_EQ(std::get<Action>(result).target, AgentTarget::generate);
  EXPECT_EQ(backend.calls, 2);
}

TEST(AssessAgent, BudgetViolationAbortsDeterministically) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?tok=alphaOMEGA4");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "alphaOMEGA4", repr))));

  LoopBackend backend;
  AgentRuntime runtime(backend, repo, {});
  auto result = runtime.assess(make_sample("p1", "/elsewhere/form?x=1"));
  ASSERT_TRUE(std::holds_alternative<AgentFailure>(result));
  EXPECT_EQ(std::get<AgentFailure>(result).kind, AgentFailure::Kind::budget);
  EXPECT_EQ(backend.calls, 20) << "engine precheck plus nineteen model tool calls";
}

// ---- generate ----

TEST(GenerateAgent, StagesRuleAndDefersRepoWriteToMemoryUpdate) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  HeuristicBackend backend;
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("p1", "/vuln/panel?cmd=run&tok=ALPHA_beta_gamma");

  auto result = runtime.generate(sample, 3);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  auto action = std::get<Action>(result);
  EXPECT_EQ(action.target, AgentTarget::mem_update);
  EXPECT_EQ(action.sid, 1000001u);
  ASSERT_TRUE(runtime.staged_rule().has_value());
  EXPECT_EQ(runtime.staged_rule()->sid, 1000001u);
  EXPECT_EQ(repo.size(), 0u) << "generate must not write to the repository";

  auto revision = runtime.update_memory(action, sample);
  ASSERT_TRUE(std::holds_alternative<uint64_t>(revision))
      << std::get<AgentFailure>(revision).detail;
  EXPECT_EQ(repo.size(), 1u);
  EXPECT_FALSE(runtime.staged_rule().has_value()) << "buffer clears after commit";
  auto item = repo.get(1000001);
  ASSERT_TRUE(item.has_value());
  EXPECT_EQ(item->repr_id, "p1");
  EXPECT_TRUE(text_matches(item->rule_text, sample));
}

TEST(GenerateAgent, RenumbersWinnerToAllocatedSid) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/legacy/form?key=oldTOKENval");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000007, "oldTOKENval", repr))));

  SequenceBackend backend({Message::assistant("payload study"),
                           Message::assistant(uri_rule("ZZidentityZZ", 4242))});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("p1", "/forced/path?q=ZZidentityZZ");

  auto result = runtime.generate(sample, 1);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  EXPECT_EQ(std::get<Action>(result).sid, 1000008u);
  ASSERT_TRUE(runtime.staged_rule().has_value());
  EXPECT_NE(runtime.staged_rule()->text.find("sid:1000008;"), std::string::npos);
  ASSERT_EQ(backend.seen.size(), 2u);
  EXPECT_NE(backend.seen[1].messages.back().content.find("1000008"), std::string::npos)
      << "rules prompt announces the sid floor";
}

TEST(GenerateAgent, FormatFeedbackPrecedesSecondRound) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  std::string broken =
      "alert http any any -> any any (msg:\"b\"; is; content:\"ZZidentityZZ\"; "
      "sid:1000001; rev:1;)";
  SequenceBackend backend({Message::assistant("payload study"),
                           Message::assistant(broken),
                           Message::assistant(uri_rule("ZZidentityZZ", 1000001))});
  AgentConfig limits;
  limits.max_candidate_retries = 2;
  AgentRuntime runtime(backend, repo, {limits});
  auto sample = make_sample("p1", "/forced/path?q=ZZidentityZZ");

  auto result = runtime.generate(sample, 1);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  EXPECT_EQ(backend.calls, 3);
  const std::string& feedback = backend.seen[2].messages.back().content;
  EXPECT_NE(feedback.find(prompts::kFeedbackMarker), std::string::npos);
  EXPECT_NE(feedback.find("unknown_keyword"), std::string::npos);
}

TEST(GenerateAgent, NoAlertFeedbackNamesTheSample) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  SequenceBackend backend({Message::assistant("payload study"),
                           Message::assistant(uri_rule("not_in_payload", 1000001)),
                           Message::assistant(uri_rule("ZZidentityZZ", 1000001))});
  AgentConfig limits;
  limits.max_candidate_retries = 2;
  AgentRuntime runtime(backend, repo, {limits});
  auto sample = make_sample("p1", "/forced/path?q=ZZidentityZZ");

  auto result = runtime.generate(sample, 1);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  const std::string& feedback = backend.seen[2].messages.back().content;
  EXPECT_NE(feedback.find(prompts::kFeedbackMarker), std::string::npos);
  EXPECT_NE(feedback.find("p1"), std::string::npos);
}

TEST(GenerateAgent, RestartRecoversFromDryRound) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  SequenceBackend backend({Message::assistant("payload study"),
                           Message::assistant("no rules this time"),
                           Message::assistant("payload study again"),
                           Message::assistant(uri_rule("ZZidentityZZ", 1000001))});
  AgentConfig limits;
  limits.max_candidate_retries = 1;
  AgentRuntime runtime(backend, repo, {limits});
  auto sample = make_sample("p1", "/forced/path?q=ZZidentityZZ");

  auto result = runtime.generate(sample, 2);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  EXPECT_EQ(backend.calls, 4) << "full conversation restart after exhausted rounds";
}

TEST(GenerateAgent, ExhaustedRestartsReportFailure) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  SequenceBackend backend({Message::assistant("payload study"),
                           Message::assistant("still thinking")});
  AgentConfig limits;
  limits.max_candidate_retries = 1;
  AgentRuntime runtime(backend, repo, {limits});

  auto result = runtime.generate(make_sample("p1", "/forced/path?q=ZZidentityZZ"), 1);
  ASSERT_TRUE(std::holds_alternative<AgentFailure>(result));
  EXPECT_EQ(std::get<AgentFailure>(result).kind, AgentFailure::Kind::exhausted);
}

TEST(GenerateAgent, ValidationOffStoresFirstCandidateVerbatim) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  std::string broken =
      "alert http any any -> any any (msg:\"b\"; is; content:\"x\"; sid:900001; rev:1;)";
  SequenceBackend backend({Message::assistant("payload study"),
                           Message::assistant(broken)});
  AgentOptions options;
  options.tool_validation = false;
  AgentRuntime runtime(backend, repo, options);
  auto sample = make_sample("p1", "/forced/path?q=ZZidentityZZ");

  auto result = runtime.generate(sample, 1);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  auto action = std::get<Action>(result);
  EXPECT_EQ(action.sid, 1000001u) << "unparseable candidate takes the floor sid";

  auto revision = runtime.update_memory(action, sample);
  ASSERT_TRUE(std::holds_alternative<uint64_t>(revision))
      << std::get<AgentFailure>(revision).detail;
  auto item = repo.get(1000001);
  ASSERT_TRUE(item.has_value());
  EXPECT_EQ(item->rule_text, broken) << "stored without engine gating";
  auto report = check_and_test(repo.export_ruleset(), {sample});
  EXPECT_FALSE(report.format_ok);
}

// ---- repair ----

TEST(RepairAgent, MissingRuleOrRepresentativeHandsBackToAssess) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  SequenceBackend backend({});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("p1", "/vuln/panel?x=1");

  auto result = runtime.repair(sample, 4040);
  ASSERT_TRUE(std::holds_alternative<Action>(result));
  EXPECT_EQ(std::get<Action>(result).target, AgentTarget::assess);
  EXPECT_FALSE(std::get<Action>(result).sid.has_value());

  RuleItem bare;
  bare.rule_sid = 1000001;
  bare.rule_text = uri_rule("alphaOMEGA4", 1000001);
  ASSERT_TRUE(std::holds_alternative<uint64_t>(repo.upsert(bare)));
  result = runtime.repair(sample, 1000001);
  ASSERT_TRUE(std::holds_alternative<Action>(result));
  EXPECT_EQ(std::get<Action>(result).target, AgentTarget::assess);
  EXPECT_FALSE(std::get<Action>(result).sid.has_value());
  EXPECT_EQ(backend.calls, 0);
}

TEST(RepairAgent, HeuristicRepairCoversBothPayloads) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?cmd=run&tok=ALPHA_beta_gamma");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "ALPHA_beta_gamma", repr))));

  HeuristicBackend backend;
  AgentRuntime runtime(backend, repo, {});
  auto evader = make_sample("p2", "/vuln/panel?cmd=run&tok=alpha_BETA_gamma&pad=1");
  ASSERT_FALSE(text_matches(repo.get(1000001)->rule_text, evader));

  auto result = runtime.repair(evader, 1000001);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  auto action = std::get<Action>(result);
  EXPECT_EQ(action.target, AgentTarget::mem_update);
  EXPECT_EQ(action.sid, 1000001u);
  ASSERT_TRUE(runtime.staged_rule().has_value());
  EXPECT_EQ(runtime.staged_rule()->sid, 1000001u);
  EXPECT_TRUE(text_matches(runtime.staged_rule()->text, evader));
  EXPECT_TRUE(text_matches(runtime.staged_rule()->text, repr));
  EXPECT_EQ(repo.get(1000001)->rule_text, uri_rule("ALPHA_beta_gamma", 1000001))
      << "repair must not touch the repository";
}

TEST(RepairAgent, ExhaustedRoundsReturnToAssessWithSid) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/other/othertoken");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "othertoken", repr))));

  // Candidates alert on the new payload only, never the representative.
  SequenceBackend backend({Message::assistant("diagnosis"),
                           Message::assistant(uri_rule("ZZidentityZZ", 1000101)),
                           Message::assistant(uri_rule("ZZidentityZZ", 1000102))});
  AgentConfig limits;
  limits.max_candidate_retries = 2;
  AgentRuntime runtime(backend, repo, {limits});
  auto sample = make_sample("p1", "/forced/path?q=ZZidentityZZ");

  auto result = runtime.repair(sample, 1000001);
  ASSERT_TRUE(std::holds_alternative<Action>(result))
      << std::get<AgentFailure>(result).detail;
  auto action = std::get<Action>(result);
  EXPECT_EQ(action.target, AgentTarget::assess);
  EXPECT_EQ(action.sid, 1000001u);
  EXPECT_EQ(backend.calls, 3);
  EXPECT_FALSE(runtime.staged_rule().has_value());
}

// ---- update_memory ----

TEST(MemoryUpdateAgent, RejectsForeignActionsAndEmptyState) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  SequenceBackend backend({});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("p1", "/vuln/panel?x=1");

  auto bad = runtime.update_memory({AgentTarget::generate, "p1", std::nullopt}, sample);
  ASSERT_TRUE(std::holds_alternative<AgentFailure>(bad));
  EXPECT_EQ(std::get<AgentFailure>(bad).kind, AgentFailure::Kind::invalid);

  auto empty = runtime.update_memory({AgentTarget::mem_update, "p1", 1000001}, sample);
  ASSERT_TRUE(std::holds_alternative<AgentFailure>(empty));
  EXPECT_EQ(std::get<AgentFailure>(empty).kind, AgentFailure::Kind::invalid);
}

TEST(MemoryUpdateAgent, AlreadyCoveredKeepsRuleAndPrefersBiggerPayload) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?tok=alphaOMEGA4");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "alphaOMEGA4", repr, true))));
  std::string stored = repo.get(1000001)->rule_text;

  HeuristicBackend backend;
  AgentRuntime runtime(backend, repo, {});
  auto bigger = make_sample("p9", "/vuln/panel?tok=ALPHAomega4&extra=payload&more=1");

  auto result = runtime.update_memory({AgentTarget::mem_update, "p9", 1000001}, bigger);
  ASSERT_TRUE(std::holds_alternative<uint64_t>(result))
      << std::get<AgentFailure>(result).detail;
  auto item = repo.get(1000001);
  EXPECT_EQ(item->rule_text, stored) << "covered samples never change the rule";
  EXPECT_EQ(item->repr_id, "p9");

  auto smaller = make_sample("p3", "/vuln/panel?tok=ALPHAomega4");
  result = runtime.update_memory({AgentTarget::mem_update, "p3", 1000001}, smaller);
  ASSERT_TRUE(std::holds_alternative<uint64_t>(result));
  EXPECT_EQ(repo.get(1000001)->repr_id, "p9") << "incumbent wins when not outgrown";
}

TEST(MemoryUpdateAgent, RepresentativesOffWritesWithoutBackend) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/vuln/panel?tok=alphaOMEGA4");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "alphaOMEGA4", repr, true))));

  SequenceBackend backend({});
  AgentOptions options;
  options.use_representatives = false;
  AgentRuntime runtime(backend, repo, options);
  auto sample = make_sample("p2", "/vuln/panel?tok=ALPHAomega4");

  auto result = runtime.update_memory({AgentTarget::mem_update, "p2", 1000001}, sample);
  ASSERT_TRUE(std::holds_alternative<uint64_t>(result))
      << std::get<AgentFailure>(result).detail;
  EXPECT_EQ(backend.calls, 0);
  EXPECT_FALSE(repo.get(1000001)->has_representative());
}

TEST(MemoryUpdateAgent, StaleRepresentativeGetsOneRetryWithOtherPayload) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("pA", "/shared/path?tok=SHAREDtok&side=a");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "SHAREDtok&side=a", repr))));

  // Repair stages a rule that alerts on both current payloads.
  SequenceBackend backend({Message::assistant("diagnosis"),
                           Message::assistant(uri_rule("SHAREDtok", 1000001)),
                           Message::assistant("pX")});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("pB", "/shared/path?tok=SHAREDtok&side=b");
  auto repaired = runtime.repair(sample, 1000001);
  ASSERT_TRUE(std::holds_alternative<Action>(repaired))
      << std::get<AgentFailure>(repaired).detail;
  ASSERT_TRUE(runtime.staged_rule().has_value());

  // Meanwhile the stored representative drifts to a payload the staged rule
  // cannot alert on; the selection then names that stale payload.
  RuleItem drifted = *repo.get(1000001);
  drifted.repr_id = "pX";
  drifted.repr_raw = make_sample("pX", "/nothing/here").raw;
  repo.upsert_unchecked(drifted);

  std::vector<nlohmann::json> events;
  runtime.set_sink([&events](const nlohmann::json& e) { events.push_back(e); });
  auto result = runtime.update_memory({AgentTarget::mem_update, "pB", 1000001}, sample);
  ASSERT_TRUE(std::holds_alternative<uint64_t>(result))
      << std::get<AgentFailure>(result).detail;
  EXPECT_EQ(repo.get(1000001)->repr_id, "pB");

  bool saw_retry = false;
  for (const auto& e : events) {
    if (e.value("event", "") == "decision" &&
        e["data"].value("reason", "") == "representative_mismatch_retry")
      saw_retry = true;
  }
  EXPECT_TRUE(saw_retry);
}

TEST(MemoryUpdateAgent, MismatchWithoutIncumbentFailsTheCycle) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  RuleItem bare;
  bare.rule_sid = 1000005;
  bare.rule_text = uri_rule("zzznotpresent", 1000005);
  repo.upsert_unchecked(bare);

  SequenceBackend backend({});
  AgentRuntime runtime(backend, repo, {});
  auto sample = make_sample("pB", "/vuln/panel?x=1");
  auto result = runtime.update_memory({AgentTarget::mem_update, "pB", 1000005}, sample);
  ASSERT_TRUE(std::holds_alternative<AgentFailure>(result));
  EXPECT_EQ(std::get<AgentFailure>(result).kind, AgentFailure::Kind::invalid);
  EXPECT_NE(std::get<AgentFailure>(result).detail.find("representative_mismatch"),
            std::string::npos);
}

// ---- orchestrator ----

OrchestratorConfig quiet_config() {
  OrchestratorConfig config;
  return config;
}

TEST(Orchestrator, RejectsMalformedActions) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  HeuristicBackend backend;
  Orchestrator orch(backend, repo, quiet_config());
  auto sample = make_sample("p1", "/vuln/panel?x=1");

  RouteContext ctx;
  auto result = orch.route({AgentTarget::repair, "p1", std::nullopt}, sample, ctx);
  ASSERT_TRUE(std::holds_alternative<AgentFailure>(result));
  EXPECT_EQ(std::get<AgentFailure>(result).kind, AgentFailure::Kind::invalid);
}

TEST(Orchestrator, GenerateRepairCoveredLifecycle) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  HeuristicBackend backend;
  Orchestrator orch(backend, repo, quiet_config());

  auto first = make_sample("p1", "/vuln/panel?cmd=run&tok=ALPHA_beta_gamma");
  auto evader = make_sample("p2", "/vuln/panel?cmd=run&tok=alpha_BETA_gamma&pad=1");
  auto covered = make_sample("p3", "/vuln/panel?cmd=run&tok=alpha_beta_gamma&z=9");

  auto r1 = orch.process_sample(first);
  ASSERT_TRUE(std::holds_alternative<Outcome>(r1))
      << std::get<RunError>(r1).failure.detail;
  EXPECT_EQ(std::get<Outcome>(r1).kind, Outcome::Kind::generated);
  EXPECT_EQ(std::get<Outcome>(r1).final_sid, 1000001u);
  EXPECT_EQ(repo.size(), 1u);

  auto r2 = orch.process_sample(evader);
  ASSERT_TRUE(std::holds_alternative<Outcome>(r2))
      << std::get<RunError>(r2).failure.detail;
  EXPECT_EQ(std::get<Outcome>(r2).kind, Outcome::Kind::repaired);
  EXPECT_EQ(std::get<Outcome>(r2).final_sid, 1000001u);
  EXPECT_EQ(repo.size(), 1u) << "repair revises in place";

  auto r3 = orch.process_sample(covered);
  ASSERT_TRUE(std::holds_alternative<Outcome>(r3))
      << std::get<RunError>(r3).failure.detail;
  EXPECT_EQ(std::get<Outcome>(r3).kind, Outcome::Kind::already_covered);
  EXPECT_EQ(std::get<Outcome>(r3).cycles_used, 0);

  std::string ruleset = repo.export_ruleset();
  for (const auto& s : {first, evader, covered}) {
    auto report = check_and_test(ruleset, {s});
    EXPECT_FALSE(report.alerting_sids(s.id).empty()) << s.id;
  }
}

TEST(Orchestrator, RepairDisabledRewritesVerdictToGenerate) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("pA", "/vuln/panel?cmd=run&tok=ALPHA_beta_gamma");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "ALPHA_beta_gamma", repr))));

  HeuristicBackend backend;
  auto config = quiet_config();
  config.repair_enabled = false;
  Orchestrator orch(backend, repo, config);
  auto evader = make_sample("p2", "/vuln/panel?cmd=run&tok=alpha_BETA_gamma&pad=1");

  auto result = orch.process_sample(evader);
  ASSERT_TRUE(std::holds_alternative<Outcome>(result))
      << std::get<RunError>(result).failure.detail;
  EXPECT_EQ(std::get<Outcome>(result).kind, Outcome::Kind::generated);
  EXPECT_EQ(std::get<Outcome>(result).final_sid, 1000002u);
  EXPECT_EQ(repo.size(), 2u) << "ablation accumulates a parallel rule";
}

TEST(Orchestrator, ReassessThresholdForcesGeneration) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  auto repr = make_sample("r1", "/other/othertoken");
  ASSERT_TRUE(std::holds_alternative<uint64_t>(
      repo.upsert(seeded_item(1000001, "othertoken", repr))));

  std::string dead_end = uri_rule("ZZidentityZZ", 1000101);
  SequenceBackend backend({Message::assistant("True, 1000001"),   // assess 1
                           Message::assistant("inspecting"),      // repair 1 analysis
                           Message::assistant(dead_end),          // repair 1: new-only
                           Message::assistant("True, 1000001"),   // assess 2
                           Message::assistant("inspecting"),      // repair 2 analysis
                           Message::assistant(dead_end),          // repair 2: new-only
                           Message::assistant("payload study"),   // forced generate
                           Message::assistant(dead_end)});        // winning candidate
  auto config = quiet_config();
  config.max_reassess_cycles = 1;
  config.agent.max_candidate_retries = 1;
  Orchestrator orch(backend, repo, config);
  auto sample = make_sample("p1", "/forced/path?q=ZZidentityZZ");

  auto result = orch.process_sample(sample);
  ASSERT_TRUE(std::holds_alternative<Outcome>(result))
      << std::get<RunError>(result).failure.detail;
  auto outcome = std::get<Outcome>(result);
  EXPECT_EQ(outcome.kind, Outcome::Kind::forced_generate);
  EXPECT_EQ(outcome.cycles_used, 2);
  EXPECT_EQ(outcome.final_sid, 1000002u);
  EXPECT_EQ(backend.calls, 8);
  EXPECT_EQ(repo.size(), 2u);
  EXPECT_TRUE(text_matches(repo.get(1000002)->rule_text, sample));
}

TEST(Orchestrator, GenerationDeadEndIsAnErrorOutcomeNotACrash) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  SequenceBackend backend({Message::assistant("payload study"),
                           Message::assistant("no rule"),
                           Message::assistant("payload study"),
                           Message::assistant("no rule")});
  auto config = quiet_config();
  config.agent.max_candidate_retries = 1;
  config.generation_restarts = 2;
  Orchestrator orch(backend, repo, config);

  auto samples = std::vector<AttackSample>{
      make_sample("p1", "/forced/path?q=ZZidentityZZ"),
      make_sample("p2", "/vuln/panel?cmd=run&tok=ALPHA_beta_gamma")};
  auto results = orch.run_stream(samples);
  ASSERT_EQ(results.size(), 2u);
  ASSERT_TRUE(std::holds_alternative<RunError>(results[0]));
  EXPECT_EQ(std::get<RunError>(results[0]).failure.kind, AgentFailure::Kind::exhausted);
  ASSERT_TRUE(std::holds_alternative<RunError>(results[1]))
      << "script exhausted surfaces as backend failure";
  EXPECT_EQ(std::get<RunError>(results[1]).failure.kind, AgentFailure::Kind::backend);
}

TEST(Orchestrator, RunStreamWritesTranscriptsAndOutcomes) {
  testsupport::TempDir tmp;
  MemoryRepo repo(tmp.path() / "memory");
  HeuristicBackend backend;
  auto run_dir = tmp.path() / "runs" / "t1";
  Orchestrator orch(backend, repo, quiet_config(), run_dir);

  auto samples = std::vector<AttackSample>{
      make_sample("p1", "/vuln/panel?cmd=run&tok=ALPHA_beta_gamma"),
      make_sample("p2", "/vuln/panel?cmd=run&tok=alpha_BETA_gamma&pad=1"),
      make_sample("p3", "/vuln/panel?cmd=run&tok=alpha_beta_gamma&z=9")};
  auto results = orch.run_stream(samples);
  ASSERT_EQ(results.size(), 3u);
  for (const auto& r : results) {
    ASSERT_TRUE(std::holds_alternative<Outcome>(r));
    EXPECT_FALSE(std::get<Outcome>(r).transcript_ref.empty());
    std::ifstream transcript(run_dir / std::get<Outcome>(r).transcript_ref);
    ASSERT_TRUE(transcript.good());
    std::string line;
    int lines = 0;
    while (std::getline(transcript, line)) {
      ++lines;
      EXPECT_NO_THROW(nlohmann::json::parse(line));
    }
    EXPECT_GT(lines, 0);
  }

  std::ifstream outcomes(run_dir / "outcomes.jsonl");
  ASSERT_TRUE(outcomes.good());
  std::vector<std::string> kinds;
  std::string line;
  while (std::getline(outcomes, line)) {
    kinds.push_back(nlohmann::json::parse(line).value("kind", ""));
  }
  ASSERT_EQ(kinds.size(), 3u);
  EXPECT_EQ(kinds[0], "generated");
  EXPECT_EQ(kinds[1], "repaired");
  EXPECT_EQ(kinds[2], "already_covered");
}

}  // namespace
}  // namespace gridai
