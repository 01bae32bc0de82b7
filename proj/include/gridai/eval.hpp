#pragma once

// Ruleset quality metrics over attack/benign corpora, report rendering, and
// the ablation runner that wires config toggles through the orchestrator.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gridai/http.hpp"
#include "gridai/match.hpp"
#include "gridai/memory_repo.hpp"
#include "gridai/orchestrator.hpp"
#include "gridai/rule.hpp"

namespace gridai {

struct MetricsReport {
  int alerts = 0;         // total per-(sid,sample) alerts on attack samples
  int da = 0;             // attack samples with at least one alert
  int total_attacks = 0;
  double dr = 0.0;        // da / total_attacks
  double adr = 0.0;       // (alerts - da) / alerts, 0 when alerts = 0
  double bar = 0.0;       // alerting benign samples / total benign
  int rc = 0;             // rules emitted (non-comment ruleset lines)
  double rur = 1.0;       // rules passing the format check / rules emitted
  double dl = 0.0;        // seconds spent matching all samples
};

// Per-line ruleset load that keeps whatever parses. The strict all-or-nothing
// semantics belong to the validation tool; evaluation has to score dirty
// rulesets (unvalidated ablation output) on their usable subset.
struct LenientRuleset {
  std::vector<Rule> rules;  // usable, sid-unique (first occurrence wins)
  int emitted = 0;          // non-comment, non-blank lines
  int usable = 0;
};

inline LenientRuleset load_ruleset_lenient(std::string_view text) {
  LenientRuleset out;
  std::set<uint32_t> sids;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    ++out.emitted;
    auto parsed = parse_rule(line);
    auto* rule = std::get_if<Rule>(&parsed);
    if (!rule || !sids.insert(rule->sid).second) continue;
    ++out.usable;
    out.rules.push_back(std::move(*rule));
  }
  return out;
}

inline MetricsReport evaluate(const std::vector<Rule>& rules,
                              const std::vector<AttackSample>& attacks,
                              const std::vector<AttackSample>& benign) {
  MetricsReport report;
  report.total_attacks = static_cast<int>(attacks.size());
  report.rc = static_cast<int>(rules.size());
  report.rur = 1.0;

  auto start = std::chrono::steady_clock::now();
  int benign_alerting = 0;
  for (const auto& sample : attacks) {
    int hits = static_cast<int>(match_sample(rules, sample).size());
    report.alerts += hits;
    if (hits > 0) ++report.da;
  }
  for (const auto& sample : benign) {
    if (!match_sample(rules, sample).empty()) ++benign_alerting;
  }
  report.dl = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (report.total_attacks > 0)
    report.dr = static_cast<double>(report.da) / report.total_attacks;
  if (report.alerts > 0)
    report.adr = static_cast<double>(report.alerts - report.da) / report.alerts;
  if (!benign.empty())
    report.bar = static_cast<double>(benign_alerting) / static_cast<double>(benign.size());
  return report;
}

inline MetricsReport evaluate(const LenientRuleset& ruleset,
                              const std::vector<AttackSample>& attacks,
                              const std::vector<AttackSample>& benign) {
  MetricsReport report = evaluate(ruleset.rules, attacks, benign);
  report.rc = ruleset.emitted;
  report.rur = ruleset.emitted > 0
                   ? static_cast<double>(ruleset.usable) / ruleset.emitted
                   : 1.0;
  return report;
}

enum class ReportFormat { csv, markdown };

namespace evaldetail {

inline std::string ratio3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::vector<std::string> row_cells(const std::string& label, const MetricsReport& r) {
  return {label,
          std::to_string(r.alerts),
          std::to_string(r.da),
          ratio3(r.dr),
          ratio3(r.adr),
          ratio3(r.bar),
          std::to_string(r.rc),
          ratio3(r.rur),
          ratio3(r.dl)};
}

}  // namespace evaldetail

inline std::string emit_report(const std::vector<std::pair<std::string, MetricsReport>>& reports,
                               ReportFormat format) {
  static const char* kColumns[] = {"label", "Alerts", "DA",  "DR", "ADR",
                                   "BAR",   "RC",     "RUR", "DL"};
  std::string out;
  if (format == ReportFormat::csv) {
    for (std::size_t i = 0; i < 9; ++i) {
      if (i) out += ",";
      out += kColumns[i];
    }
    out += "\n";
    for (const auto& [label, report] : reports) {
      auto cells = evaldetail::row_cells(label, report);
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ",";
        out += cells[i];
      }
      out += "\n";
    }
    return out;
  }
  out += "|";
  for (const char* c : kColumns) out += std::string(" ") + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < 9; ++i) out += " --- |";
  out += "\n";
  for (const auto& [label, report] : reports) {
    out += "|";
    for (const auto& cell : evaldetail::row_cells(label, report)) out += " " + cell + " |";
    out += "\n";
  }
  return out;
}

struct AblationConfig {
  bool repair = true;
  bool tool_validation = true;
  bool representative = true;
};

// Runs the pipeline over the training stream with the given toggles, then
// scores the exported ruleset. The memory directory must be fresh; reusing a
// populated repository would mix experiments.
inline MetricsReport ablation_run(Backend& backend, const std::vector<AttackSample>& train,
                                  const std::vector<AttackSample>& attacks,
                                  const std::vector<AttackSample>& benign,
                                  const AblationConfig& ablation,
                                  const std::filesystem::path& memory_dir,
                                  OrchestratorConfig config = {}) {
  MemoryRepo repo(memory_dir);
  config.repair_enabled = ablation.repair;
  config.tool_validation = ablation.tool_validation;
  config.use_representatives = ablation.representative;
  Orchestrator orch(backend, repo, config);
  orch.run_stream(train);
  return evaluate(load_ruleset_lenient(repo.export_ruleset()), attacks, benign);
}

}  // namespace gridai
