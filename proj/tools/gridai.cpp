// gridai: rule generation and repair over attack traffic, plus the
// surrounding utilities (corpus synthesis, evaluation, parsing, matching,
// and rule memory administration).
//
// Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 backend
// error. Machine-readable output goes to stdout, diagnostics to stderr.
//
// Settings resolve as: command-line flags, then GRIDAI_* environment
// variables, then the config file (--config, GRIDAI_CONFIG, or ./gridai.toml),
// highest first. The config file holds `key = value` lines; # starts a
// comment. Recognized keys: backend, memory, base_url, model, transcript,
// api_key_env.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "gridai/backends.hpp"
#include "gridai/corpus.hpp"
#include "gridai/corpus_gen.hpp"
#include "gridai/eval.hpp"
#include "gridai/match.hpp"
#include "gridai/memory_repo.hpp"
#include "gridai/orchestrator.hpp"
#include "gridai/rule.hpp"

namespace {

namespace fs = std::filesystem;
using namespace gridai;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kBackend = 3;

std::map<std::string, std::string> load_config_file(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      std::size_t b = s.find_first_not_of(" \t\r");
      std::size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    if (!key.empty()) out[key] = value;
  }
  return out;
}

struct Settings {
  std::map<std::string, std::string> file;

  // flags > environment > config file
  std::string resolve(const CLI::Option* flag_opt, const std::string& flag_value,
                      const char* env_name, const char* file_key,
                      std::string fallback = "") const {
    if (flag_opt && flag_opt->count() > 0) return flag_value;
    if (env_name)
      if (const char* env = std::getenv(env_name); env && *env) return env;
    if (auto it = file.find(file_key); it != file.end()) return it->second;
    return fallback;
  }
};

Settings load_settings(const CLI::Option* config_opt, const std::string& config_flag) {
  Settings settings;
  fs::path path;
  if (config_opt && config_opt->count() > 0) {
    path = config_flag;
  } else if (const char* env = std::getenv("GRIDAI_CONFIG"); env && *env) {
    path = env;
  } else if (fs::exists("gridai.toml")) {
    path = "gridai.toml";
  }
  if (!path.empty()) settings.file = load_config_file(path);
  return settings;
}

// Accepts a corpus root (attack/ and/or benign/ subdirectories), a flat
// directory of sample files, or a single .http/.pcap file.
IngestResult<std::vector<AttackSample>> load_samples_path(const fs::path& path,
                                                          SampleLabel label) {
  std::error_code ec;
  if (fs::is_directory(path / "attack", ec) || fs::is_directory(path / "benign", ec))
    return load_corpus(path);
  if (fs::is_directory(path, ec)) return load_dir(path, label);
  return load_sample_file(path, label);
}

int data_error(const IngestError& error) {
  std::cerr << "error: " << error.detail << "\n";
  return kData;
}

std::optional<std::vector<Rule>> parse_rules_file(const fs::path& path) {
  auto bytes = read_file_bytes(path);
  if (auto* e = std::get_if<IngestError>(&bytes)) {
    data_error(*e);
    return std::nullopt;
  }
  auto parsed = parse_ruleset(std::get<std::string>(bytes));
  if (auto* errors = std::get_if<std::vector<FormatError>>(&parsed)) {
    for (const auto& error : *errors)
      std::cerr << "error: " << error_kind_name(error.kind) << ": " << error.detail << "\n";
    return std::nullopt;
  }
  return std::get<std::vector<Rule>>(std::move(parsed));
}

struct RunFlags {
  std::string samples;
  std::string memory;
  std::string backend;
  std::string transcript;
  std::string base_url;
  std::string model;
  std::string api_key_env;
  std::string run_dir;
  uint64_t shuffle_seed = 0;
  int max_cycles = 2;
  int restarts = 3;
  bool no_repair = false;
  bool no_validation = false;
  bool no_representatives = false;
};

int cmd_run(const RunFlags& flags, const Settings& settings,
            const std::map<std::string, const CLI::Option*>& opts) {
  std::string memory_dir =
      settings.resolve(opts.at("memory"), flags.memory, "GRIDAI_MEMORY", "memory");
  if (memory_dir.empty()) {
    std::cerr << "error: no memory directory configured (--memory)\n";
    return kUsage;
  }

  BackendConfig backend_config;
  std::string backend_name = settings.resolve(opts.at("backend"), flags.backend,
                                              "GRIDAI_BACKEND", "backend", "heuristic");
  if (backend_name == "remote") {
    backend_config.kind = BackendKind::remote;
  } else if (backend_name == "replay") {
    backend_config.kind = BackendKind::replay;
  } else if (backend_name == "heuristic") {
    backend_config.kind = BackendKind::heuristic;
  } else {
    std::cerr << "error: unknown backend '" << backend_name << "'\n";
    return kUsage;
  }
  backend_config.endpoint =
      settings.resolve(opts.at("base_url"), flags.base_url, "GRIDAI_BASE_URL", "base_url");
  backend_config.model =
      settings.resolve(opts.at("model"), flags.model, "GRIDAI_MODEL", "model");
  backend_config.transcript_path = settings.resolve(opts.at("transcript"), flags.transcript,
                                                    "GRIDAI_TRANSCRIPT", "transcript");
  if (std::string env = settings.resolve(opts.at("api_key_env"), flags.api_key_env,
                                         nullptr, "api_key_env");
      !env.empty())
    backend_config.api_key_env = env;

  auto made = make_backend(backend_config);
  if (auto* error = std::get_if<BackendError>(&made)) {
    std::cerr << "error: backend: " << error->detail << "\n";
    return kBackend;
  }
  BackendHandle backend = std::get<BackendHandle>(made);

  auto loaded = load_samples_path(flags.samples, SampleLabel::attack);
  if (auto* e = std::get_if<IngestError>(&loaded)) return data_error(*e);
  std::vector<AttackSample> samples = std::get<std::vector<AttackSample>>(std::move(loaded));
  if (samples.empty()) {
    std::cerr << "error: no samples under " << flags.samples << "\n";
    return kData;
  }
  if (opts.at("shuffle")->count() > 0) shuffle_samples(samples, flags.shuffle_seed);

  OrchestratorConfig config;
  config.max_reassess_cycles = flags.max_cycles;
  config.generation_restarts = flags.restarts;
  config.repair_enabled = !flags.no_repair;
  config.tool_validation = !flags.no_validation;
  config.use_representatives = !flags.no_representatives;

  try {
    MemoryRepo repo(memory_dir);
    Orchestrator orchestrator(*backend, repo, config,
                              flags.run_dir.empty() ? fs::path{} : fs::path(flags.run_dir));
    auto results = orchestrator.run_stream(samples);

    int errors = 0;
    bool backend_failed = false;
    std::map<std::string, int> kinds;
    for (const auto& result : results) {
      if (const auto* outcome = std::get_if<Outcome>(&result)) {
        std::cout << outcome_to_json(*outcome).dump() << "\n";
        ++kinds[outcome_kind_name(outcome->kind)];
      } else {
        const auto& error = std::get<RunError>(result);
        nlohmann::json line{{"sample_id", error.sample_id},
                            {"error", agent_failure_kind_name(error.failure.kind)},
                            {"detail", error.failure.detail}};
        std::cout << line.dump() << "\n";
        ++errors;
        if (error.failure.kind == AgentFailure::Kind::backend) backend_failed = true;
      }
    }
    std::cerr << "processed " << results.size() << " samples";
    for (const auto& [kind, count] : kinds) std::cerr << ", " << kind << ": " << count;
    if (errors) std::cerr << ", errors: " << errors;
    std::cerr << "; repository now holds " << repo.size() << " rules\n";
    return backend_failed ? kBackend : kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}

int cmd_eval(const std::string& rules_path, const std::string& attacks_dir,
             const std::string& benign_dir, const std::string& format,
             const std::string& label) {
  auto bytes = read_file_bytes(rules_path);
  if (auto* e = std::get_if<IngestError>(&bytes)) return data_error(*e);
  LenientRuleset ruleset = load_ruleset_lenient(std::get<std::string>(bytes));

  auto attacks_loaded = load_samples_path(attacks_dir, SampleLabel::attack);
  if (auto* e = std::get_if<IngestError>(&attacks_loaded)) return data_error(*e);
  auto attacks = std::get<std::vector<AttackSample>>(std::move(attacks_loaded));
  if (attacks.empty()) {
    std::cerr << "error: no attack samples under " << attacks_dir << "\n";
    return kData;
  }

  std::vector<AttackSample> benign;
  if (!benign_dir.empty()) {
    auto benign_loaded = load_samples_path(benign_dir, SampleLabel::benign);
    if (auto* e = std::get_if<IngestError>(&benign_loaded)) return data_error(*e);
    benign = std::get<std::vector<AttackSample>>(std::move(benign_loaded));
  }

  MetricsReport report = evaluate(ruleset, attacks, benign);
  std::cerr << "evaluated " << ruleset.usable << "/" << ruleset.emitted
            << " usable rules over " << attacks.size() << " attack and "
            << benign.size() << " benign samples\n";
  std::cout << emit_report({{label, report}},
                           format == "markdown" ? ReportFormat::markdown : ReportFormat::csv);
  return kOk;
}

int cmd_corpus(uint64_t seed, const std::string& out_dir) {
  auto result = generate_corpus(seed, out_dir);
  if (auto* e = std::get_if<IngestError>(&result)) return data_error(*e);
  const auto& manifest = std::get<CorpusManifest>(result);
  int train = 0, test_attack = 0, benign = 0;
  for (const auto& entry : manifest.entries) {
    if (entry.split == "train") ++train;
    else if (entry.label == "attack") ++test_attack;
    else ++benign;
  }
  std::cerr << "corpus seed " << seed << " written to " << out_dir << ": " << train
            << " train attack, " << test_attack << " test attack, " << benign
            << " test benign\n";
  return kOk;
}

int cmd_parse(const std::string& rules_path, bool check_only) {
  auto rules = parse_rules_file(rules_path);
  if (!rules) return kData;
  if (check_only) {
    std::cout << "ok " << rules->size() << "\n";
  } else {
    for (const auto& rule : *rules) std::cout << render_rule(rule) << "\n";
  }
  return kOk;
}

int cmd_match(const std::string& rules_path, const std::string& sample_path) {
  auto rules = parse_rules_file(rules_path);
  if (!rules) return kData;
  auto loaded = load_sample_file(sample_path, SampleLabel::attack);
  if (auto* e = std::get_if<IngestError>(&loaded)) return data_error(*e);
  const auto& samples = std::get<std::vector<AttackSample>>(loaded);
  int alerts = 0;
  for (const auto& sample : samples) {
    for (const auto& event : match_sample(*rules, sample)) {
      std::cout << sample.id << " " << event.sid << "\n";
      ++alerts;
    }
  }
  std::cerr << samples.size() << " sample(s), " << alerts << " alert(s)\n";
  return kOk;
}

std::unique_ptr<MemoryRepo> open_repo(const std::string& dir, bool must_exist) {
  if (must_exist && !fs::is_directory(dir)) {
    std::cerr << "error: no rule memory at " << dir << "\n";
    return nullptr;
  }
  try {
    return std::make_unique<MemoryRepo>(dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nullptr;
  }
}

int cmd_memory_import(const std::string& memory_dir, const std::string& rules_path) {
  auto rules = parse_rules_file(rules_path);
  if (!rules) return kData;
  auto repo = open_repo(memory_dir, false);
  if (!repo) return kData;
  for (const auto& rule : *rules) {
    RuleItem item;
    item.rule_sid = rule.sid;
    item.rule_text = render_rule(rule);
    auto result = repo->upsert(std::move(item));
    if (auto* error = std::get_if<RepoError>(&result)) {
      std::cerr << "error: sid " << rule.sid << ": " << repo_error_kind_name(error->kind)
                << ": " << error->detail << "\n";
      return kData;
    }
  }
  std::cerr << "imported " << rules->size() << " rules into " << memory_dir << "\n";
  return kOk;
}

int cmd_memory_export(const std::string& memory_dir) {
  auto repo = open_repo(memory_dir, true);
  if (!repo) return kData;
  std::cout << repo->export_ruleset();
  return kOk;
}

int cmd_memory_fsck(const std::string& memory_dir) {
  auto repo = open_repo(memory_dir, true);
  if (!repo) return kData;
  FsckReport report = repo->fsck();
  if (!report.ok()) {
    for (const auto& issue : report.issues)
      std::cerr << "fsck: sid " << issue.sid << ": " << issue.detail << "\n";
    return kData;
  }
  std::cout << "ok " << report.items << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IDS rule generation and repair from attack traffic"};
  app.require_subcommand(1);
  std::string config_flag;
  const CLI::Option* config_opt =
      app.add_option("--config", config_flag, "Config file (key = value lines)");

  RunFlags run_flags;
  std::map<std::string, const CLI::Option*> run_opts;
  CLI::App* run_cmd = app.add_subcommand("run", "Process attack samples into rules");
  run_cmd->add_option("--samples", run_flags.samples, "Corpus root, directory, or sample file")
      ->required();
  run_opts["memory"] = run_cmd->add_option("-m,--memory", run_flags.memory,
                                           "Rule memory directory");
  run_opts["backend"] =
      run_cmd->add_option("--backend", run_flags.backend, "remote, replay, or heuristic")
          ->check(CLI::IsMember({"remote", "replay", "heuristic"}));
  run_opts["transcript"] = run_cmd->add_option(
      "--transcript", run_flags.transcript,
      "Replay source for --backend replay; recording target otherwise");
  run_opts["base_url"] =
      run_cmd->add_option("--base-url", run_flags.base_url, "Remote chat completions base URL");
  run_opts["model"] = run_cmd->add_option("--model", run_flags.model, "Remote model name");
  run_opts["api_key_env"] = run_cmd->add_option("--api-key-env", run_flags.api_key_env,
                                                "Env var holding the remote API key");
  run_opts["shuffle"] =
      run_cmd->add_option("--shuffle", run_flags.shuffle_seed, "Shuffle samples with this seed");
  run_cmd->add_option("--max-cycles", run_flags.max_cycles,
                      "Reassessment cycles before generation is forced");
  run_cmd->add_option("--restarts", run_flags.restarts, "Generation conversation restarts");
  run_cmd->add_option("--run-dir", run_flags.run_dir, "Write per-sample transcripts here");
  run_cmd->add_flag("--no-repair", run_flags.no_repair, "Rewrite repair verdicts to generation");
  run_cmd->add_flag("--no-validation", run_flags.no_validation,
                    "Skip tool-based candidate validation");
  run_cmd->add_flag("--no-representatives", run_flags.no_representatives,
                    "Do not store representative samples");

  std::string eval_rules, eval_attacks, eval_benign, eval_format = "csv", eval_label = "run";
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a ruleset against labeled samples");
  eval_cmd->add_option("--rules", eval_rules, "Ruleset file")->required();
  eval_cmd->add_option("--attacks", eval_attacks, "Directory of attack samples")->required();
  eval_cmd->add_option("--benign", eval_benign, "Directory of benign samples");
  eval_cmd->add_option("--format", eval_format, "csv or markdown")
      ->check(CLI::IsMember({"csv", "markdown"}));
  eval_cmd->add_option("--label", eval_label, "Row label in the report");

  uint64_t corpus_seed = 1;
  std::string corpus_out;
  CLI::App* corpus_cmd = app.add_subcommand("corpus", "Generate the synthetic corpus");
  corpus_cmd->add_option("--seed", corpus_seed, "Corpus seed");
  corpus_cmd->add_option("--out", corpus_out, "Output directory")->required();

  std::string parse_file;
  CLI::App* parse_cmd = app.add_subcommand("parse", "Parse rules and print canonical forms");
  parse_cmd->add_option("rules", parse_file, "Ruleset file")->required();

  std::string check_file;
  CLI::App* check_cmd = app.add_subcommand("check", "Validate ruleset format");
  check_cmd->add_option("rules", check_file, "Ruleset file")->required();

  std::string match_rules, match_sample_path;
  CLI::App* match_cmd = app.add_subcommand("match", "Match one sample file against rules");
  match_cmd->add_option("--rules", match_rules, "Ruleset file")->required();
  match_cmd->add_option("--sample", match_sample_path, "Sample file (.http or .pcap)")
      ->required();

  CLI::App* memory_cmd = app.add_subcommand("memory", "Administer the rule memory");
  memory_cmd->require_subcommand(1);
  std::string import_memory, import_rules;
  CLI::App* import_cmd = memory_cmd->add_subcommand("import", "Add rules from a file");
  import_cmd->add_option("-m,--memory", import_memory, "Rule memory directory")->required();
  import_cmd->add_option("--rules", import_rules, "Ruleset file")->required();
  std::string export_memory;
  CLI::App* export_cmd = memory_cmd->add_subcommand("export", "Print the stored ruleset");
  export_cmd->add_option("-m,--memory", export_memory, "Rule memory directory")->required();
  std::string fsck_memory;
  CLI::App* fsck_cmd = memory_cmd->add_subcommand("fsck", "Check repository invariants");
  fsck_cmd->add_option("-m,--memory", fsck_memory, "Rule memory directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  Settings settings = load_settings(config_opt, config_flag);
  if (*run_cmd) return cmd_run(run_flags, settings, run_opts);
  if (*eval_cmd) return cmd_eval(eval_rules, eval_attacks, eval_benign, eval_format, eval_label);
  if (*corpus_cmd) return cmd_corpus(corpus_seed, corpus_out);
  if (*parse_cmd) return cmd_parse(parse_file, false);
  if (*check_cmd) return cmd_parse(check_file, true);
  if (*match_cmd) return cmd_match(match_rules, match_sample_path);
  if (*import_cmd) return cmd_memory_import(import_memory, import_rules);
  if (*export_cmd) return cmd_memory_export(export_memory);
  if (*fsck_cmd) return cmd_memory_fsck(fsck_memory);
  return kUsage;
}
