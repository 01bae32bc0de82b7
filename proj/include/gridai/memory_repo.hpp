#pragma once

// Persistent rule memory: every stored item pairs a detection rule with the
// representative attack payload that rule was last validated against. The
// store is a JSONL file rewritten atomically (temp file + rename) under a
// single-writer mutex. Checked items are re-parsed on load; the unchecked
// flag exists only for the validation-off ablation, which is allowed to
// store arbitrary text.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridai/match.hpp"
#include "gridai/rule.hpp"

namespace gridai {

namespace b64 {

inline std::string encode(std::string_view bytes) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    uint32_t v = static_cast<uint8_t>(bytes[i]) << 16 |
                 static_cast<uint8_t>(bytes[i + 1]) << 8 | static_cast<uint8_t>(bytes[i + 2]);
    out.push_back(alphabet[v >> 18]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back(alphabet[v & 63]);
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    uint32_t v = static_cast<uint8_t>(bytes[i]) << 16;
    out.push_back(alphabet[v >> 18]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == bytes.size()) {
    uint32_t v = static_cast<uint8_t>(bytes[i]) << 16 | static_cast<uint8_t>(bytes[i + 1]) << 8;
    out.push_back(alphabet[v >> 18]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::optional<std::string> decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) return std::nullopt;
  std::string out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2) return std::nullopt;
        ++pad;
        v <<= 6;
        continue;
      }
      int d = value(c);
      if (d < 0 || pad > 0) return std::nullopt;
      v = v << 6 | static_cast<uint32_t>(d);
    }
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

}  // namespace b64

struct RuleItem {
  uint32_t rule_sid = 0;
  std::string rule_text;
  std::optional<Rule> detect_rule;  // absent only for unchecked items
  std::optional<std::string> repr_id;
  std::optional<std::string> repr_raw;  // exact request bytes
  uint64_t revision = 0;

  bool has_representative() const { return repr_id.has_value() && repr_raw.has_value(); }
};

enum class RepoErrorKind { not_found, representative_mismatch, parse, sid_collision, io };

inline const char* repo_error_kind_name(RepoErrorKind k) {
  switch (k) {
    case RepoErrorKind::not_found: return "not_found";
    case RepoErrorKind::representative_mismatch: return "representative_mismatch";
    case RepoErrorKind::parse: return "parse";
    case RepoErrorKind::sid_collision: return "sid_collision";
    case RepoErrorKind::io: return "io";
  }
  return "io";
}

struct RepoError {
  RepoErrorKind kind = RepoErrorKind::io;
  std::string detail;
};

struct FsckIssue {
  uint32_t sid = 0;
  std::string detail;
};

struct FsckReport {
  std::vector<FsckIssue> issues;
  std::size_t items = 0;
  bool ok() const { return issues.empty(); }
};

class MemoryRepo {
 public:
  // Opens (or initializes) a repository rooted at dir. Throws on unusable
  // storage; a corrupt store is an IO-level failure, not a data verdict.
  explicit MemoryRepo(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    std::filesystem::create_directories(dir_ / "staging", ec);
    std::filesystem::create_directories(dir_ / "runs", ec);
    if (ec) throw std::runtime_error("cannot create repo layout at " + dir_.string());
    load();
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path staging_dir() const { return dir_ / "staging"; }
  std::filesystem::path runs_dir() const { return dir_ / "runs"; }
  std::filesystem::path store_path() const { return dir_ / "rules.jsonl"; }

  uint64_t revision() const {
    std::lock_guard lock(mu_);
    return revision_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

  std::vector<RuleItem> get_all() const {
    std::lock_guard lock(mu_);
    std::vector<RuleItem> out;
    out.reserve(items_.size());
    for (const auto& [sid, item] : items_) out.push_back(item);
    return out;
  }

  std::optional<RuleItem> get(uint32_t sid) const {
    std::lock_guard lock(mu_);
    auto it = items_.find(sid);
    if (it == items_.end()) return std::nullopt;
    return it->second;
  }

  // Smallest free SID no lower than 1000001; generated rules never collide
  // with imported base-ruleset SIDs.
  uint32_t next_sid() const {
    std::lock_guard lock(mu_);
    uint32_t high = 1000000;
    if (!items_.empty()) high = std::max(high, items_.rbegin()->first);
    return high + 1;
  }

  // Validated write: the text must parse, carry the item's SID, and alert on
  // the item's representative when one is attached.
  std::variant<uint64_t, RepoError> upsert(RuleItem item) {
    ParseResult parsed = parse_rule(item.rule_text);
    if (auto* e = std::get_if<FormatError>(&parsed))
      return RepoError{RepoErrorKind::parse, "rule does not parse: " + e->detail};
    Rule rule = std::get<Rule>(std::move(parsed));
    if (rule.sid != item.rule_sid)
      return RepoError{RepoErrorKind::sid_collision,
                       "rule text carries sid " + std::to_string(rule.sid) + ", item says " +
                           std::to_string(item.rule_sid)};
    if (item.repr_id.has_value() != item.repr_raw.has_value())
      return RepoError{RepoErrorKind::representative_mismatch,
                       "representative id and payload must come together"};
    if (item.has_representative()) {
      auto sample = load_http_sample(*item.repr_raw, *item.repr_id, SampleLabel::attack);
      if (auto* e = std::get_if<IngestError>(&sample))
        return RepoError{RepoErrorKind::representative_mismatch,
                         "representative does not parse: " + e->detail};
      if (!rule_matches(rule, std::get<AttackSample>(sample)))
        return RepoError{RepoErrorKind::representative_mismatch,
                         "rule " + std::to_string(item.rule_sid) +
                             " does not alert on representative " + *item.repr_id};
    }
    item.detect_rule = std::move(rule);
    std::lock_guard lock(mu_);
    item.revision = ++revision_;
    items_[item.rule_sid] = std::move(item);
    persist();
    return revision_;
  }

  // Unvalidated write for the validation-off ablation: text stored verbatim,
  // detect_rule populated only if it happens to parse.
  std::variant<uint64_t, RepoError> upsert_unchecked(RuleItem item) {
    ParseResult parsed = parse_rule(item.rule_text);
    if (std::holds_alternative<Rule>(parsed))
      item.detect_rule = std::get<Rule>(std::move(parsed));
    else
      item.detect_rule.reset();
    std::lock_guard lock(mu_);
    item.revision = ++revision_;
    items_[item.rule_sid] = std::move(item);
    persist();
    return revision_;
  }

  // All-or-nothing import of a base ruleset (no representatives attached).
  std::variant<std::size_t, RepoError> import_base_ruleset(std::string_view text) {
    RulesetResult parsed = parse_ruleset(text);
    if (auto* errors = std::get_if<std::vector<FormatError>>(&parsed)) {
      std::string detail = "ruleset does not parse";
      if (!errors->empty()) detail += ": " + errors->front().detail;
      return RepoError{RepoErrorKind::parse, detail};
    }
    auto& rules = std::get<std::vector<Rule>>(parsed);
    std::lock_guard lock(mu_);
    for (const auto& rule : rules)
      if (items_.count(rule.sid))
        return RepoError{RepoErrorKind::sid_collision,
                         "sid " + std::to_string(rule.sid) + " already present"};
    ++revision_;
    for (auto& rule : rules) {
      RuleItem item;
      item.rule_sid = rule.sid;
      item.rule_text = rule.source_text;
      item.detect_rule = std::move(rule);
      item.revision = revision_;
      items_[item.rule_sid] = std::move(item);
    }
    persist();
    return rules.size();
  }

  // One rule per line, ascending SID. Empty repository renders as an empty
  // string.
  std::string export_ruleset() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& [sid, item] : items_) {
      out += item.rule_text;
      out.push_back('\n');
    }
    return out;
  }

  FsckReport fsck() const {
    std::lock_guard lock(mu_);
    FsckReport report;
    report.items = items_.size();
    for (const auto& [sid, item] : items_) {
      ParseResult parsed = parse_rule(item.rule_text);
      if (auto* e = std::get_if<FormatError>(&parsed)) {
        report.issues.push_back({sid, "rule text does not parse: " + e->detail});
        continue;
      }
      const Rule& rule = std::get<Rule>(parsed);
      if (rule.sid != sid)
        report.issues.push_back({sid, "stored under sid " + std::to_string(sid) +
                                          " but text carries " + std::to_string(rule.sid)});
      if (item.repr_id.has_value() != item.repr_raw.has_value()) {
        report.issues.push_back({sid, "representative id and payload out of step"});
        continue;
      }
      if (item.has_representative()) {
        auto sample = load_http_sample(*item.repr_raw, *item.repr_id, SampleLabel::attack);
        if (auto* e = std::get_if<IngestError>(&sample)) {
          report.issues.push_back({sid, "representative does not parse: " + e->detail});
        } else if (!rule_matches(rule, std::get<AttackSample>(sample))) {
          report.issues.push_back({sid, "rule does not alert on its representative"});
        }
      }
    }
    return report;
  }

 private:
  void load() {
    std::lock_guard lock(mu_);
    items_.clear();
    revision_ = 0;
    std::ifstream in(store_path(), std::ios::binary);
    if (!in) {
      persist();  // initialize an empty store
      return;
    }
    std::string line;
    std::size_t line_no = 0;
    bool saw_meta = false;
    auto corrupt = [&](const std::string& why) {
      throw std::runtime_error("corrupt rule store " + store_path().string() + " line " +
                               std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) corrupt("invalid json");
      if (!saw_meta) {
        if (!j.contains("meta") || !j["meta"].contains("revision")) corrupt("missing meta record");
        revision_ = j["meta"]["revision"].get<uint64_t>();
        saw_meta = true;
        continue;
      }
      if (!j.contains("sid") || !j.contains("rule_text") || !j.contains("checked"))
        corrupt("missing item fields");
      RuleItem item;
      item.rule_sid = j["sid"].get<uint32_t>();
      item.rule_text = j["rule_text"].get<std::string>();
      item.revision = j.value("revision", uint64_t{0});
      if (j.contains("repr") && !j["repr"].is_null()) {
        item.repr_id = j["repr"]["id"].get<std::string>();
        auto decoded = b64::decode(j["repr"]["b64"].get<std::string>());
        if (!decoded) corrupt("bad representative encoding");
        item.repr_raw = std::move(*decoded);
      }
      if (j["checked"].get<bool>()) {
        ParseResult parsed = parse_rule(item.rule_text);
        if (auto* e = std::get_if<FormatError>(&parsed))
          corrupt("checked rule does not parse: " + e->detail);
        item.detect_rule = std::get<Rule>(std::move(parsed));
      }
      if (items_.count(item.rule_sid)) corrupt("duplicate sid " + std::to_string(item.rule_sid));
      items_[item.rule_sid] = std::move(item);
    }
    if (!saw_meta && line_no > 0) corrupt("missing meta record");
    if (!saw_meta) persist();
  }

  // Callers hold mu_.
  void persist() const {
    auto tmp = store_path();
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      out << nlohmann::json{{"meta", {{"revision", revision_}}}}.dump() << "\n";
      for (const auto& [sid, item] : items_) {
        nlohmann::json j{{"sid", sid},
                         {"rule_text", item.rule_text},
                         {"checked", item.detect_rule.has_value()},
                         {"revision", item.revision}};
        if (item.has_representative())
          j["repr"] = {{"id", *item.repr_id}, {"b64", b64::encode(*item.repr_raw)}};
        else
          j["repr"] = nullptr;
        out << j.dump() << "\n";
      }
      if (!out.good()) throw std::runtime_error("cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, store_path(), ec);
    if (ec) throw std::runtime_error("cannot replace " + store_path().string());
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<uint32_t, RuleItem> items_;
  uint64_t revision_ = 0;
};

}  // namespace gridai
