#pragma once

// Prompt templates for the four agents and the block grammar that carries
// samples and rules inside prompts. The stage markers and block fences are
// load-bearing: the deterministic heuristic backend keys off them, and the
// agents parse model replies against the same grammar.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gridai/http.hpp"
#include "gridai/memory_repo.hpp"
#include "gridai/rule.hpp"

namespace gridai::prompts {

// ---- stage markers ----

inline constexpr const char* kAssessMarker = "# STAGE 1: RELATIONSHIP ASSESSMENT";
inline constexpr const char* kGenerateAnalysisMarker = "# STAGE 1: PAYLOAD ANALYSIS";
inline constexpr const char* kGenerateRulesMarker = "# STAGE 2: RULE GENERATION";
inline constexpr const char* kRepairAnalysisMarker = "# STAGE 1: REPAIR ANALYSIS";
inline constexpr const char* kRepairRulesMarker = "# STAGE 2: RULE REPAIR";
inline constexpr const char* kFeedbackMarker = "# STAGE 3: VALIDATION FEEDBACK";
inline constexpr const char* kSelectMarker = "# STAGE 4: OPTIMAL RULE SELECTION";
inline constexpr const char* kMemUpdateMarker = "# MEMORY UPDATE: REPRESENTATIVE SELECTION";

// ---- block grammar ----

inline std::string sample_block(const std::string& id, const std::string& role,
                                std::string_view bytes) {
  std::string out = "### SAMPLE id=" + id + " role=" + role + "\n";
  out.append(bytes);
  out.push_back('\n');
  out += "### END SAMPLE\n";
  return out;
}

inline std::string rule_block(uint32_t sid, const std::string& text) {
  std::string out = "### RULE sid=" + std::to_string(sid) + "\n";
  out += text;
  out.push_back('\n');
  out += "### END RULE\n";
  return out;
}

struct SampleBlock {
  std::string id;
  std::string role;
  std::string bytes;
  std::size_t pos = 0;
};

struct RuleBlockRef {
  uint32_t sid = 0;
  std::string text;
  std::size_t pos = 0;
};

inline std::vector<SampleBlock> extract_sample_blocks(std::string_view text) {
  std::vector<SampleBlock> out;
  std::size_t pos = 0;
  const std::string open = "### SAMPLE id=";
  while ((pos = text.find(open, pos)) != std::string_view::npos) {
    std::size_t line_end = text.find('\n', pos);
    if (line_end == std::string_view::npos) break;
    std::string_view header = text.substr(pos + open.size(), line_end - pos - open.size());
    std::size_t role_at = header.find(" role=");
    if (role_at == std::string_view::npos) {
      pos = line_end;
      continue;
    }
    SampleBlock block;
    block.pos = pos;
    block.id = std::string(header.substr(0, role_at));
    block.role = std::string(header.substr(role_at + 6));
    std::size_t body_start = line_end + 1;
    std::size_t close = text.find("### END SAMPLE", body_start);
    if (close == std::string_view::npos) break;
    std::string_view body = text.substr(body_start, close - body_start);
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    block.bytes = std::string(body);
    out.push_back(std::move(block));
    pos = close;
  }
  return out;
}

inline std::vector<RuleBlockRef> extract_rule_blocks(std::string_view text) {
  std::vector<RuleBlockRef> out;
  std::size_t pos = 0;
  const std::string open = "### RULE sid=";
  while ((pos = text.find(open, pos)) != std::string_view::npos) {
    std::size_t line_end = text.find('\n', pos);
    if (line_end == std::string_view::npos) break;
    RuleBlockRef block;
    block.pos = pos;
    std::string_view sid_text = text.substr(pos + open.size(), line_end - pos - open.size());
    uint32_t sid = 0;
    for (char c : sid_text) {
      if (c < '0' || c > '9') break;
      sid = sid * 10 + static_cast<uint32_t>(c - '0');
    }
    block.sid = sid;
    std::size_t body_start = line_end + 1;
    std::size_t close = text.find("### END RULE", body_start);
    if (close == std::string_view::npos) break;
    std::string_view body = text.substr(body_start, close - body_start);
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    block.text = std::string(body);
    out.push_back(std::move(block));
    pos = close;
  }
  return out;
}

// Lines that look like rules; how candidates are pulled out of a free-text
// model reply.
inline std::vector<std::string> extract_alert_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.remove_suffix(1);
    if (line.rfind("alert ", 0) == 0) out.emplace_back(line);
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return out;
}

inline std::optional<uint32_t> extract_sid_floor(std::string_view text) {
  const std::string marker = "SID numbering starts at ";
  std::size_t pos = text.rfind(marker);
  if (pos == std::string_view::npos) return std::nullopt;
  pos += marker.size();
  uint32_t value = 0;
  bool any = false;
  while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
    value = value * 10 + static_cast<uint32_t>(text[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) return std::nullopt;
  return value;
}

inline std::vector<uint32_t> extract_listed_sids(std::string_view text) {
  const std::string marker = "Alerting SIDs: ";
  std::size_t pos = text.rfind(marker);
  std::vector<uint32_t> out;
  if (pos == std::string_view::npos) return out;
  pos += marker.size();
  while (pos < text.size() && text[pos] != '\n') {
    if (text[pos] < '0' || text[pos] > '9') {
      ++pos;
      continue;
    }
    uint32_t value = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      value = value * 10 + static_cast<uint32_t>(text[pos] - '0');
      ++pos;
    }
    out.push_back(value);
  }
  return out;
}

// ---- shared fragments ----

inline std::string system_role() {
  return "You are a cybersecurity expert specializing in network intrusion detection. "
         "You analyze HTTP attack payloads and write Suricata detection rules.\n";
}

inline std::string grammar_constraints() {
  return "Rule requirements:\n"
         "- One rule per line, action `alert`, protocol `http` or `tcp`, direction `->`.\n"
         "- Allowed options: msg, sid, rev, classtype, flow, content (with nocase, offset, "
         "depth, startswith, endswith), pcre (flag `i` only), and the sticky buffers "
         "http.uri, http.method, http.header, http.user_agent, http.cookie, "
         "http.request_body, http.host.\n"
         "- Any other keyword fails the format check. Every rule needs msg and a unique "
         "sid.\n"
         "Example of a valid rule:\n"
         "alert http any any -> any any (msg:\"123\"; flow: to_server, established; "
         "http.uri; content:\".abc\"; nocase; classtype: attempted-recon; sid: 123;)\n";
}

inline std::string tool_usage_note() {
  return "You may call the tools save_rules (stage candidate rules), check_and_test "
         "(validate staged or stored rules against samples), query_memory (read stored "
         "rules), and write_memory (store a rule). If you do not call tools, reply with "
         "your candidate rules as plain lines.\n";
}

// ---- agent prompts ----

// A_ass: engine found no alert; ask whether the new payload is a variant of
// a stored rule's attack.
inline std::string assess(const std::vector<RuleItem>& items, bool include_representatives,
                          const AttackSample& sample) {
  std::string out;
  out += kAssessMarker;
  out +=
      "\nDecide whether the new attack payload below is a variant of an attack covered "
      "by one of the existing rules, or a genuinely new attack.\n\n"
      "Existing rules";
  out += include_representatives ? " with their representative attack payloads:\n\n"
                                 : " (no representative payloads stored):\n\n";
  for (const auto& item : items) {
    out += rule_block(item.rule_sid, item.rule_text);
    if (include_representatives && item.has_representative())
      out += sample_block(*item.repr_id, "representative", *item.repr_raw);
    out += "\n";
  }
  out += "New attack payload to assess:\n\n";
  out += sample_block(sample.id, "new", sample.raw);
  out +=
      "\nA variant keeps the same attack mechanism and target while differing in "
      "obfuscation, parameters, or encoding. A new attack differs in mechanism or "
      "exploited weakness.\n"
      "Your final output must strictly follow this format: **IsVariant, SID** where "
      "IsVariant is True or False, and SID is the matching rule's sid if True, otherwise "
      "None. Examples: **True, 1000002** or **False, None**. Output nothing else.\n";
  return out;
}

inline std::string generate_analysis(const AttackSample& sample) {
  std::string out;
  out += kGenerateAnalysisMarker;
  out +=
      "\nAnalyze the attack payload below: identify the attack category, the targeted "
      "component, and the invariant substrings that distinguish it from benign traffic.\n\n";
  out += sample_block(sample.id, "new", sample.raw);
  return out;
}

inline std::string generate_rules(const AttackSample& sample, uint32_t sid_floor,
                                  int candidates) {
  std::string out;
  out += kGenerateRulesMarker;
  out += "\nWrite up to " + std::to_string(candidates) +
         " candidate Suricata rules that detect the analyzed payload (sample id " + sample.id +
         ") and stay silent on benign traffic. Prefer the most specific invariant you "
         "found. SID numbering starts at " +
         std::to_string(sid_floor) + "; give each candidate its own sid.\n\n";
  out += grammar_constraints();
  out += tool_usage_note();
  return out;
}

inline std::string repair_analysis(const AttackSample& sample, const RuleItem& item,
                                   bool include_representative) {
  std::string out;
  out += kRepairAnalysisMarker;
  out +=
      "\nAn existing rule misses a new variant of the attack it covers. Compare the "
      "payloads and identify the common attributes a repaired rule should match.\n\n"
      "New variant payload:\n\n";
  out += sample_block(sample.id, "new", sample.raw);
  if (include_representative && item.has_representative()) {
    out += "\nRepresentative payload the current rule was built for:\n\n";
    out += sample_block(*item.repr_id, "representative", *item.repr_raw);
  }
  return out;
}

inline std::string repair_rules(const RuleItem& item, const AttackSample& sample,
                                bool include_representative, int candidates) {
  std::string out;
  out += kRepairRulesMarker;
  out += "\nRepair the rule below so it alerts on the new payload (sample id " + sample.id +
         ")";
  if (include_representative && item.has_representative())
    out += " while still alerting on the representative payload (sample id " + *item.repr_id +
           ")";
  out += ". Keep sid " + std::to_string(item.rule_sid) +
         ". Reply with up to " + std::to_string(candidates) + " repaired candidates.\n\n";
  out += rule_block(item.rule_sid, item.rule_text);
  out += "\n";
  out += grammar_constraints();
  out += tool_usage_note();
  return out;
}

inline std::string feedback_format(const std::vector<FormatError>& errors) {
  std::string out;
  out += kFeedbackMarker;
  out += "\nThe candidate rules failed the Suricata format check. Errors:\n";
  for (const auto& e : errors) {
    out += "- ";
    out += error_kind_name(e.kind);
    out += ": " + e.detail + "\n";
  }
  out += "Fix these problems and reply with corrected rules.\n";
  return out;
}

inline std::string feedback_no_alert(const std::vector<std::string>& missed_ids,
                                     const std::vector<std::string>& alerted_ids) {
  std::string out;
  out += kFeedbackMarker;
  out +=
      "\nThe candidate rules passed the format check but produced no alert on sample";
  out += missed_ids.size() == 1 ? "" : "s";
  out += ":";
  for (const auto& id : missed_ids) out += " " + id;
  out += ".\n";
  if (!alerted_ids.empty()) {
    out += "They did alert on:";
    for (const auto& id : alerted_ids) out += " " + id;
    out += ".\n";
  }
  out += "Adjust the match conditions and reply with revised rules.\n";
  return out;
}

inline std::string select_rule(const std::set<uint32_t>& alerting_sids) {
  std::string out;
  out += kSelectMarker;
  out +=
      "\nMore than one candidate rule triggered the correct alert. Alerting SIDs: ";
  bool first = true;
  for (uint32_t sid : alerting_sids) {
    if (!first) out += ", ";
    out += std::to_string(sid);
    first = false;
  }
  out +=
      "\nSelect the rule that detects this attack most precisely with the least risk of "
      "false alarms. Reply with exactly one SID from the list and nothing else.\n";
  return out;
}

inline std::string memory_update(const RuleItem& item, const std::string& incumbent_id,
                                 std::string_view incumbent_raw, const AttackSample& sample) {
  std::string out;
  out += kMemUpdateMarker;
  out +=
      "\nOne representative attack payload is stored per rule. Choose which payload to "
      "keep for the rule below: the current representative or the newly detected "
      "sample. Keep the payload carrying the most information about the attack the rule "
      "matches.\n\n";
  out += rule_block(item.rule_sid, item.rule_text);
  out += "\nCurrent representative:\n\n";
  out += sample_block(incumbent_id, "representative", incumbent_raw);
  out += "\nNew sample:\n\n";
  out += sample_block(sample.id, "new", sample.raw);
  out += "\nReply with exactly one sample id from the two above and nothing else.\n";
  return out;
}

inline std::string reprompt_verdict() {
  return "Your reply did not match the required format. Answer strictly as "
         "**IsVariant, SID** — for example **True, 1000002** or **False, None**.\n";
}

inline std::string reprompt_selection() {
  return "Your reply did not name one of the alerting SIDs. Reply with exactly one SID "
         "from the list and nothing else.\n";
}

inline std::string reprompt_sample_id() {
  return "Your reply did not name one of the two sample ids. Reply with exactly one of "
         "the ids and nothing else.\n";
}

}  // namespace gridai::prompts
