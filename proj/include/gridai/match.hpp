#pragma once

// Rule evaluation against samples, plus the check_and_test entry point the
// agents use as their validation tool: parse a candidate ruleset, and only
// if every rule is well-formed, run it over the given samples.

#include <cctype>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridai/http.hpp"
#include "gridai/rule.hpp"

namespace gridai {

struct AlertEvent {
  uint32_t sid = 0;
  std::string sample_id;
  std::string msg;
  bool operator==(const AlertEvent&) const = default;
};

namespace matchdetail {

inline std::string extract_buffer(const AttackSample& sample, Buffer buffer) {
  const HttpRequest& req = sample.request;
  switch (buffer) {
    case Buffer::raw:
      return sample.raw;
    case Buffer::http_uri:
      return req.uri;
    case Buffer::http_method:
      return req.method;
    case Buffer::http_header: {
      std::string out;
      for (const auto& [k, v] : req.headers) out += k + ": " + v + "\r\n";
      return out;
    }
    case Buffer::http_user_agent:
      return req.header("user-agent").value_or("");
    case Buffer::http_cookie:
      return req.header("cookie").value_or("");
    case Buffer::http_request_body:
      return req.body;
    case Buffer::http_host:
      return req.header("host").value_or("");
  }
  return {};
}

inline bool bytes_equal_at(std::string_view hay, std::size_t pos, std::string_view needle,
                           bool nocase) {
  for (std::size_t i = 0; i < needle.size(); ++i) {
    unsigned char a = static_cast<unsigned char>(hay[pos + i]);
    unsigned char b = static_cast<unsigned char>(needle[i]);
    if (nocase) {
      a = static_cast<unsigned char>(std::tolower(a));
      b = static_cast<unsigned char>(std::tolower(b));
    }
    if (a != b) return false;
  }
  return true;
}

// One content predicate against one buffer. Offset opens the search window,
// depth bounds its length, startswith/endswith anchor the match position;
// all constraints are conjunctive. Negation inverts the final answer.
inline bool content_matches(std::string_view buf, const ContentOption& c) {
  const std::string& needle = c.bytes;
  bool found = false;
  if (needle.size() <= buf.size()) {
    std::size_t window_start = c.offset.value_or(0);
    std::size_t window_end = buf.size();
    if (c.depth) {
      std::size_t limit = window_start + *c.depth;
      window_end = limit < window_end ? limit : window_end;
    }
    if (window_start <= buf.size() && window_start + needle.size() <= window_end) {
      for (std::size_t pos = window_start; pos + needle.size() <= window_end; ++pos) {
        if (c.startswith && pos != 0) break;
        if (c.endswith && pos + needle.size() != buf.size()) continue;
        if (bytes_equal_at(buf, pos, needle, c.nocase)) {
          found = true;
          break;
        }
      }
    }
  }
  return c.negated ? !found : found;
}

inline bool pcre_matches(std::string_view buf, const PcreOption& p) {
  try {
    std::regex re(p.pattern, std::regex::ECMAScript |
                                 (p.icase ? std::regex::icase : std::regex::flag_type{}));
    return std::regex_search(buf.begin(), buf.end(), re);
  } catch (const std::regex_error&) {
    return false;  // parse already vets patterns; unreachable for parsed rules
  }
}

}  // namespace matchdetail

// Whether one parsed rule fires on one sample. Endpoint constraints apply
// only when the sample carries flow endpoints; flow options are satisfied by
// construction (every sample is an established client request).
inline bool rule_matches(const Rule& rule, const AttackSample& sample) {
  if (sample.endpoints) {
    const FlowEndpoints& ep = *sample.endpoints;
    if (rule.src_addr.ip && *rule.src_addr.ip != ep.src_ip) return false;
    if (rule.src_port.port && *rule.src_port.port != ep.src_port) return false;
    if (rule.dst_addr.ip && *rule.dst_addr.ip != ep.dst_ip) return false;
    if (rule.dst_port.port && *rule.dst_port.port != ep.dst_port) return false;
  }
  for (const auto& opt : rule.options) {
    if (const auto* content = std::get_if<ContentOption>(&opt)) {
      std::string buf = matchdetail::extract_buffer(sample, content->buffer);
      if (!matchdetail::content_matches(buf, *content)) return false;
    } else if (const auto* pcre = std::get_if<PcreOption>(&opt)) {
      std::string buf = matchdetail::extract_buffer(sample, pcre->buffer);
      if (!matchdetail::pcre_matches(buf, *pcre)) return false;
    }
  }
  return true;
}

// All alerts for one sample, ascending sid, at most one per rule.
inline std::vector<AlertEvent> match_sample(const std::vector<Rule>& rules,
                                            const AttackSample& sample) {
  std::map<uint32_t, const Rule*> by_sid;
  for (const auto& rule : rules) by_sid.emplace(rule.sid, &rule);
  std::vector<AlertEvent> out;
  for (const auto& [sid, rule] : by_sid)
    if (rule_matches(*rule, sample)) out.push_back(AlertEvent{sid, sample.id, rule->msg});
  return out;
}

struct ValidationReport {
  bool format_ok = false;
  std::vector<FormatError> format_errors;
  std::vector<AlertEvent> alerts;                       // sample order, then sid order
  std::map<std::string, std::set<uint32_t>> per_sample; // every sample id appears

  std::set<uint32_t> alerting_sids(const std::string& sample_id) const {
    auto it = per_sample.find(sample_id);
    return it == per_sample.end() ? std::set<uint32_t>{} : it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : format_errors)
      errors.push_back({{"kind", error_kind_name(e.kind)},
                        {"position", e.position},
                        {"detail", e.detail}});
    nlohmann::json alert_list = nlohmann::json::array();
    for (const auto& a : alerts)
      alert_list.push_back({{"sid", a.sid}, {"sample_id", a.sample_id}, {"msg", a.msg}});
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [id, sids] : per_sample) per[id] = sids;
    return {{"format_ok", format_ok},
            {"format_errors", errors},
            {"alerts", alert_list},
            {"per_sample", per}};
  }
};

// The validation tool: any format error in the ruleset text means no rule
// runs (format_ok=false, zero alerts).
inline ValidationReport check_and_test(std::string_view ruleset_text,
                                       const std::vector<AttackSample>& samples) {
  ValidationReport report;
  RulesetResult parsed = parse_ruleset(ruleset_text);
  if (auto* errors = std::get_if<std::vector<FormatError>>(&parsed)) {
    report.format_ok = false;
    report.format_errors = *errors;
    for (const auto& sample : samples) report.per_sample[sample.id];
    return report;
  }
  report.format_ok = true;
  const auto& rules = std::get<std::vector<Rule>>(parsed);
  for (const auto& sample : samples) {
    auto events = match_sample(rules, sample);
    auto& sids = report.per_sample[sample.id];
    for (auto& ev : events) {
      sids.insert(ev.sid);
      report.alerts.push_back(std::move(ev));
    }
  }
  return report;
}

}  // namespace gridai
