#pragma once

// Deterministic rule-writing backend. No network, no randomness: every reply
// is a pure function of the conversation text. Serves as the offline default
// and as the reference behavior the evaluation corpus is built against.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gridai/backend.hpp"
#include "gridai/http.hpp"
#include "gridai/prompts.hpp"
#include "gridai/rule.hpp"

namespace gridai {

namespace heuristicdetail {

struct Token {
  std::string lower;
  std::string original;
  std::size_t pos = 0;
};

inline char lower_char(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline bool token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!token_char(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < text.size() && token_char(text[i])) ++i;
    Token t;
    t.original = std::string(text.substr(start, i - start));
    t.lower = t.original;
    for (char& c : t.lower) c = lower_char(c);
    t.pos = start;
    out.push_back(std::move(t));
  }
  return out;
}

inline std::set<std::string> token_set(std::string_view text) {
  std::set<std::string> out;
  for (auto& t : tokenize(text)) out.insert(std::move(t.lower));
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a)
    if (b.count(t)) ++inter;
  std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// URI and body are the discriminating surfaces; headers are mostly boilerplate.
struct PayloadView {
  std::string uri;
  std::string body;
};

inline PayloadView payload_view(const std::string& raw) {
  PayloadView view;
  auto parsed = parse_http_request(raw);
  if (const auto* req = std::get_if<HttpRequest>(&parsed)) {
    view.uri = req->uri;
    view.body = req->body;
  } else {
    view.body = raw;
  }
  return view;
}

inline std::set<std::string> payload_tokens(const std::string& raw) {
  PayloadView view = payload_view(raw);
  std::set<std::string> out = token_set(view.uri);
  for (auto& t : token_set(view.body)) out.insert(std::move(t));
  return out;
}

inline bool contains_nocase(std::string_view haystack, std::string_view needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool hit = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (lower_char(haystack[i + j]) != lower_char(needle[j])) {
        hit = false;
        break;
      }
    }
    if (hit) return true;
  }
  return false;
}

// Longest common substring, case-insensitive, returned in the casing of `a`.
inline std::string lcs_nocase(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return {};
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  std::size_t best = 0, best_end_a = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (lower_char(a[i - 1]) == lower_char(b[j - 1])) {
        cur[j] = prev[j - 1] + 1;
        if (cur[j] > best) {
          best = cur[j];
          best_end_a = i;
        }
      } else {
        cur[j] = 0;
      }
    }
    std::swap(prev, cur);
  }
  return std::string(a.substr(best_end_a - best, best));
}

inline const std::set<std::string>& benign_vocabulary() {
  static const std::set<std::string> vocab = {
      "http",    "https",   "host",     "mozilla", "windows", "linux",   "gecko",
      "khtml",   "safari",  "chrome",   "firefox", "accept",  "encoding", "gzip",
      "deflate", "text",    "html",     "json",    "charset", "keep",    "alive",
      "close",   "agent",   "user",     "cookie",  "session", "index",   "page",
      "home",    "about",   "contact",  "search",  "assets",  "static",  "images",
      "style",   "content", "length",   "type",    "form",    "urlencoded", "connection",
      "language", "www",    "example",  "local",   "internal", "shop",   "blog",
  };
  return vocab;
}

struct Distinctive {
  std::string original;
  std::string lower;
  bool from_uri = true;
};

// Longest qualifying tokens win; earlier occurrence breaks ties. Qualifying:
// at least four chars, at least one letter, not generic web vocabulary.
inline std::vector<Distinctive> distinctive_tokens(const PayloadView& view, std::size_t limit) {
  struct Scored {
    Token token;
    bool from_uri;
    std::size_t order;
  };
  std::vector<Scored> pool;
  std::size_t order = 0;
  for (auto& t : tokenize(view.uri)) pool.push_back({std::move(t), true, order++});
  for (auto& t : tokenize(view.body)) pool.push_back({std::move(t), false, order++});
  std::map<std::string, std::size_t> first_by_lower;
  std::vector<Scored> unique;
  for (auto& s : pool) {
    if (s.token.lower.size() < 4) continue;
    bool has_letter = false;
    for (char c : s.token.lower)
      if (c >= 'a' && c <= 'z') has_letter = true;
    if (!has_letter) continue;
    if (benign_vocabulary().count(s.token.lower)) continue;
    if (first_by_lower.count(s.token.lower)) continue;
    first_by_lower[s.token.lower] = unique.size();
    unique.push_back(std::move(s));
  }
  std::sort(unique.begin(), unique.end(), [](const Scored& a, const Scored& b) {
    if (a.token.lower.size() != b.token.lower.size())
      return a.token.lower.size() > b.token.lower.size();
    return a.order < b.order;
  });
  std::vector<Distinctive> out;
  for (auto& s : unique) {
    if (out.size() >= limit) break;
    out.push_back({std::move(s.token.original), std::move(s.token.lower), s.from_uri});
  }
  return out;
}

inline std::string quote_content(std::string_view bytes) {
  return detail::encode_quoted(bytes, true);
}

inline std::string build_rule(const std::string& msg, bool uri_buffer, std::string_view content,
                              bool nocase, const std::string& classtype, uint32_t sid,
                              uint32_t rev) {
  std::string out = "alert http any any -> any any (msg:\"" + msg +
                    "\"; flow:to_server,established; ";
  out += uri_buffer ? "http.uri; " : "http.request_body; ";
  out += "content:\"" + quote_content(content) + "\"; ";
  if (nocase) out += "nocase; ";
  out += "classtype:" + classtype + "; sid:" + std::to_string(sid) +
         "; rev:" + std::to_string(rev) + ";)";
  return out;
}

inline std::optional<std::string> primary_content(const Rule& rule) {
  const ContentOption* best = nullptr;
  for (const auto& opt : rule.options) {
    if (const auto* c = std::get_if<ContentOption>(&opt)) {
      if (c->negated) continue;
      if (!best || c->bytes.size() > best->bytes.size()) best = c;
    }
  }
  if (!best) return std::nullopt;
  return std::string(best->bytes.begin(), best->bytes.end());
}

}  // namespace heuristicdetail

class HeuristicBackend : public Backend {
 public:
  std::string name() const override { return "heuristic"; }

  CompletionResult complete(const Conversation& conv,
                            const std::vector<ToolSchema>& tools) override {
    (void)tools;
    const Message* last_user = nullptr;
    for (auto it = conv.messages.rbegin(); it != conv.messages.rend(); ++it) {
      if (it->role == Role::user) {
        last_user = &*it;
        break;
      }
    }
    if (!last_user)
      return BackendError{BackendErrorKind::malformed_tool_call,
                          "heuristic backend needs a user prompt"};
    std::string stage = stage_of(last_user->content);
    if (stage.empty()) {
      // Reprompt without a marker: answer the most recent staged prompt again.
      for (auto it = conv.messages.rbegin(); it != conv.messages.rend(); ++it) {
        if (it->role != Role::user) continue;
        stage = stage_of(it->content);
        if (!stage.empty()) {
          last_user = &*it;
          break;
        }
      }
    }
    if (stage == prompts::kAssessMarker) return assess_reply(*last_user);
    if (stage == prompts::kGenerateAnalysisMarker) return analysis_reply(*last_user, false);
    if (stage == prompts::kRepairAnalysisMarker) return analysis_reply(*last_user, true);
    if (stage == prompts::kGenerateRulesMarker) return generate_reply(conv, *last_user, false);
    if (stage == prompts::kRepairRulesMarker) return repair_reply(conv, *last_user, false);
    if (stage == prompts::kFeedbackMarker) return feedback_reply(conv);
    if (stage == prompts::kSelectMarker) return select_reply(*last_user);
    if (stage == prompts::kMemUpdateMarker) return mem_update_reply(*last_user);
    return BackendError{BackendErrorKind::malformed_tool_call,
                        "heuristic backend cannot answer this prompt"};
  }

 private:
  static std::string stage_of(const std::string& content) {
    static const char* markers[] = {
        prompts::kAssessMarker,          prompts::kGenerateAnalysisMarker,
        prompts::kGenerateRulesMarker,   prompts::kRepairAnalysisMarker,
        prompts::kRepairRulesMarker,     prompts::kFeedbackMarker,
        prompts::kSelectMarker,          prompts::kMemUpdateMarker,
    };
    std::size_t best_pos = std::string::npos;
    const char* best = nullptr;
    for (const char* m : markers) {
      std::size_t pos = content.find(m);
      if (pos != std::string::npos && (best == nullptr || pos < best_pos)) {
        best_pos = pos;
        best = m;
      }
    }
    return best ? std::string(best) : std::string();
  }

  static const prompts::SampleBlock* latest_block(const std::vector<prompts::SampleBlock>& blocks,
                                                  std::string_view role) {
    const prompts::SampleBlock* found = nullptr;
    for (const auto& b : blocks)
      if (b.role == role) found = &b;
    return found;
  }

  CompletionResult assess_reply(const Message& prompt) const {
    using namespace heuristicdetail;
    auto samples = prompts::extract_sample_blocks(prompt.content);
    auto rules = prompts::extract_rule_blocks(prompt.content);
    const auto* fresh = latest_block(samples, "new");
    if (!fresh || rules.empty()) return Message::assistant("**False, None**");

    // Representative payloads present: token-set similarity against each.
    std::map<uint32_t, const prompts::SampleBlock*> repr_by_rule;
    for (const auto& s : samples) {
      if (s.role != "representative") continue;
      const prompts::RuleBlockRef* owner = nullptr;
      for (const auto& r : rules)
        if (r.pos < s.pos && (!owner || r.pos > owner->pos)) owner = &r;
      if (owner && !repr_by_rule.count(owner->sid)) repr_by_rule[owner->sid] = &s;
    }
    if (!repr_by_rule.empty()) {
      auto fresh_tokens = payload_tokens(fresh->bytes);
      double best = 0.0;
      uint32_t best_sid = 0;
      for (const auto& [sid, block] : repr_by_rule) {
        double sim = jaccard(fresh_tokens, payload_tokens(block->bytes));
        if (sim > best || (sim == best && best_sid != 0 && sid < best_sid)) {
          best = sim;
          best_sid = sid;
        }
      }
      if (best >= 0.5 && best_sid != 0)
        return Message::assistant("**True, " + std::to_string(best_sid) + "**");
      return Message::assistant("**False, None**");
    }

    // No representatives stored: fall back to content containment.
    std::size_t best_len = 0;
    uint32_t best_sid = 0;
    for (const auto& r : rules) {
      auto parsed = parse_rule(r.text);
      const auto* rule = std::get_if<Rule>(&parsed);
      if (!rule) continue;
      auto content = primary_content(*rule);
      if (!content || content->size() < 4) continue;
      if (!contains_nocase(fresh->bytes, *content)) continue;
      if (content->size() > best_len || (content->size() == best_len && r.sid < best_sid)) {
        best_len = content->size();
        best_sid = r.sid;
      }
    }
    if (best_sid != 0) return Message::assistant("**True, " + std::to_string(best_sid) + "**");
    return Message::assistant("**False, None**");
  }

  CompletionResult analysis_reply(const Message& prompt, bool repair) const {
    using namespace heuristicdetail;
    auto samples = prompts::extract_sample_blocks(prompt.content);
    const auto* fresh = latest_block(samples, "new");
    if (!fresh) return Message::assistant("No payload found to analyze.");
    PayloadView view = payload_view(fresh->bytes);
    auto marks = distinctive_tokens(view, 2);
    std::string out = repair ? "The variant keeps the same mechanism. " : "";
    out += "Request line targets " + (view.uri.empty() ? std::string("an opaque stream") : view.uri) +
           ". Distinctive tokens:";
    if (marks.empty()) out += " none beyond generic vocabulary";
    for (std::size_t i = 0; i < marks.size(); ++i)
      out += (i ? ", " : " ") + marks[i].lower;
    out += ".";
    return Message::assistant(out);
  }

  CompletionResult generate_reply(const Conversation& conv, const Message& prompt,
                                  bool broaden) const {
    using namespace heuristicdetail;
    uint32_t floor = prompts::extract_sid_floor(prompt.content).value_or(1000001);
    std::optional<prompts::SampleBlock> fresh;
    for (const auto& m : conv.messages) {
      if (m.role != Role::user) continue;
      auto blocks = prompts::extract_sample_blocks(m.content);
      if (const auto* b = latest_block(blocks, "new")) fresh = *b;
    }
    if (!fresh) return Message::assistant("No payload available; cannot write a rule.");
    PayloadView view = payload_view(fresh->bytes);
    auto marks = distinctive_tokens(view, 2);
    if (marks.empty()) {
      std::string span = view.uri.size() >= 4 ? view.uri.substr(0, 16) : fresh->bytes.substr(0, 16);
      std::string rule = build_rule("autogen " + fresh->id, !view.uri.empty(), span, true,
                                    "web-application-attack", floor, 1);
      return Message::assistant(rule + "\n");
    }
    std::string out;
    uint32_t sid = floor;
    for (const auto& mark : marks) {
      out += build_rule("autogen " + mark.lower, mark.from_uri, mark.original, broaden,
                        "web-application-attack", sid, 1);
      out += "\n";
      ++sid;
    }
    return Message::assistant(out);
  }

  CompletionResult repair_reply(const Conversation& conv, const Message& prompt,
                                bool broaden) const {
    using namespace heuristicdetail;
    (void)broaden;
    auto rules = prompts::extract_rule_blocks(prompt.content);
    std::optional<prompts::SampleBlock> fresh;
    std::optional<prompts::SampleBlock> repr;
    for (const auto& m : conv.messages) {
      if (m.role != Role::user) continue;
      auto blocks = prompts::extract_sample_blocks(m.content);
      if (const auto* b = latest_block(blocks, "new")) fresh = *b;
      if (const auto* b = latest_block(blocks, "representative")) repr = *b;
    }
    if (rules.empty() || !fresh)
      return Message::assistant("No rule or payload available; cannot repair.");
    const auto& target = rules.back();
    auto parsed = parse_rule(target.text);
    const Rule* old_rule = std::get_if<Rule>(&parsed);

    std::string msg = old_rule && !old_rule->msg.empty() ? old_rule->msg : "repaired rule";
    std::string classtype = "web-application-attack";
    uint32_t rev = 1;
    if (old_rule) {
      for (const auto& opt : old_rule->options) {
        if (const auto* ct = std::get_if<ClasstypeOption>(&opt)) classtype = ct->name;
        if (const auto* rv = std::get_if<RevOption>(&opt)) rev = rv->rev;
      }
    }

    PayloadView fresh_view = payload_view(fresh->bytes);
    std::string content;
    bool uri_buffer = true;
    if (repr) {
      PayloadView repr_view = payload_view(repr->bytes);
      std::string uri_lcs = lcs_nocase(fresh_view.uri, repr_view.uri);
      std::string body_lcs = lcs_nocase(fresh_view.body, repr_view.body);
      if (body_lcs.size() > uri_lcs.size()) {
        content = body_lcs;
        uri_buffer = false;
      } else {
        content = uri_lcs;
      }
    }
    if (content.size() < 4) {
      auto marks = distinctive_tokens(fresh_view, 1);
      if (!marks.empty()) {
        content = marks[0].original;
        uri_buffer = marks[0].from_uri;
      } else {
        content = fresh_view.uri.size() >= 4 ? fresh_view.uri.substr(0, 16)
                                             : fresh->bytes.substr(0, 16);
      }
    }
    std::string rule =
        build_rule(msg, uri_buffer, content, true, classtype, target.sid, rev + 1);
    return Message::assistant(rule + "\n");
  }

  CompletionResult feedback_reply(const Conversation& conv) const {
    // Validation rejected the last candidates: rebuild from the staged prompt
    // with case-insensitive matching turned on.
    for (auto it = conv.messages.rbegin(); it != conv.messages.rend(); ++it) {
      if (it->role != Role::user) continue;
      std::string stage = stage_of(it->content);
      if (stage == prompts::kGenerateRulesMarker) return generate_reply(conv, *it, true);
      if (stage == prompts::kRepairRulesMarker) return repair_reply(conv, *it, true);
    }
    return Message::assistant("No earlier rule request found; cannot revise.");
  }

  CompletionResult select_reply(const Message& prompt) const {
    auto sids = prompts::extract_listed_sids(prompt.content);
    if (sids.empty()) return Message::assistant("None");
    uint32_t best = *std::min_element(sids.begin(), sids.end());
    return Message::assistant(std::to_string(best));
  }

  CompletionResult mem_update_reply(const Message& prompt) const {
    using namespace heuristicdetail;
    auto samples = prompts::extract_sample_blocks(prompt.content);
    auto rules = prompts::extract_rule_blocks(prompt.content);
    const auto* incumbent = latest_block(samples, "representative");
    const auto* fresh = latest_block(samples, "new");
    if (!incumbent && fresh) return Message::assistant(fresh->id);
    if (!fresh && incumbent) return Message::assistant(incumbent->id);
    if (!fresh && !incumbent) return Message::assistant("None");

    std::optional<std::string> content;
    if (!rules.empty()) {
      auto parsed = parse_rule(rules.back().text);
      if (const auto* rule = std::get_if<Rule>(&parsed)) content = primary_content(*rule);
    }
    bool incumbent_ok = !content || contains_nocase(incumbent->bytes, *content);
    bool fresh_ok = !content || contains_nocase(fresh->bytes, *content);
    if (incumbent_ok && !fresh_ok) return Message::assistant(incumbent->id);
    if (fresh_ok && !incumbent_ok) return Message::assistant(fresh->id);
    // Both qualify (or neither): keep the payload with the most context bytes,
    // favoring the stored representative on a tie.
    if (fresh->bytes.size() > incumbent->bytes.size()) return Message::assistant(fresh->id);
    return Message::assistant(incumbent->id);
  }
};

}  // namespace gridai
