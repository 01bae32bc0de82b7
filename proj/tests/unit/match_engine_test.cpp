#include "gridai/match.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <random>
#include <string>
#include <vector>

namespace gridai {
namespace {

AttackSample make_sample(std::string id, std::string method, std::string uri,
                         std::vector<std::pair<std::string, std::string>> headers,
                         std::string body = "") {
  AttackSample s;
  s.id = std::move(id);
  s.request.method = std::move(method);
  s.request.uri = std::move(uri);
  s.request.version = "HTTP/1.1";
  s.request.headers = std::move(headers);
  s.request.body = std::move(body);
  s.raw = render_http_request(s.request);
  return s;
}

Rule parse_ok(const std::string& text) {
  ParseResult r = parse_rule(text);
  if (!std::holds_alternative<Rule>(r)) {
    ADD_FAILURE() << "parse failed: " << std::get<FormatError>(r).detail << " in " << text;
    return Rule{};
  }
  return std::get<Rule>(std::move(r));
}

TEST(MatchBuffers, StickyBuffersSelectRequestParts) {
  AttackSample s = make_sample("s1", "POST", "/CFIDE/administrator/index.cfm",
                               {{"Host", "app.example.test"},
                                {"User-Agent", "probe/2.0"},
                                {"Cookie", "sess=abc123"}},
                               "mode=exec&cmd=id");

  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; content:\"/CFIDE/\"; sid:1;)"), s));
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.method; content:\"POST\"; sid:2;)"), s));
  EXPECT_FALSE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.method; content:\"GET\"; sid:3;)"), s));
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.host; content:\"app.example.test\"; sid:4;)"), s));
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.user_agent; content:\"probe\"; sid:5;)"), s));
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.cookie; content:\"sess=\"; sid:6;)"), s));
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.request_body; content:\"cmd=id\"; sid:7;)"), s));
  // header buffer is the joined Name: value\r\n block, original case
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.header; content:\"User-Agent: probe\"; sid:8;)"), s));
  // raw buffer sees the request line
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; content:\"POST /CFIDE\"; sid:9;)"), s));
  // uri content does not leak into body matching
  EXPECT_FALSE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.request_body; content:\"/CFIDE/\"; sid:10;)"), s));
}

TEST(MatchContent, CaseSensitivityAndNocase) {
  AttackSample s = make_sample("s1", "GET", "/AdMiN/panel", {{"Host", "x"}});
  EXPECT_FALSE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; content:\"/admin/\"; sid:1;)"), s));
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; content:\"/admin/\"; nocase; sid:2;)"), s));
}

TEST(MatchContent, WindowModifiers) {
  AttackSample s = make_sample("s1", "GET", "abcdefgh", {{"Host", "x"}});
  auto uri_rule = [](const std::string& opts, int sid) {
    return parse_ok("alert http any any -> any any (msg:\"m\"; http.uri; " + opts +
                    " sid:" + std::to_string(sid) + ";)");
  };
  // offset: match starts at or after it
  EXPECT_TRUE(rule_matches(uri_rule("content:\"cde\"; offset:2;", 1), s));
  EXPECT_FALSE(rule_matches(uri_rule("content:\"cde\"; offset:3;", 2), s));
  // depth: window length measured from offset
  EXPECT_TRUE(rule_matches(uri_rule("content:\"cde\"; offset:2; depth:3;", 3), s));
  EXPECT_FALSE(rule_matches(uri_rule("content:\"cde\"; offset:2; depth:2;", 4), s));
  EXPECT_TRUE(rule_matches(uri_rule("content:\"abc\"; depth:3;", 5), s));
  EXPECT_FALSE(rule_matches(uri_rule("content:\"abcd\"; depth:3;", 6), s));
  // anchors
  EXPECT_TRUE(rule_matches(uri_rule("content:\"abc\"; startswith;", 7), s));
  EXPECT_FALSE(rule_matches(uri_rule("content:\"bcd\"; startswith;", 8), s));
  EXPECT_TRUE(rule_matches(uri_rule("content:\"fgh\"; endswith;", 9), s));
  EXPECT_FALSE(rule_matches(uri_rule("content:\"efg\"; endswith;", 10), s));
  // needle longer than buffer
  EXPECT_FALSE(rule_matches(uri_rule("content:\"abcdefghi\";", 11), s));
}

TEST(MatchContent, Negation) {
  AttackSample s = make_sample("s1", "GET", "/shop/cart", {{"Host", "x"}});
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; content:!\"/admin\"; sid:1;)"), s));
  EXPECT_FALSE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; content:!\"/shop\"; sid:2;)"), s));
  // negated plus positive combine conjunctively
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; content:\"/shop\"; "
      "content:!\"logout\"; sid:3;)"), s));
}

TEST(MatchPcre, IcaseFlagAndBufferBinding) {
  AttackSample s = make_sample("s1", "GET", "/files/.HTACCESS?op=read", {{"Host", "x"}});
  EXPECT_TRUE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; pcre:\"/\\/\\.htaccess/i\"; sid:1;)"), s));
  EXPECT_FALSE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.uri; pcre:\"/\\/\\.htaccess/\"; sid:2;)"), s));
  EXPECT_FALSE(rule_matches(parse_ok(
      "alert http any any -> any any (msg:\"m\"; http.request_body; pcre:\"/htaccess/i\"; sid:3;)"), s));
}

TEST(MatchEndpoints, AppliedOnlyWhenSampleHasThem) {
  AttackSample s = make_sample("s1", "GET", "/x", {{"Host", "x"}});
  Rule pinned = parse_ok(
      "alert http 10.0.0.1 4000 -> 10.0.0.2 80 (msg:\"m\"; http.uri; content:\"/x\"; sid:1;)");
  // .http sample: endpoint constraints are vacuously satisfied
  EXPECT_TRUE(rule_matches(pinned, s));

  s.endpoints = FlowEndpoints{"10.0.0.1", 4000, "10.0.0.2", 80};
  EXPECT_TRUE(rule_matches(pinned, s));
  s.endpoints->src_port = 4001;
  EXPECT_FALSE(rule_matches(pinned, s));
  s.endpoints = FlowEndpoints{"10.9.9.9", 4000, "10.0.0.2", 80};
  EXPECT_FALSE(rule_matches(pinned, s));
}

TEST(MatchSample, AscendingSidOneAlertPerRule) {
  AttackSample s = make_sample("s1", "GET", "/evil/evil", {{"Host", "x"}});
  std::vector<Rule> rules = {
      parse_ok("alert http any any -> any any (msg:\"c\"; http.uri; content:\"evil\"; "
               "content:\"/evil\"; sid:30;)"),
      parse_ok("alert http any any -> any any (msg:\"a\"; http.uri; content:\"evil\"; sid:10;)"),
      parse_ok("alert http any any -> any any (msg:\"miss\"; http.uri; content:\"none\"; sid:20;)"),
  };
  auto alerts = match_sample(rules, s);
  ASSERT_EQ(alerts.size(), 2u);
  EXPECT_EQ(alerts[0].sid, 10u);
  EXPECT_EQ(alerts[0].msg, "a");
  EXPECT_EQ(alerts[1].sid, 30u);
  EXPECT_EQ(alerts[1].sample_id, "s1");
}

TEST(CheckAndTest, FormatErrorMeansNoAlerts) {
  AttackSample s = make_sample("s1", "GET", "/evil", {{"Host", "x"}});
  ValidationReport report = check_and_test(
      "alert http any any -> any any (msg:\"ok\"; http.uri; content:\"evil\"; sid:1;)\n"
      "alert http any any -> any any (msg:\"bad\"; is:\"y\"; sid:2;)\n",
      {s});
  EXPECT_FALSE(report.format_ok);
  ASSERT_EQ(report.format_errors.size(), 1u);
  EXPECT_EQ(report.format_errors[0].kind, ErrorKind::unknown_keyword);
  EXPECT_TRUE(report.alerts.empty());
  EXPECT_TRUE(report.alerting_sids("s1").empty());
  EXPECT_EQ(report.per_sample.count("s1"), 1u);
}

TEST(CheckAndTest, ReportsPerSampleSids) {
  AttackSample hit = make_sample("hit", "GET", "/evil", {{"Host", "x"}});
  AttackSample miss = make_sample("miss", "GET", "/fine", {{"Host", "x"}});
  ValidationReport report = check_and_test(
      "alert http any any -> any any (msg:\"ok\"; http.uri; content:\"evil\"; sid:7;)\n",
      {hit, miss});
  EXPECT_TRUE(report.format_ok);
  EXPECT_EQ(report.alerting_sids("hit"), std::set<uint32_t>{7u});
  EXPECT_TRUE(report.alerting_sids("miss").empty());
  ASSERT_EQ(report.alerts.size(), 1u);
  EXPECT_EQ(report.alerts[0].sample_id, "hit");

  auto j = report.to_json();
  EXPECT_TRUE(j["format_ok"].get<bool>());
  EXPECT_EQ(j["per_sample"]["hit"].size(), 1u);
  EXPECT_EQ(j["alerts"][0]["sid"].get<uint32_t>(), 7u);
}

// ---- randomized agreement with an independently written reference ----

namespace oracle {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string buffer_of(const AttackSample& sample, Buffer b) {
  switch (b) {
    case Buffer::raw: return sample.raw;
    case Buffer::http_uri: return sample.request.uri;
    case Buffer::http_method: return sample.request.method;
    case Buffer::http_user_agent: return sample.request.header("User-Agent").value_or("");
    case Buffer::http_cookie: return sample.request.header("Cookie").value_or("");
    case Buffer::http_request_body: return sample.request.body;
    case Buffer::http_host: return sample.request.header("Host").value_or("");
    case Buffer::http_header: {
      std::string out;
      for (const auto& [k, v] : sample.request.headers) out += k + ": " + v + "\r\n";
      return out;
    }
  }
  return {};
}

bool content_ok(const AttackSample& sample, const ContentOption& c) {
  std::string buf = buffer_of(sample, c.buffer);
  std::string hay = c.nocase ? lower(buf) : buf;
  std::string needle = c.nocase ? lower(c.bytes) : c.bytes;
  bool found = false;
  if (needle.size() <= hay.size()) {
    for (std::size_t p = 0; p + needle.size() <= hay.size(); ++p) {
      if (hay.compare(p, needle.size(), needle) != 0) continue;
      if (p < c.offset.value_or(0)) continue;
      if (c.depth && p + needle.size() > c.offset.value_or(0) + *c.depth) continue;
      if (c.startswith && p != 0) continue;
      if (c.endswith && p + needle.size() != hay.size()) continue;
      found = true;
      break;
    }
  }
  return c.negated ? !found : found;
}

bool pcre_ok(const AttackSample& sample, const PcreOption& p) {
  std::string buf = buffer_of(sample, p.buffer);
  auto flags = std::regex::ECMAScript;
  if (p.icase) flags |= std::regex::icase;
  return std::regex_search(buf, std::regex(p.pattern, flags));
}

bool matches(const Rule& rule, const AttackSample& sample) {
  for (const auto& opt : rule.options) {
    if (const auto* c = std::get_if<ContentOption>(&opt)) {
      if (!content_ok(sample, *c)) return false;
    } else if (const auto* p = std::get_if<PcreOption>(&opt)) {
      if (!pcre_ok(sample, *p)) return false;
    }
  }
  return true;
}

}  // namespace oracle

TEST(MatchAgreement, RandomRulesAgreeWithReferenceMatcher) {
  std::mt19937_64 rng(0x5eed03);
  const std::vector<std::string> tokens = {"admin", "login", "cart",  "evil",  "probe",
                                           "shop",  "data",  "panel", "xJZq",  "cmd"};
  auto token = [&] { return tokens[rng() % tokens.size()]; };

  std::vector<AttackSample> samples;
  for (int i = 0; i < 50; ++i) {
    std::string uri = "/" + token() + "/" + token() + "?" + token() + "=" + token();
    if (rng() % 2) {
      std::transform(uri.begin(), uri.end(), uri.begin(), [&](char c) {
        return rng() % 3 == 0 ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                              : c;
      });
    }
    samples.push_back(make_sample("s" + std::to_string(i), rng() % 2 ? "GET" : "POST", uri,
                                  {{"Host", token() + ".example.test"},
                                   {"User-Agent", token() + "/1." + std::to_string(rng() % 9)},
                                   {"Cookie", "k=" + token()}},
                                  rng() % 2 ? token() + "=" + token() : ""));
  }

  const std::vector<std::string> buffer_kw = {"http.uri",    "http.method",
                                              "http.header", "http.user_agent",
                                              "http.cookie", "http.request_body",
                                              "http.host"};
  std::vector<Rule> rules;
  for (int i = 0; i < 25; ++i) {
    std::string opts;
    if (rng() % 2) opts += buffer_kw[rng() % buffer_kw.size()] + "; ";
    int parts = 1 + static_cast<int>(rng() % 2);
    for (int k = 0; k < parts; ++k) {
      if (rng() % 5 == 0) {
        opts += "pcre:\"/" + token() + "/" + (rng() % 2 ? "i" : "") + "\"; ";
        continue;
      }
      opts += "content:";
      if (rng() % 6 == 0) opts += "!";
      std::string t = token();
      if (rng() % 3 == 0) t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
      opts += "\"" + t + "\"; ";
      if (rng() % 3 == 0) opts += "nocase; ";
      if (rng() % 5 == 0) opts += "offset:" + std::to_string(rng() % 6) + "; ";
      if (rng() % 5 == 0) opts += "depth:" + std::to_string(1 + rng() % 20) + "; ";
      if (rng() % 8 == 0) opts += "startswith; ";
      if (rng() % 8 == 0) opts += "endswith; ";
    }
    rules.push_back(parse_ok("alert http any any -> any any (msg:\"r\"; " + opts +
                             "sid:" + std::to_string(100 + i) + ";)"));
  }

  int hits = 0;
  for (const auto& rule : rules) {
    for (const auto& sample : samples) {
      bool expected = oracle::matches(rule, sample);
      bool actual = rule_matches(rule, sample);
      hits += actual;
      ASSERT_EQ(actual, expected)
          << "rule: " << render_rule(rule) << "\nsample uri: " << sample.request.uri;
    }
  }
  // the comparison must exercise both outcomes
  EXPECT_GT(hits, 0);
  EXPECT_LT(hits, static_cast<int>(rules.size() * samples.size()));
}

}  // namespace
}  // namespace gridai
