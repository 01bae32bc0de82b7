#pragma once

// Suricata-subset rule model: typed AST, strict parser, canonical renderer.
//
// The accepted grammar is deliberately narrow: `alert` rules over http/tcp,
// one direction (`->`), plain IPv4/any endpoints, and a whitelisted option
// set (msg, sid, rev, classtype, flow, sticky buffers, content with a few
// modifiers, pcre with at most the `i` flag). Everything else that is valid
// Suricata is classified as unsupported_construct rather than syntax, so
// callers can tell "outside the subset" from "not a rule at all".

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gridai {

enum class Protocol { http, tcp };

enum class Buffer {
  raw,
  http_uri,
  http_method,
  http_header,
  http_user_agent,
  http_cookie,
  http_request_body,
  http_host,
};

inline const char* buffer_keyword(Buffer b) {
  switch (b) {
    case Buffer::raw: return "raw";
    case Buffer::http_uri: return "http.uri";
    case Buffer::http_method: return "http.method";
    case Buffer::http_header: return "http.header";
    case Buffer::http_user_agent: return "http.user_agent";
    case Buffer::http_cookie: return "http.cookie";
    case Buffer::http_request_body: return "http.request_body";
    case Buffer::http_host: return "http.host";
  }
  return "raw";
}

inline std::optional<Buffer> buffer_from_keyword(std::string_view kw) {
  static const std::array<std::pair<std::string_view, Buffer>, 7> table{{
      {"http.uri", Buffer::http_uri},
      {"http.method", Buffer::http_method},
      {"http.header", Buffer::http_header},
      {"http.user_agent", Buffer::http_user_agent},
      {"http.cookie", Buffer::http_cookie},
      {"http.request_body", Buffer::http_request_body},
      {"http.host", Buffer::http_host},
  }};
  for (const auto& [k, v] : table)
    if (k == kw) return v;
  return std::nullopt;
}

// Endpoint specifiers. A nullopt value means `any`.
struct AddrSpec {
  std::optional<std::string> ip;  // dotted IPv4 when present
  bool operator==(const AddrSpec&) const = default;
};

struct PortSpec {
  std::optional<uint16_t> port;
  bool operator==(const PortSpec&) const = default;
};

struct MsgOption {
  std::string text;
  bool operator==(const MsgOption&) const = default;
};

struct SidOption {
  uint32_t sid = 0;
  bool operator==(const SidOption&) const = default;
};

struct RevOption {
  uint32_t rev = 1;
  bool operator==(const RevOption&) const = default;
};

struct ClasstypeOption {
  std::string name;
  bool operator==(const ClasstypeOption&) const = default;
};

struct FlowOption {
  bool to_server = false;
  bool established = false;
  bool operator==(const FlowOption&) const = default;
};

// Sticky buffer switch; applies to subsequent content/pcre options.
struct BufferOption {
  Buffer buffer = Buffer::raw;
  bool operator==(const BufferOption&) const = default;
};

struct ContentOption {
  std::string bytes;  // decoded, may contain arbitrary byte values
  bool negated = false;
  bool nocase = false;
  std::optional<uint32_t> offset;
  std::optional<uint32_t> depth;
  bool startswith = false;
  bool endswith = false;
  Buffer buffer = Buffer::raw;  // resolved from the active sticky buffer
  bool operator==(const ContentOption&) const = default;
};

struct PcreOption {
  std::string pattern;  // between the slashes, verbatim
  bool icase = false;
  Buffer buffer = Buffer::raw;
  bool operator==(const PcreOption&) const = default;
};

using RuleOption = std::variant<MsgOption, SidOption, RevOption, ClasstypeOption,
                                FlowOption, BufferOption, ContentOption, PcreOption>;

struct Rule {
  Protocol protocol = Protocol::http;
  AddrSpec src_addr;
  PortSpec src_port;
  AddrSpec dst_addr;
  PortSpec dst_port;
  std::vector<RuleOption> options;

  // Extracted for convenience; also present in options.
  uint32_t sid = 0;
  std::string msg;

  // Verbatim input; excluded from equality.
  std::string source_text;

  bool operator==(const Rule& o) const {
    return protocol == o.protocol && src_addr == o.src_addr && src_port == o.src_port &&
           dst_addr == o.dst_addr && dst_port == o.dst_port && options == o.options;
  }
};

enum class ErrorKind {
  syntax,
  unknown_keyword,
  unsupported_construct,
  missing_sid,
  duplicate_sid_in_set,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::syntax: return "syntax";
    case ErrorKind::unknown_keyword: return "unknown_keyword";
    case ErrorKind::unsupported_construct: return "unsupported_construct";
    case ErrorKind::missing_sid: return "missing_sid";
    case ErrorKind::duplicate_sid_in_set: return "duplicate_sid_in_set";
  }
  return "syntax";
}

struct FormatError {
  ErrorKind kind = ErrorKind::syntax;
  std::size_t position = 0;  // byte offset into the rule text
  std::string detail;
  bool operator==(const FormatError&) const = default;
};

using ParseResult = std::variant<Rule, FormatError>;
using RulesetResult = std::variant<std::vector<Rule>, std::vector<FormatError>>;

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Suricata keywords that are real but outside the supported subset. Seeing
// one of these is an unsupported_construct; anything not here and not in the
// supported set is unknown_keyword (the hallucination case).
inline bool is_recognized_unsupported_option(std::string_view kw) {
  static const std::set<std::string_view> table{
      "reference", "priority", "metadata", "target", "threshold",
      "detection_filter", "flowbits", "flowint", "xbits", "hostbits",
      "noalert", "gid", "distance", "within", "isdataat", "bsize", "dsize",
      "byte_test", "byte_jump", "byte_extract", "byte_math", "rawbytes",
      "replace", "fast_pattern", "prefilter", "urilen", "stream_size", "seq",
      "ack", "window", "flags", "ttl", "itype", "icode", "icmp_id",
      "icmp_seq", "fragbits", "fragoffset", "id", "ipopts", "ip_proto",
      "sameip", "geoip", "tos", "tag", "file_data", "file.data", "filename",
      "file.name", "filemagic", "filestore", "fileext", "filemd5",
      "base64_decode", "base64_data", "asn1", "dce_iface", "dce_opnum",
      "dce_stub_data", "lua", "luajit", "datarep", "dataset",
      // legacy http modifiers, superseded by sticky buffers
      "http_uri", "http_raw_uri", "http_method", "http_header",
      "http_raw_header", "http_cookie", "http_user_agent", "http_client_body",
      "http_server_body", "http_stat_code", "http_stat_msg", "http_host",
      "http_raw_host",
      // sticky buffers outside the request-side subset
      "http.stat_code", "http.stat_msg", "http.response_body",
      "http.response_line", "http.request_line", "http.start",
      "http.protocol", "http.location", "http.server", "http.accept",
      "http.accept_lang", "http.accept_enc", "http.referer",
      "http.content_type", "http.content_len", "http.connection",
      "http.raw_uri", "http.raw_header", "http.header_names", "http.uri.raw",
      "http.header.raw", "http.method.raw", "http.cookie.raw",
      "tls.sni", "tls.cert_subject", "dns.query", "ja3.hash", "ja3s.hash",
      "ssl_version", "ssl_state", "app-layer-event", "app-layer-protocol",
  };
  return table.count(kw) != 0;
}

inline bool is_recognized_unsupported_protocol(std::string_view p) {
  static const std::set<std::string_view> table{
      "udp", "icmp", "ip", "dns", "tls", "ssh", "smtp", "ftp", "smb",
      "dcerpc", "dhcp", "dnp3", "enip", "ftp-data", "http2", "ikev2", "imap",
      "krb5", "modbus", "mqtt", "nfs", "ntp", "rdp", "rfb", "sip", "snmp",
      "ssl", "tftp",
  };
  return table.count(p) != 0;
}

inline bool is_recognized_unsupported_action(std::string_view a) {
  static const std::set<std::string_view> table{
      "drop", "pass", "reject", "rejectsrc", "rejectdst", "rejectboth", "log",
  };
  return table.count(a) != 0;
}

inline bool parse_uint(std::string_view s, uint64_t& out, uint64_t max) {
  if (s.empty() || s.size() > 10) return false;
  out = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    out = out * 10 + static_cast<uint64_t>(c - '0');
  }
  return out <= max;
}

inline bool valid_ipv4(std::string_view s) {
  int parts = 0;
  std::size_t i = 0;
  while (i <= s.size()) {
    std::size_t j = i;
    while (j < s.size() && s[j] != '.') ++j;
    uint64_t v = 0;
    if (!parse_uint(s.substr(i, j - i), v, 255)) return false;
    if (j - i > 1 && s[i] == '0') return false;  // no leading zeros
    ++parts;
    if (j == s.size()) break;
    i = j + 1;
  }
  return parts == 4;
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  void skip_ws() {
    while (!done() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  std::string_view take_until_ws() {
    std::size_t start = pos;
    while (!done() && text[pos] != ' ' && text[pos] != '\t' && text[pos] != '(') ++pos;
    return text.substr(start, pos - start);
  }
};

inline FormatError err(ErrorKind kind, std::size_t pos, std::string detail) {
  return FormatError{kind, pos, std::move(detail)};
}

inline bool hex_value(char c, unsigned& v) {
  if (c >= '0' && c <= '9') { v = static_cast<unsigned>(c - '0'); return true; }
  if (c >= 'a' && c <= 'f') { v = static_cast<unsigned>(c - 'a' + 10); return true; }
  if (c >= 'A' && c <= 'F') { v = static_cast<unsigned>(c - 'A' + 10); return true; }
  return false;
}

// Decodes a quoted option value starting at text[pos] == '"'. Supports
// backslash escapes and, when allow_hex is set, |41 42| byte runs.
inline std::variant<std::string, FormatError> decode_quoted(std::string_view text,
                                                            std::size_t& pos,
                                                            bool allow_hex) {
  if (pos >= text.size() || text[pos] != '"')
    return err(ErrorKind::syntax, pos, "expected quoted value");
  ++pos;
  std::string out;
  while (true) {
    if (pos >= text.size())
      return err(ErrorKind::syntax, pos, "unterminated quoted value");
    char c = text[pos];
    if (c == '"') {
      ++pos;
      return out;
    }
    if (c == '\\') {
      if (pos + 1 >= text.size())
        return err(ErrorKind::syntax, pos, "dangling escape");
      char e = text[pos + 1];
      if (e != '"' && e != '\\' && e != ';' && e != ':')
        return err(ErrorKind::syntax, pos, std::string("invalid escape \\") + e);
      out.push_back(e);
      pos += 2;
      continue;
    }
    if (c == '|' && allow_hex) {
      ++pos;
      std::string hexrun;
      while (pos < text.size() && text[pos] != '|') hexrun.push_back(text[pos++]);
      if (pos >= text.size())
        return err(ErrorKind::syntax, pos, "unterminated hex run");
      ++pos;  // closing '|'
      unsigned hi = 0, lo = 0;
      std::size_t i = 0;
      while (i < hexrun.size()) {
        if (hexrun[i] == ' ') { ++i; continue; }
        if (i + 1 >= hexrun.size() || !hex_value(hexrun[i], hi) || !hex_value(hexrun[i + 1], lo))
          return err(ErrorKind::syntax, pos, "malformed hex run");
        out.push_back(static_cast<char>((hi << 4) | lo));
        i += 2;
      }
      continue;
    }
    if (c == '\n' || c == '\r')
      return err(ErrorKind::syntax, pos, "newline inside quoted value");
    out.push_back(c);
    ++pos;
  }
}

inline bool needs_hex_render(unsigned char c) {
  return c == '|' || c < 0x20 || c > 0x7e;
}

// Canonical escaping for quoted values: backslash-escape the structural
// characters, emit everything non-printable (and '|') as grouped hex runs.
inline std::string encode_quoted(std::string_view bytes, bool allow_hex) {
  std::string out;
  std::size_t i = 0;
  while (i < bytes.size()) {
    unsigned char c = static_cast<unsigned char>(bytes[i]);
    if (allow_hex && needs_hex_render(c)) {
      out.push_back('|');
      bool first = true;
      while (i < bytes.size() && needs_hex_render(static_cast<unsigned char>(bytes[i]))) {
        if (!first) out.push_back(' ');
        static const char* digits = "0123456789ABCDEF";
        unsigned char b = static_cast<unsigned char>(bytes[i]);
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
        first = false;
        ++i;
      }
      out.push_back('|');
      continue;
    }
    if (c == '"' || c == '\\' || c == ';') out.push_back('\\');
    out.push_back(static_cast<char>(c));
    ++i;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

// Parses one rule line. No embedded newlines are accepted; parse_ruleset
// handles line splitting and cross-rule checks.
inline ParseResult parse_rule(std::string_view text) {
  using namespace detail;
  if (text.find('\n') != std::string_view::npos || text.find('\r') != std::string_view::npos)
    return err(ErrorKind::syntax, text.find_first_of("\r\n"), "embedded newline");

  Cursor cur{text};
  cur.skip_ws();
  if (cur.done()) return err(ErrorKind::syntax, 0, "empty rule");

  Rule rule;
  rule.source_text = std::string(text);

  // --- header ---
  std::size_t action_pos = cur.pos;
  std::string_view action = cur.take_until_ws();
  if (!iequals(action, "alert")) {
    std::string low = lowercase(action);
    if (is_recognized_unsupported_action(low))
      return err(ErrorKind::unsupported_construct, action_pos,
                 "action '" + low + "' is not supported; only alert");
    return err(ErrorKind::syntax, action_pos, "expected rule action");
  }

  cur.skip_ws();
  std::size_t proto_pos = cur.pos;
  std::string_view proto = cur.take_until_ws();
  std::string proto_low = lowercase(proto);
  if (proto_low == "http") {
    rule.protocol = Protocol::http;
  } else if (proto_low == "tcp") {
    rule.protocol = Protocol::tcp;
  } else if (is_recognized_unsupported_protocol(proto_low)) {
    return err(ErrorKind::unsupported_construct, proto_pos,
               "protocol '" + proto_low + "' is not supported");
  } else {
    return err(ErrorKind::syntax, proto_pos, "expected protocol");
  }

  auto parse_addr = [&](AddrSpec& out) -> std::optional<FormatError> {
    cur.skip_ws();
    std::size_t p = cur.pos;
    std::string_view tok = cur.take_until_ws();
    if (tok.empty()) return err(ErrorKind::syntax, p, "expected address");
    if (iequals(tok, "any")) {
      out.ip.reset();
      return std::nullopt;
    }
    if (tok.front() == '$' || tok.front() == '[' || tok.front() == '!' ||
        tok.find('/') != std::string_view::npos)
      return err(ErrorKind::unsupported_construct, p,
                 "address variables, lists, negation and CIDR are not supported");
    if (!valid_ipv4(tok)) return err(ErrorKind::syntax, p, "bad address");
    out.ip = std::string(tok);
    return std::nullopt;
  };

  auto parse_port = [&](PortSpec& out) -> std::optional<FormatError> {
    cur.skip_ws();
    std::size_t p = cur.pos;
    std::string_view tok = cur.take_until_ws();
    if (tok.empty()) return err(ErrorKind::syntax, p, "expected port");
    if (iequals(tok, "any")) {
      out.port.reset();
      return std::nullopt;
    }
    if (tok.front() == '$' || tok.front() == '[' || tok.front() == '!' ||
        tok.find(':') != std::string_view::npos)
      return err(ErrorKind::unsupported_construct, p,
                 "port variables, lists, negation and ranges are not supported");
    uint64_t v = 0;
    if (!parse_uint(tok, v, 65535)) return err(ErrorKind::syntax, p, "bad port");
    out.port = static_cast<uint16_t>(v);
    return std::nullopt;
  };

  if (auto e = parse_addr(rule.src_addr)) return *e;
  if (auto e = parse_port(rule.src_port)) return *e;

  cur.skip_ws();
  std::size_t dir_pos = cur.pos;
  std::string_view dir = cur.take_until_ws();
  if (dir == "<>")
    return err(ErrorKind::unsupported_construct, dir_pos, "bidirectional rules are not supported");
  if (dir != "->") return err(ErrorKind::syntax, dir_pos, "expected '->'");

  if (auto e = parse_addr(rule.dst_addr)) return *e;
  if (auto e = parse_port(rule.dst_port)) return *e;

  cur.skip_ws();
  if (cur.done() || cur.peek() != '(')
    return err(ErrorKind::syntax, cur.pos, "expected '(' to open options");
  ++cur.pos;

  // --- options ---
  bool saw_msg = false, saw_sid = false, saw_rev = false, saw_classtype = false,
       saw_flow = false;
  Buffer active_buffer = Buffer::raw;
  // Index of the content option a trailing modifier may attach to; reset by
  // any non-modifier option so modifiers must directly follow their content.
  std::optional<std::size_t> open_content;
  bool closed = false;

  while (true) {
    cur.skip_ws();
    if (cur.done()) break;
    if (cur.peek() == ')') {
      ++cur.pos;
      closed = true;
      break;
    }

    std::size_t kw_pos = cur.pos;
    std::size_t kw_end = kw_pos;
    while (kw_end < text.size()) {
      char c = text[kw_end];
      if (c == ':' || c == ';' || c == ')' || c == ' ' || c == '\t') break;
      ++kw_end;
    }
    std::string kw = lowercase(text.substr(kw_pos, kw_end - kw_pos));
    if (kw.empty()) return err(ErrorKind::syntax, kw_pos, "expected option keyword");
    cur.pos = kw_end;
    cur.skip_ws();

    bool has_value = !cur.done() && cur.peek() == ':';
    if (has_value) {
      ++cur.pos;
      cur.skip_ws();
    }

    auto take_bare_value = [&]() -> std::variant<std::string, FormatError> {
      std::size_t start = cur.pos;
      while (!cur.done() && cur.peek() != ';' && cur.peek() != ')') ++cur.pos;
      if (cur.done()) return err(ErrorKind::syntax, start, "unterminated option value");
      std::string v(trim(text.substr(start, cur.pos - start)));
      return v;
    };

    auto expect_semicolon = [&]() -> std::optional<FormatError> {
      cur.skip_ws();
      if (cur.done() || cur.peek() != ';')
        return err(ErrorKind::syntax, cur.pos, "expected ';' after option");
      ++cur.pos;
      return std::nullopt;
    };

    if (kw == "msg") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, "msg requires a value");
      if (saw_msg) return err(ErrorKind::syntax, kw_pos, "duplicate msg option");
      auto decoded = decode_quoted(text, cur.pos, /*allow_hex=*/false);
      if (std::holds_alternative<FormatError>(decoded)) return std::get<FormatError>(decoded);
      std::string v = std::get<std::string>(decoded);
      if (v.empty()) return err(ErrorKind::syntax, kw_pos, "empty msg");
      if (auto e = expect_semicolon()) return *e;
      saw_msg = true;
      rule.msg = v;
      rule.options.push_back(MsgOption{std::move(v)});
      open_content.reset();
    } else if (kw == "sid") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, "sid requires a value");
      if (saw_sid) return err(ErrorKind::syntax, kw_pos, "duplicate sid option");
      auto v = take_bare_value();
      if (std::holds_alternative<FormatError>(v)) return std::get<FormatError>(v);
      uint64_t n = 0;
      if (!parse_uint(std::get<std::string>(v), n, 0xffffffffULL) || n == 0)
        return err(ErrorKind::syntax, kw_pos, "sid must be a positive integer");
      if (auto e = expect_semicolon()) return *e;
      saw_sid = true;
      rule.sid = static_cast<uint32_t>(n);
      rule.options.push_back(SidOption{rule.sid});
      open_content.reset();
    } else if (kw == "rev") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, "rev requires a value");
      if (saw_rev) return err(ErrorKind::syntax, kw_pos, "duplicate rev option");
      auto v = take_bare_value();
      if (std::holds_alternative<FormatError>(v)) return std::get<FormatError>(v);
      uint64_t n = 0;
      if (!parse_uint(std::get<std::string>(v), n, 0xffffffffULL) || n == 0)
        return err(ErrorKind::syntax, kw_pos, "rev must be a positive integer");
      if (auto e = expect_semicolon()) return *e;
      saw_rev = true;
      rule.options.push_back(RevOption{static_cast<uint32_t>(n)});
      open_content.reset();
    } else if (kw == "classtype") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, "classtype requires a value");
      if (saw_classtype) return err(ErrorKind::syntax, kw_pos, "duplicate classtype option");
      auto v = take_bare_value();
      if (std::holds_alternative<FormatError>(v)) return std::get<FormatError>(v);
      std::string name = std::get<std::string>(v);
      if (name.empty()) return err(ErrorKind::syntax, kw_pos, "empty classtype");
      for (char c : name)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
          return err(ErrorKind::syntax, kw_pos, "bad classtype name");
      if (auto e = expect_semicolon()) return *e;
      saw_classtype = true;
      rule.options.push_back(ClasstypeOption{std::move(name)});
      open_content.reset();
    } else if (kw == "flow") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, "flow requires a value");
      if (saw_flow) return err(ErrorKind::syntax, kw_pos, "duplicate flow option");
      auto v = take_bare_value();
      if (std::holds_alternative<FormatError>(v)) return std::get<FormatError>(v);
      FlowOption flow;
      std::string_view rest = std::get<std::string>(v);
      if (rest.empty()) return err(ErrorKind::syntax, kw_pos, "empty flow");
      while (!rest.empty()) {
        std::size_t comma = rest.find(',');
        std::string_view item = trim(rest.substr(0, comma));
        std::string item_low = lowercase(item);
        if (item_low == "to_server") {
          flow.to_server = true;
        } else if (item_low == "established") {
          flow.established = true;
        } else {
          static const std::set<std::string_view> known{
              "to_client", "from_server", "from_client", "stateless",
              "not_established", "only_stream", "no_stream", "only_frag",
              "no_frag"};
          if (known.count(item_low))
            return err(ErrorKind::unsupported_construct, kw_pos,
                       "flow '" + item_low + "' is not supported");
          return err(ErrorKind::syntax, kw_pos, "bad flow value");
        }
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (auto e = expect_semicolon()) return *e;
      saw_flow = true;
      rule.options.push_back(flow);
      open_content.reset();
    } else if (auto buf = buffer_from_keyword(kw)) {
      if (has_value) return err(ErrorKind::syntax, kw_pos, kw + " takes no value");
      if (rule.protocol == Protocol::tcp)
        return err(ErrorKind::unsupported_construct, kw_pos,
                   "http buffers require the http protocol");
      if (auto e = expect_semicolon()) return *e;
      active_buffer = *buf;
      rule.options.push_back(BufferOption{*buf});
      open_content.reset();
    } else if (kw == "content") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, "content requires a value");
      ContentOption content;
      content.buffer = active_buffer;
      if (!cur.done() && cur.peek() == '!') {
        content.negated = true;
        ++cur.pos;
        cur.skip_ws();
      }
      auto decoded = decode_quoted(text, cur.pos, /*allow_hex=*/true);
      if (std::holds_alternative<FormatError>(decoded)) return std::get<FormatError>(decoded);
      content.bytes = std::get<std::string>(decoded);
      if (content.bytes.empty()) return err(ErrorKind::syntax, kw_pos, "empty content");
      if (auto e = expect_semicolon()) return *e;
      rule.options.push_back(std::move(content));
      open_content = rule.options.size() - 1;
    } else if (kw == "nocase" || kw == "startswith" || kw == "endswith") {
      if (has_value) return err(ErrorKind::syntax, kw_pos, kw + " takes no value");
      if (!open_content)
        return err(ErrorKind::syntax, kw_pos, kw + " must follow a content option");
      if (auto e = expect_semicolon()) return *e;
      auto& content = std::get<ContentOption>(rule.options[*open_content]);
      bool* flag = kw == "nocase" ? &content.nocase
                   : kw == "startswith" ? &content.startswith
                                        : &content.endswith;
      if (*flag) return err(ErrorKind::syntax, kw_pos, "duplicate " + kw + " modifier");
      *flag = true;
    } else if (kw == "offset" || kw == "depth") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, kw + " requires a value");
      if (!open_content)
        return err(ErrorKind::syntax, kw_pos, kw + " must follow a content option");
      auto v = take_bare_value();
      if (std::holds_alternative<FormatError>(v)) return std::get<FormatError>(v);
      uint64_t n = 0;
      if (!parse_uint(std::get<std::string>(v), n, 0xffffffffULL))
        return err(ErrorKind::syntax, kw_pos, "bad " + kw + " value");
      if (auto e = expect_semicolon()) return *e;
      auto& content = std::get<ContentOption>(rule.options[*open_content]);
      if (kw == "offset") {
        if (content.offset) return err(ErrorKind::syntax, kw_pos, "duplicate offset modifier");
        content.offset = static_cast<uint32_t>(n);
      } else {
        if (content.depth) return err(ErrorKind::syntax, kw_pos, "duplicate depth modifier");
        if (n == 0) return err(ErrorKind::syntax, kw_pos, "depth must be positive");
        content.depth = static_cast<uint32_t>(n);
      }
    } else if (kw == "pcre") {
      if (!has_value) return err(ErrorKind::syntax, kw_pos, "pcre requires a value");
      if (!cur.done() && cur.peek() == '!')
        return err(ErrorKind::unsupported_construct, kw_pos, "negated pcre is not supported");
      // The quoted pcre value is taken verbatim (backslashes belong to the
      // regex); only \" unescapes, so patterns can contain quotes.
      if (cur.done() || cur.peek() != '"')
        return err(ErrorKind::syntax, cur.pos, "expected quoted value");
      ++cur.pos;
      std::string v;
      bool closed_quote = false;
      while (!cur.done()) {
        char c = text[cur.pos];
        if (c == '"') {
          ++cur.pos;
          closed_quote = true;
          break;
        }
        if (c == '\\' && cur.pos + 1 < text.size() && text[cur.pos + 1] == '"') {
          v.push_back('"');
          cur.pos += 2;
          continue;
        }
        v.push_back(c);
        ++cur.pos;
      }
      if (!closed_quote)
        return err(ErrorKind::syntax, cur.pos, "unterminated quoted value");
      if (v.size() < 2 || v.front() != '/')
        return err(ErrorKind::syntax, kw_pos, "pcre value must be /pattern/flags");
      std::size_t close = v.rfind('/');
      if (close == 0) return err(ErrorKind::syntax, kw_pos, "pcre value must be /pattern/flags");
      PcreOption pcre;
      pcre.buffer = active_buffer;
      pcre.pattern = v.substr(1, close - 1);
      std::string flags = v.substr(close + 1);
      for (char f : flags) {
        if (f == 'i') {
          pcre.icase = true;
        } else if (std::isalpha(static_cast<unsigned char>(f))) {
          return err(ErrorKind::unsupported_construct, kw_pos,
                     std::string("pcre flag '") + f + "' is not supported");
        } else {
          return err(ErrorKind::syntax, kw_pos, "bad pcre flags");
        }
      }
      if (pcre.pattern.empty()) return err(ErrorKind::syntax, kw_pos, "empty pcre pattern");
      try {
        std::regex probe(pcre.pattern,
                         std::regex::ECMAScript | (pcre.icase ? std::regex::icase
                                                              : std::regex::flag_type{}));
        (void)probe;
      } catch (const std::regex_error&) {
        return err(ErrorKind::syntax, kw_pos, "pcre pattern does not compile");
      }
      if (auto e = expect_semicolon()) return *e;
      rule.options.push_back(std::move(pcre));
      open_content.reset();
    } else if (is_recognized_unsupported_option(kw)) {
      return err(ErrorKind::unsupported_construct, kw_pos,
                 "option '" + kw + "' is not supported");
    } else {
      return err(ErrorKind::unknown_keyword, kw_pos, "unknown keyword '" + kw + "'");
    }
  }

  if (!closed) return err(ErrorKind::syntax, text.size(), "missing ')'");
  cur.skip_ws();
  if (!cur.done()) return err(ErrorKind::syntax, cur.pos, "trailing characters after ')'");

  if (!saw_msg) return err(ErrorKind::syntax, text.size(), "missing msg option");
  if (!saw_sid) return err(ErrorKind::missing_sid, text.size(), "missing sid option");
  return rule;
}

inline std::string render_rule(const Rule& rule) {
  using namespace detail;
  std::string out = "alert ";
  out += rule.protocol == Protocol::http ? "http " : "tcp ";
  out += rule.src_addr.ip ? *rule.src_addr.ip : "any";
  out.push_back(' ');
  out += rule.src_port.port ? std::to_string(*rule.src_port.port) : "any";
  out += " -> ";
  out += rule.dst_addr.ip ? *rule.dst_addr.ip : "any";
  out.push_back(' ');
  out += rule.dst_port.port ? std::to_string(*rule.dst_port.port) : "any";
  out += " (";

  bool first = true;
  auto emit = [&](const std::string& opt) {
    if (!first) out.push_back(' ');
    out += opt;
    first = false;
  };

  for (const auto& opt : rule.options) {
    if (const auto* msg = std::get_if<MsgOption>(&opt)) {
      emit("msg:\"" + encode_quoted(msg->text, false) + "\";");
    } else if (const auto* sid = std::get_if<SidOption>(&opt)) {
      emit("sid:" + std::to_string(sid->sid) + ";");
    } else if (const auto* rev = std::get_if<RevOption>(&opt)) {
      emit("rev:" + std::to_string(rev->rev) + ";");
    } else if (const auto* ct = std::get_if<ClasstypeOption>(&opt)) {
      emit("classtype:" + ct->name + ";");
    } else if (const auto* flow = std::get_if<FlowOption>(&opt)) {
      std::string v = "flow:";
      if (flow->to_server) v += "to_server";
      if (flow->established) v += flow->to_server ? ",established" : "established";
      emit(v + ";");
    } else if (const auto* buf = std::get_if<BufferOption>(&opt)) {
      emit(std::string(buffer_keyword(buf->buffer)) + ";");
    } else if (const auto* content = std::get_if<ContentOption>(&opt)) {
      std::string v = "content:";
      if (content->negated) v += "!";
      v += "\"" + encode_quoted(content->bytes, true) + "\";";
      if (content->nocase) v += " nocase;";
      if (content->offset) v += " offset:" + std::to_string(*content->offset) + ";";
      if (content->depth) v += " depth:" + std::to_string(*content->depth) + ";";
      if (content->startswith) v += " startswith;";
      if (content->endswith) v += " endswith;";
      emit(v);
    } else if (const auto* pcre = std::get_if<PcreOption>(&opt)) {
      std::string pat;
      for (char c : pcre->pattern) {
        if (c == '"') pat += "\\\"";
        else pat.push_back(c);
      }
      std::string v = "pcre:\"/" + pat + "/";
      if (pcre->icase) v += "i";
      emit(v + "\";");
    }
  }
  out += ")";
  return out;
}

// Parses a multi-line ruleset: one rule per line, blank lines and
// '#'-comments skipped. Either every line parses and SIDs are unique, or the
// full error list comes back (details prefixed with the 1-based line number).
inline RulesetResult parse_ruleset(std::string_view text) {
  std::vector<Rule> rules;
  std::vector<FormatError> errors;
  std::set<uint32_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                           : eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    std::string_view stripped = detail::trim(line);
    if (!stripped.empty() && stripped.front() != '#') {
      ParseResult r = parse_rule(line);
      if (auto* e = std::get_if<FormatError>(&r)) {
        FormatError tagged = *e;
        tagged.detail = "line " + std::to_string(line_no) + ": " + tagged.detail;
        errors.push_back(std::move(tagged));
      } else {
        Rule rule = std::get<Rule>(std::move(r));
        if (!seen.insert(rule.sid).second) {
          errors.push_back(FormatError{ErrorKind::duplicate_sid_in_set, 0,
                                       "line " + std::to_string(line_no) + ": duplicate sid " +
                                           std::to_string(rule.sid)});
        } else {
          rules.push_back(std::move(rule));
        }
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  if (!errors.empty()) return errors;
  return rules;
}

// Rewrites the sid option of an already-valid rule text. Returns the
// canonical rendering with the new sid.
inline std::optional<std::string> renumber_rule(std::string_view rule_text, uint32_t new_sid) {
  ParseResult r = parse_rule(rule_text);
  if (!std::holds_alternative<Rule>(r)) return std::nullopt;
  Rule rule = std::get<Rule>(std::move(r));
  rule.sid = new_sid;
  for (auto& opt : rule.options)
    if (auto* sid = std::get_if<SidOption>(&opt)) sid->sid = new_sid;
  return render_rule(rule);
}

}  // namespace gridai
