#pragma once

// HTTP/1.x request model and parsing for attack samples. Inputs are single
// requests in wire form with strict CRLF line endings; the body is whatever
// follows the blank line.

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace gridai {

enum class SampleLabel { attack, benign };

enum class SampleOrigin { http_file, pcap };

struct FlowEndpoints {
  std::string src_ip;
  uint16_t src_port = 0;
  std::string dst_ip;
  uint16_t dst_port = 0;
  bool operator==(const FlowEndpoints&) const = default;
};

struct HttpRequest {
  std::string method;
  std::string uri;
  std::string version;
  std::vector<std::pair<std::string, std::string>> headers;  // original order and case
  std::string body;

  bool operator==(const HttpRequest&) const = default;

  // Case-insensitive header lookup; first match wins.
  std::optional<std::string> header(std::string_view name) const {
    for (const auto& [k, v] : headers) {
      if (k.size() != name.size()) continue;
      bool eq = true;
      for (std::size_t i = 0; i < k.size() && eq; ++i)
        eq = std::tolower(static_cast<unsigned char>(k[i])) ==
             std::tolower(static_cast<unsigned char>(name[i]));
      if (eq) return v;
    }
    return std::nullopt;
  }
};

struct AttackSample {
  std::string id;
  std::string raw;  // exact request bytes
  HttpRequest request;
  SampleOrigin origin = SampleOrigin::http_file;
  SampleLabel label = SampleLabel::attack;
  std::optional<FlowEndpoints> endpoints;  // pcap-origin samples only
};

enum class IngestErrorKind {
  malformed_request,
  bad_magic,
  truncated_frame,
  unsupported_linktype,
  io,
};

inline const char* ingest_error_kind_name(IngestErrorKind k) {
  switch (k) {
    case IngestErrorKind::malformed_request: return "malformed_request";
    case IngestErrorKind::bad_magic: return "bad_magic";
    case IngestErrorKind::truncated_frame: return "truncated_frame";
    case IngestErrorKind::unsupported_linktype: return "unsupported_linktype";
    case IngestErrorKind::io: return "io";
  }
  return "io";
}

struct IngestError {
  IngestErrorKind kind = IngestErrorKind::io;
  std::string detail;
};

template <typename T>
using IngestResult = std::variant<T, IngestError>;

inline std::variant<HttpRequest, IngestError> parse_http_request(std::string_view bytes) {
  auto fail = [](std::string detail) {
    return IngestError{IngestErrorKind::malformed_request, std::move(detail)};
  };

  std::size_t head_end = bytes.find("\r\n\r\n");
  if (head_end == std::string_view::npos) return fail("missing header terminator");

  HttpRequest req;
  req.body = std::string(bytes.substr(head_end + 4));

  std::string_view head = bytes.substr(0, head_end);
  std::size_t line_end = head.find("\r\n");
  std::string_view request_line =
      head.substr(0, line_end == std::string_view::npos ? head.size() : line_end);

  std::size_t sp1 = request_line.find(' ');
  std::size_t sp2 = request_line.rfind(' ');
  if (sp1 == std::string_view::npos || sp2 == sp1)
    return fail("request line needs method, target and version");
  req.method = std::string(request_line.substr(0, sp1));
  req.uri = std::string(request_line.substr(sp1 + 1, sp2 - sp1 - 1));
  req.version = std::string(request_line.substr(sp2 + 1));
  if (req.method.empty() || req.uri.empty()) return fail("empty method or target");
  if (req.version.rfind("HTTP/", 0) != 0) return fail("bad protocol version");
  for (std::size_t i = 0; i < head.size(); ++i)
    if (head[i] == '\n' && (i == 0 || head[i - 1] != '\r'))
      return fail("bare LF line ending");

  std::size_t pos = line_end == std::string_view::npos ? head.size() : line_end + 2;
  while (pos < head.size()) {
    std::size_t eol = head.find("\r\n", pos);
    std::string_view line = head.substr(pos, eol == std::string_view::npos ? head.size() - pos
                                                                           : eol - pos);
    std::size_t colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) return fail("bad header line");
    std::string_view name = line.substr(0, colon);
    for (char c : name)
      if (c == ' ' || c == '\t') return fail("whitespace in header name");
    std::string_view value = line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    req.headers.emplace_back(std::string(name), std::string(value));
    if (eol == std::string_view::npos) break;
    pos = eol + 2;
  }
  return req;
}

// Wire-form length of the first complete request in a byte stream, or
// nullopt if more data is needed. Content-Length defaults to 0.
inline std::optional<std::size_t> http_request_length(std::string_view bytes) {
  std::size_t head_end = bytes.find("\r\n\r\n");
  if (head_end == std::string_view::npos) return std::nullopt;
  std::size_t body_len = 0;
  std::string_view head = bytes.substr(0, head_end);
  std::size_t pos = head.find("\r\n");
  pos = pos == std::string_view::npos ? head.size() : pos + 2;
  while (pos < head.size()) {
    std::size_t eol = head.find("\r\n", pos);
    std::string_view line = head.substr(pos, eol == std::string_view::npos ? head.size() - pos
                                                                           : eol - pos);
    std::size_t colon = line.find(':');
    if (colon != std::string_view::npos) {
      std::string_view name = line.substr(0, colon);
      if (name.size() == 14) {
        static const char target[] = "content-length";
        bool eq = true;
        for (std::size_t i = 0; i < 14 && eq; ++i)
          eq = std::tolower(static_cast<unsigned char>(name[i])) == target[i];
        if (eq) {
          std::string_view v = line.substr(colon + 1);
          while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
          std::size_t n = 0;
          for (char c : v) {
            if (c < '0' || c > '9') { n = 0; break; }
            n = n * 10 + static_cast<std::size_t>(c - '0');
          }
          body_len = n;
        }
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 2;
  }
  std::size_t total = head_end + 4 + body_len;
  if (bytes.size() < total) return std::nullopt;
  return total;
}

// Reconstructs wire form; byte-identical to the input for requests that use
// canonical "Name: value" headers.
inline std::string render_http_request(const HttpRequest& req) {
  std::string out = req.method + " " + req.uri + " " + req.version + "\r\n";
  for (const auto& [k, v] : req.headers) out += k + ": " + v + "\r\n";
  out += "\r\n";
  out += req.body;
  return out;
}

inline IngestResult<AttackSample> load_http_sample(std::string_view bytes, std::string id,
                                                   SampleLabel label) {
  auto parsed = parse_http_request(bytes);
  if (auto* e = std::get_if<IngestError>(&parsed)) {
    IngestError tagged = *e;
    tagged.detail = id + ": " + tagged.detail;
    return tagged;
  }
  AttackSample sample;
  sample.id = std::move(id);
  sample.raw = std::string(bytes);
  sample.request = std::get<HttpRequest>(std::move(parsed));
  sample.origin = SampleOrigin::http_file;
  sample.label = label;
  return sample;
}

}  // namespace gridai
