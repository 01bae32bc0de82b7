#pragma once

// Classic libpcap (not pcapng) ingestion: Ethernet II + IPv4 + TCP, strictly
// in-order client-side reassembly, HTTP requests carved by Content-Length
// framing. Also a minimal writer used by the corpus generator and tests.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "gridai/http.hpp"

namespace gridai {

namespace pcapdetail {

struct Reader {
  std::string_view data;
  std::size_t pos = 0;
  bool swap = false;  // file byte order differs from host (we read LE fields)

  bool need(std::size_t n) const { return pos + n <= data.size(); }

  uint32_t u32_file() {
    uint32_t v = static_cast<uint8_t>(data[pos]) | static_cast<uint8_t>(data[pos + 1]) << 8 |
                 static_cast<uint8_t>(data[pos + 2]) << 16 |
                 static_cast<uint8_t>(data[pos + 3]) << 24;
    pos += 4;
    if (swap) v = __builtin_bswap32(v);
    return v;
  }

  uint16_t u16_file() {
    uint16_t v = static_cast<uint16_t>(static_cast<uint8_t>(data[pos]) |
                                       static_cast<uint8_t>(data[pos + 1]) << 8);
    pos += 2;
    if (swap) v = static_cast<uint16_t>(__builtin_bswap16(v));
    return v;
  }
};

inline uint16_t be16(std::string_view d, std::size_t off) {
  return static_cast<uint16_t>(static_cast<uint8_t>(d[off]) << 8 |
                               static_cast<uint8_t>(d[off + 1]));
}

inline uint32_t be32(std::string_view d, std::size_t off) {
  return static_cast<uint32_t>(static_cast<uint8_t>(d[off])) << 24 |
         static_cast<uint32_t>(static_cast<uint8_t>(d[off + 1])) << 16 |
         static_cast<uint32_t>(static_cast<uint8_t>(d[off + 2])) << 8 |
         static_cast<uint32_t>(static_cast<uint8_t>(d[off + 3]));
}

inline std::string dotted(uint32_t ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

struct Flow {
  FlowEndpoints client;  // sender of the flow's first packet
  bool have_expected = false;
  uint32_t expected_seq = 0;
  std::string bytes;  // client-to-server payload, in order
  std::size_t first_seen = 0;
};

}  // namespace pcapdetail

// Loads every client-side HTTP request from a capture. Sample ids are
// base_id for a single-request capture, base_id#k (1-based) otherwise.
inline IngestResult<std::vector<AttackSample>> load_pcap(std::string_view bytes,
                                                         const std::string& base_id,
                                                         SampleLabel label) {
  using namespace pcapdetail;
  auto fail = [&](IngestErrorKind kind, std::string detail) {
    return IngestError{kind, base_id + ": " + std::move(detail)};
  };

  Reader r{bytes};
  if (!r.need(24)) return fail(IngestErrorKind::bad_magic, "file shorter than pcap header");
  uint32_t magic = r.u32_file();
  if (magic == 0xd4c3b2a1u) {
    r.swap = true;
  } else if (magic != 0xa1b2c3d4u) {
    return fail(IngestErrorKind::bad_magic, "not a classic pcap file");
  }
  r.pos = 20;  // skip version, thiszone, sigfigs, snaplen
  uint32_t linktype = r.u32_file();
  if (linktype != 1)
    return fail(IngestErrorKind::unsupported_linktype,
                "linktype " + std::to_string(linktype) + " (only Ethernet)");

  std::map<std::tuple<std::string, uint16_t, std::string, uint16_t>, Flow> flows;
  std::vector<const Flow*> flow_order;

  std::size_t frame_index = 0;
  while (r.pos < bytes.size()) {
    if (!r.need(16)) return fail(IngestErrorKind::truncated_frame, "truncated record header");
    r.pos += 8;  // ts_sec, ts_usec
    uint32_t incl_len = r.u32_file();
    r.pos += 4;  // orig_len
    if (!r.need(incl_len))
      return fail(IngestErrorKind::truncated_frame,
                  "record " + std::to_string(frame_index) + " larger than file");
    std::string_view frame = bytes.substr(r.pos, incl_len);
    r.pos += incl_len;
    ++frame_index;

    if (frame.size() < 14) continue;
    uint16_t ethertype = be16(frame, 12);
    if (ethertype != 0x0800) continue;  // IPv4 only

    std::string_view ip = frame.substr(14);
    if (ip.size() < 20) return fail(IngestErrorKind::truncated_frame, "short IPv4 header");
    uint8_t vihl = static_cast<uint8_t>(ip[0]);
    if (vihl >> 4 != 4) continue;
    std::size_t ihl = static_cast<std::size_t>(vihl & 0xf) * 4;
    uint16_t total_len = be16(ip, 2);
    if (ip.size() < total_len || total_len < ihl)
      return fail(IngestErrorKind::truncated_frame, "IPv4 total length exceeds capture");
    if (static_cast<uint8_t>(ip[9]) != 6) continue;  // TCP only

    std::string_view tcp = ip.substr(ihl, total_len - ihl);
    if (tcp.size() < 20) return fail(IngestErrorKind::truncated_frame, "short TCP header");
    uint16_t src_port = be16(tcp, 0);
    uint16_t dst_port = be16(tcp, 2);
    uint32_t seq = be32(tcp, 4);
    std::size_t data_off = static_cast<std::size_t>((static_cast<uint8_t>(tcp[12]) >> 4)) * 4;
    uint8_t tcp_flags = static_cast<uint8_t>(tcp[13]);
    if (tcp.size() < data_off)
      return fail(IngestErrorKind::truncated_frame, "TCP data offset exceeds segment");
    std::string_view payload = tcp.substr(data_off);

    std::string src_ip = dotted(be32(ip, 12));
    std::string dst_ip = dotted(be32(ip, 16));

    auto fwd = std::make_tuple(src_ip, src_port, dst_ip, dst_port);
    auto rev = std::make_tuple(dst_ip, dst_port, src_ip, src_port);
    auto it = flows.find(fwd);
    bool from_client = true;
    if (it == flows.end()) {
      auto rit = flows.find(rev);
      if (rit != flows.end()) {
        it = rit;
        from_client = false;
      } else {
        Flow flow;
        flow.client = FlowEndpoints{src_ip, src_port, dst_ip, dst_port};
        flow.first_seen = flow_order.size();
        it = flows.emplace(fwd, std::move(flow)).first;
        flow_order.push_back(&it->second);
      }
    }
    if (!from_client) continue;  // server-to-client direction is not reassembled

    Flow& flow = it->second;
    bool syn = tcp_flags & 0x02;
    bool fin = tcp_flags & 0x01;
    if (syn) {
      flow.have_expected = true;
      flow.expected_seq = seq + 1;
      continue;
    }
    if (!flow.have_expected) {
      flow.have_expected = true;
      flow.expected_seq = seq;
    }
    if (!payload.empty()) {
      if (seq != flow.expected_seq)
        return fail(IngestErrorKind::truncated_frame,
                    "out-of-order segment in record " + std::to_string(frame_index - 1));
      flow.bytes.append(payload);
      flow.expected_seq += static_cast<uint32_t>(payload.size());
    }
    if (fin) flow.expected_seq += 1;
  }

  std::vector<AttackSample> samples;
  for (const Flow* flow : flow_order) {
    std::string_view stream = flow->bytes;
    while (true) {
      auto len = http_request_length(stream);
      if (!len) break;  // incomplete trailing data is ignored
      std::string_view wire = stream.substr(0, *len);
      auto parsed = parse_http_request(wire);
      if (auto* e = std::get_if<IngestError>(&parsed))
        return fail(e->kind, e->detail);
      AttackSample sample;
      sample.raw = std::string(wire);
      sample.request = std::get<HttpRequest>(std::move(parsed));
      sample.origin = SampleOrigin::pcap;
      sample.label = label;
      sample.endpoints = flow->client;
      samples.push_back(std::move(sample));
      stream.remove_prefix(*len);
    }
  }

  if (samples.size() == 1) {
    samples[0].id = base_id;
  } else {
    for (std::size_t i = 0; i < samples.size(); ++i)
      samples[i].id = base_id + "#" + std::to_string(i + 1);
  }
  return samples;
}

// --- writer ---

namespace pcapdetail {

inline void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16le(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u16be(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline void put_u32be(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline uint32_t parse_ipv4(const std::string& s) {
  uint32_t out = 0;
  uint32_t part = 0;
  for (char c : s) {
    if (c == '.') {
      out = out << 8 | part;
      part = 0;
    } else {
      part = part * 10 + static_cast<uint32_t>(c - '0');
    }
  }
  return out << 8 | part;
}

inline void append_frame(std::string& out, uint32_t ts, const FlowEndpoints& ep, bool from_client,
                         uint32_t seq, uint32_t ack, uint8_t flags, std::string_view payload) {
  std::string frame;
  // Ethernet II, fixed placeholder MACs
  for (int i = 0; i < 6; ++i) frame.push_back(from_client ? '\x02' : '\x04');
  for (int i = 0; i < 6; ++i) frame.push_back(from_client ? '\x04' : '\x02');
  put_u16be(frame, 0x0800);
  // IPv4
  uint16_t ip_len = static_cast<uint16_t>(20 + 20 + payload.size());
  frame.push_back('\x45');
  frame.push_back('\x00');
  put_u16be(frame, ip_len);
  put_u16be(frame, 0);       // identification
  put_u16be(frame, 0x4000);  // don't fragment
  frame.push_back('\x40');   // ttl
  frame.push_back('\x06');   // tcp
  put_u16be(frame, 0);       // checksum unset
  put_u32be(frame, parse_ipv4(from_client ? ep.src_ip : ep.dst_ip));
  put_u32be(frame, parse_ipv4(from_client ? ep.dst_ip : ep.src_ip));
  // TCP
  put_u16be(frame, from_client ? ep.src_port : ep.dst_port);
  put_u16be(frame, from_client ? ep.dst_port : ep.src_port);
  put_u32be(frame, seq);
  put_u32be(frame, ack);
  frame.push_back('\x50');  // data offset 5
  frame.push_back(static_cast<char>(flags));
  put_u16be(frame, 0xffff);  // window
  put_u16be(frame, 0);       // checksum unset
  put_u16be(frame, 0);       // urgent
  frame.append(payload);

  put_u32le(out, ts);
  put_u32le(out, 0);
  put_u32le(out, static_cast<uint32_t>(frame.size()));
  put_u32le(out, static_cast<uint32_t>(frame.size()));
  out += frame;
}

}  // namespace pcapdetail

// Serializes one client request as a classic pcap: handshake, data segments
// (split at segment_size), server ACK.
inline std::string build_request_pcap(std::string_view request,
                                      const FlowEndpoints& ep = {"10.1.1.10", 49152,
                                                                 "10.2.2.20", 80},
                                      std::size_t segment_size = 1200) {
  using namespace pcapdetail;
  std::string out;
  put_u32le(out, 0xa1b2c3d4u);
  put_u16le(out, 2);
  put_u16le(out, 4);
  put_u32le(out, 0);
  put_u32le(out, 0);
  put_u32le(out, 65535);
  put_u32le(out, 1);  // Ethernet

  uint32_t ts = 1700000000u;
  uint32_t cseq = 1000;
  uint32_t sseq = 9000;
  append_frame(out, ts++, ep, true, cseq, 0, 0x02, {});              // SYN
  append_frame(out, ts++, ep, false, sseq, cseq + 1, 0x12, {});      // SYN-ACK
  append_frame(out, ts++, ep, true, cseq + 1, sseq + 1, 0x10, {});   // ACK
  uint32_t seq = cseq + 1;
  std::size_t off = 0;
  while (off < request.size()) {
    std::size_t n = std::min(segment_size, request.size() - off);
    append_frame(out, ts++, ep, true, seq, sseq + 1, 0x18, request.substr(off, n));
    seq += static_cast<uint32_t>(n);
    off += n;
  }
  append_frame(out, ts++, ep, false, sseq + 1, seq, 0x10, {});  // server ACK
  return out;
}

}  // namespace gridai
