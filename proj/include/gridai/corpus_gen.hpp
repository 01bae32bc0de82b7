#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridai/corpus.hpp"
#include "gridai/http.hpp"
#include "gridai/pcap.hpp"

namespace gridai {

// One synthetic attack family. Every sample carries a case-mutated copy of
// `signature` plus a random filler token, so per-sample rules memorize the
// filler while the signature is the only stable cross-sample evidence.
struct AttackFamily {
  std::string name;
  std::string uri_prefix;        // constant bytes before the mutable region
  std::string signature;         // canonical signature, case-mutated per sample
  bool signature_in_body = false;
  std::string fixed_uri;         // request target when the signature rides in the body
  bool filler_before_signature = false;
  uint32_t gt_sid = 0;
  std::string gt_msg;
  std::string gt_classtype;
  std::string gt_content;        // empty means the ground truth rule uses gt_pcre
  std::string gt_pcre;
  bool gt_body = false;
};

inline const std::vector<AttackFamily>& attack_families() {
  static const std::vector<AttackFamily> families = {
      {.name = "iis_admin",
       .uri_prefix = "",
       .signature = "/iisadmin/portal?zx=",
       .gt_sid = 2100993,
       .gt_msg = "IIS admin portal access",
       .gt_classtype = "web-application-attack",
       .gt_content = "/iisadmin/"},
      {.name = "coldfusion",
       .uri_prefix = "",
       .signature = "/CFIDE/administrator/index.cfm?pane=",
       .gt_sid = 2016184,
       .gt_msg = "ColdFusion administrator access",
       .gt_classtype = "attempted-admin",
       .gt_content = "/CFIDE/administrator/"},
      {.name = "isapi_idq",
       .uri_prefix = "",
       .signature = "/scripts/status.idq?probe=",
       .gt_sid = 2101245,
       .gt_msg = "ISAPI idq handler probe",
       .gt_classtype = "web-application-attack",
       .gt_content = ".idq?"},
      {.name = "xss_script_close",
       .uri_prefix = "/search?q=",
       .signature = "><script>alert(document.cookie)</script>&v=",
       .gt_sid = 2009714,
       .gt_msg = "Cross site scripting closing tag",
       .gt_classtype = "web-application-attack",
       .gt_content = "</script>"},
      {.name = "system32",
       .uri_prefix = "",
       .signature = "/winnt/system32/cmd.exe?/c+dir&p=",
       .gt_sid = 2009362,
       .gt_msg = "Windows system32 directory traversal",
       .gt_classtype = "attempted-recon",
       .gt_content = "/system32/"},
      {.name = "jboss_invoke",
       .uri_prefix = "",
       .signature = "action=invokeOpByName&file=backdoor.war&seg=",
       .signature_in_body = true,
       .fixed_uri = "/jmx-console/HtmlAdaptor",
       .gt_sid = 2011696,
       .gt_msg = "JBoss console invokeOpByName upload",
       .gt_classtype = "attempted-admin",
       .gt_content = "invokeOpByName",
       .gt_body = true},
      {.name = "htaccess_probe",
       .uri_prefix = "/sites/",
       .signature = "/.htaccess",
       .filler_before_signature = true,
       .gt_sid = 2101129,
       .gt_msg = "htaccess file request",
       .gt_classtype = "attempted-recon",
       .gt_pcre = "/\\/\\.htaccess/i"},
  };
  return families;
}

// Handwritten per-family reference rules, one alert per attack sample.
inline std::string ground_truth_rules() {
  std::string out;
  for (const auto& family : attack_families()) {
    out += "alert http any any -> any any (msg:\"" + family.gt_msg +
           "\"; flow:to_server,established; ";
    out += family.gt_body ? "http.request_body; " : "http.uri; ";
    if (!family.gt_content.empty()) {
      out += "content:\"" + family.gt_content + "\"; nocase; ";
    } else {
      out += "pcre:\"" + family.gt_pcre + "\"; ";
    }
    out += "classtype:" + family.gt_classtype + "; sid:" +
           std::to_string(family.gt_sid) + "; rev:2;)\n";
  }
  return out;
}

struct ManifestEntry {
  std::string file;    // path relative to the corpus root
  std::string family;  // empty for benign traffic
  std::string split;   // train or test
  std::string label;   // attack or benign
  std::vector<std::string> mutations;
};

struct CorpusManifest {
  uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

namespace gendetail {

inline char flip_case(char c) {
  if (std::islower(static_cast<unsigned char>(c)))
    return static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (std::isupper(static_cast<unsigned char>(c)))
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return c;
}

// Random per-character casing of the signature. `avoid` forces the result to
// differ from an earlier draw so paired samples never share casing.
inline std::string mutate_case(std::string_view canonical, uint64_t& rng,
                               const std::string* avoid = nullptr) {
  std::string out(canonical);
  for (char& c : out) {
    if (!std::isalpha(static_cast<unsigned char>(c))) continue;
    c = (rngdetail::splitmix64(rng) & 1) ? flip_case(c)
                                         : static_cast<char>(std::tolower(
                                               static_cast<unsigned char>(c)));
  }
  if (avoid && out == *avoid) {
    for (char& c : out) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        c = flip_case(c);
        break;
      }
    }
  }
  return out;
}

// 16 alphanumeric characters, unique across the corpus, always containing a
// letter. Long enough to outrank every signature token.
inline std::string filler_token(uint64_t& rng, std::set<std::string>& used) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  for (;;) {
    std::string token;
    bool has_alpha = false;
    for (int i = 0; i < 16; ++i) {
      char c = kAlphabet[rngdetail::splitmix64(rng) % 62];
      if (std::isalpha(static_cast<unsigned char>(c))) has_alpha = true;
      token.push_back(c);
    }
    if (has_alpha && used.insert(token).second) return token;
  }
}

inline std::string attack_request(const AttackFamily& family,
                                  const std::string& cased_signature,
                                  const std::string& filler) {
  std::string uri;
  std::string body;
  if (family.signature_in_body) {
    uri = family.fixed_uri;
    body = cased_signature + filler;
  } else if (family.filler_before_signature) {
    uri = family.uri_prefix + filler + cased_signature;
  } else {
    uri = family.uri_prefix + cased_signature + filler;
  }
  if (body.empty()) {
    return "GET " + uri +
           " HTTP/1.1\r\n"
           "Host: victim.example.org\r\n"
           "User-Agent: AttackKit/2.1\r\n"
           "Accept: */*\r\n\r\n";
  }
  return "POST " + uri +
         " HTTP/1.1\r\n"
         "Host: victim.example.org\r\n"
         "User-Agent: AttackKit/2.1\r\n"
         "Content-Type: application/x-www-form-urlencoded\r\n"
         "Content-Length: " +
         std::to_string(body.size()) + "\r\n\r\n" + body;
}

// Routine site traffic; vocabulary is disjoint from every attack signature.
inline std::string benign_request(uint64_t& rng, int serial) {
  int num = static_cast<int>(rngdetail::splitmix64(rng) % 9000 + 100);
  static constexpr const char* kHosts[] = {"www.shop.example.net",
                                           "cdn.assets.example.net",
                                           "portal.example.com"};
  static constexpr const char* kAgents[] = {
      "Mozilla/5.0 (Windows NT 10.0; Win64; x64) Firefox/121.0",
      "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_4) Safari/605.1.15",
      "Mozilla/5.0 (X11; Linux x86_64) Chrome/120.0.0.0"};
  const char* host = kHosts[serial % 3];
  const char* agent = kAgents[(serial / 3) % 3];
  std::string uri;
  std::string body;
  switch (serial % 8) {
    case 0: uri = "/assets/css/site" + std::to_string(num) + ".css"; break;
    case 1: uri = "/static/js/app" + std::to_string(num) + ".js"; break;
    case 2: uri = "/images/photo" + std::to_string(num) + ".jpg"; break;
    case 3: uri = "/docs/guide" + std::to_string(num) + ".html"; break;
    case 4: uri = "/products/list?page=" + std::to_string(num % 40 + 1); break;
    case 5: uri = "/api/v2/items/" + std::to_string(num); break;
    case 6:
      uri = "/account/login";
      body = "username=user" + std::to_string(num) + "&remember=true";
      break;
    default:
      uri = "/feedback/submit";
      body = "topic=general&message=thanks" + std::to_string(num);
      break;
  }
  if (body.empty()) {
    return "GET " + uri + " HTTP/1.1\r\nHost: " + std::string(host) +
           "\r\nUser-Agent: " + agent + "\r\nAccept: */*\r\n\r\n";
  }
  return "POST " + uri + " HTTP/1.1\r\nHost: " + std::string(host) +
         "\r\nUser-Agent: " + agent +
         "\r\nContent-Type: application/x-www-form-urlencoded\r\n"
         "Content-Length: " +
         std::to_string(body.size()) + "\r\n\r\n" + body;
}

inline nlohmann::json manifest_line(const ManifestEntry& entry) {
  return nlohmann::json{{"file", entry.file},
                        {"family", entry.family},
                        {"split", entry.split},
                        {"label", entry.label},
                        {"mutations", entry.mutations}};
}

}  // namespace gendetail

// Writes the full corpus under out_dir: train/attack (pcap), test/attack and
// test/benign (raw http), manifest.jsonl, ground_truth.rules. Same seed, same
// bytes, byte for byte.
inline IngestResult<CorpusManifest> generate_corpus(
    uint64_t seed, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"train/attack", "test/attack", "test/benign"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec)
      return IngestError{IngestErrorKind::io,
                         "cannot create " + (out_dir / sub).string()};
  }

  CorpusManifest manifest;
  manifest.seed = seed;
  uint64_t rng = seed;
  std::set<std::string> used_fillers;

  auto write_file = [&](const std::string& rel,
                        std::string_view bytes) -> bool {
    std::ofstream out(out_dir / rel, std::ios::binary | std::ios::trunc);
    if (!out) return false;
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return out.good();
  };
  auto io_error = [&](const std::string& rel) {
    return IngestError{IngestErrorKind::io,
                       "cannot write " + (out_dir / rel).string()};
  };

  int family_index = 0;
  for (const auto& family : attack_families()) {
    ++family_index;
    const std::string stem =
        "f" + std::to_string(family_index) + "_" + family.name;

    std::string filler_a = gendetail::filler_token(rng, used_fillers);
    std::string filler_b = gendetail::filler_token(rng, used_fillers);
    // The two training fillers must not share boundary characters, or the
    // common byte run between the training requests would extend past the
    // signature and leak filler bytes into cross-sample evidence.
    auto ci_eq = [](char x, char y) {
      return std::tolower(static_cast<unsigned char>(x)) ==
             std::tolower(static_cast<unsigned char>(y));
    };
    while (ci_eq(filler_b.front(), filler_a.front()) ||
           ci_eq(filler_b.back(), filler_a.back()))
      filler_b = gendetail::filler_token(rng, used_fillers);
    std::string sig_a = gendetail::mutate_case(family.signature, rng);
    std::string sig_b = gendetail::mutate_case(family.signature, rng, &sig_a);

    const std::string train_files[2] = {stem + "_a.pcap", stem + "_b.pcap"};
    const std::string* train_fillers[2] = {&filler_a, &filler_b};
    const std::string* train_sigs[2] = {&sig_a, &sig_b};
    for (int i = 0; i < 2; ++i) {
      std::string rel = "train/attack/" + train_files[i];
      std::string request =
          gendetail::attack_request(family, *train_sigs[i], *train_fillers[i]);
      if (!write_file(rel, build_request_pcap(request))) return io_error(rel);
      manifest.entries.push_back(
          {rel, family.name, "train", "attack", {"case_flip"}});
    }

    for (int k = 1; k <= 8; ++k) {
      std::string rel = "test/attack/" + stem + "_t" + std::to_string(k) + ".http";
      std::string sig = gendetail::mutate_case(family.signature, rng);
      std::vector<std::string> mutations{"case_flip"};
      std::string filler;
      if (k <= 5) {
        filler = gendetail::filler_token(rng, used_fillers);
      } else {
        // Echo samples replay both training fillers verbatim, so rules that
        // memorized a filler instead of the signature double-alert here.
        filler = filler_a + filler_b;
        mutations.push_back("filler_echo");
      }
      std::string request = gendetail::attack_request(family, sig, filler);
      if (!write_file(rel, request)) return io_error(rel);
      manifest.entries.push_back(
          {rel, family.name, "test", "attack", std::move(mutations)});
    }
  }

  for (int serial = 0; serial < 504; ++serial) {
    char name[16];
    std::snprintf(name, sizeof(name), "b%03d.http", serial);
    std::string rel = std::string("test/benign/") + name;
    if (!write_file(rel, gendetail::benign_request(rng, serial)))
      return io_error(rel);
    manifest.entries.push_back({rel, "", "test", "benign", {}});
  }

  std::string manifest_text;
  for (const auto& entry : manifest.entries)
    manifest_text += gendetail::manifest_line(entry).dump() + "\n";
  if (!write_file("manifest.jsonl", manifest_text))
    return io_error("manifest.jsonl");
  if (!write_file("ground_truth.rules", ground_truth_rules()))
    return io_error("ground_truth.rules");
  return manifest;
}

}  // namespace gridai
