#pragma once

// Corpus loading: directories of .http (single request, wire form) and
// .pcap files. Ordering is deterministic: lexicographic by file name, then
// intra-capture request order. Any unreadable or malformed file aborts the
// load with the offending file named.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gridai/http.hpp"
#include "gridai/pcap.hpp"

namespace gridai {

inline IngestResult<std::string> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return IngestError{IngestErrorKind::io, "cannot open " + path.string()};
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) return IngestError{IngestErrorKind::io, "cannot read " + path.string()};
  return buf.str();
}

inline IngestResult<std::vector<AttackSample>> load_sample_file(
    const std::filesystem::path& path, SampleLabel label) {
  auto bytes = read_file_bytes(path);
  if (auto* e = std::get_if<IngestError>(&bytes)) return *e;
  const std::string& data = std::get<std::string>(bytes);
  std::string id = path.filename().string();

  std::string ext = path.extension().string();
  if (ext == ".pcap") return load_pcap(data, id, label);
  if (ext == ".http") {
    auto sample = load_http_sample(data, id, label);
    if (auto* e = std::get_if<IngestError>(&sample)) return *e;
    return std::vector<AttackSample>{std::get<AttackSample>(std::move(sample))};
  }
  return IngestError{IngestErrorKind::io, "unrecognized sample extension: " + path.string()};
}

// Loads every .http/.pcap file in one flat directory.
inline IngestResult<std::vector<AttackSample>> load_dir(const std::filesystem::path& dir,
                                                        SampleLabel label) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    return IngestError{IngestErrorKind::io, "not a directory: " + dir.string()};

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext == ".http" || ext == ".pcap") files.push_back(entry.path());
  }
  if (ec) return IngestError{IngestErrorKind::io, "cannot list " + dir.string()};
  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    return a.filename().string() < b.filename().string();
  });

  std::vector<AttackSample> out;
  std::set<std::string> ids;
  for (const auto& path : files) {
    auto loaded = load_sample_file(path, label);
    if (auto* e = std::get_if<IngestError>(&loaded)) return *e;
    for (auto& sample : std::get<std::vector<AttackSample>>(loaded)) {
      if (!ids.insert(sample.id).second)
        return IngestError{IngestErrorKind::io, "duplicate sample id: " + sample.id};
      out.push_back(std::move(sample));
    }
  }
  return out;
}

// Loads <root>/attack and <root>/benign (either may be absent). Samples from
// both subdirectories are merged in lexicographic file-name order.
inline IngestResult<std::vector<AttackSample>> load_corpus(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec))
    return IngestError{IngestErrorKind::io, "not a directory: " + root.string()};

  struct Entry {
    std::filesystem::path path;
    SampleLabel label;
  };
  std::vector<Entry> files;
  for (auto [sub, label] : {std::pair{"attack", SampleLabel::attack},
                            std::pair{"benign", SampleLabel::benign}}) {
    auto dir = root / sub;
    if (!std::filesystem::is_directory(dir, ec)) continue;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      if (ext == ".http" || ext == ".pcap") files.push_back({entry.path(), label});
    }
  }
  std::sort(files.begin(), files.end(), [](const Entry& a, const Entry& b) {
    auto an = a.path.filename().string();
    auto bn = b.path.filename().string();
    if (an != bn) return an < bn;
    return a.label == SampleLabel::attack && b.label == SampleLabel::benign;
  });

  std::vector<AttackSample> out;
  std::set<std::string> ids;
  for (const auto& [path, label] : files) {
    auto loaded = load_sample_file(path, label);
    if (auto* e = std::get_if<IngestError>(&loaded)) return *e;
    for (auto& sample : std::get<std::vector<AttackSample>>(loaded)) {
      if (!ids.insert(sample.id).second)
        return IngestError{IngestErrorKind::io, "duplicate sample id: " + sample.id};
      out.push_back(std::move(sample));
    }
  }
  return out;
}

namespace rngdetail {

// splitmix64; used instead of std distributions so sequences are identical
// across standard library implementations.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rngdetail

// Deterministic Fisher-Yates; same seed, same order, everywhere.
inline void shuffle_samples(std::vector<AttackSample>& samples, uint64_t seed) {
  uint64_t state = seed;
  for (std::size_t i = samples.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rngdetail::splitmix64(state) % i);
    std::swap(samples[i - 1], samples[j]);
  }
}

}  // namespace gridai
