#pragma once

// Packet records, their binary file format and a synthetic source.
//
// A packet file is a flat sequence of 9-byte records
//   u32 src | u32 dst | u8 valid      (little-endian)
// The synthetic source draws sources and destinations from independent
// Zipf popularity laws, then scatters ranks over the address space with an
// odd-multiplier bijection so popular addresses are not clustered at zero.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "htgc/error.hpp"

namespace htgc {

struct PacketRecord {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  bool valid = true;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

inline constexpr std::size_t kPacketRecordBytes = 9;

inline void encode_packets(std::span<const PacketRecord> packets, std::vector<char>& out) {
  out.resize(packets.size() * kPacketRecordBytes);
  char* p = out.data();
  for (const auto& r : packets) {
    for (int i = 0; i < 4; ++i) *p++ = static_cast<char>(r.src >> (8 * i));
    for (int i = 0; i < 4; ++i) *p++ = static_cast<char>(r.dst >> (8 * i));
    *p++ = r.valid ? 1 : 0;
  }
}

class PacketWriter {
 public:
  explicit PacketWriter(std::string path) : path_(std::move(path)), out_(path_, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError(path_, "cannot open for writing");
  }

  void write(std::span<const PacketRecord> packets) {
    encode_packets(packets, buf_);
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out_) throw IoError(path_, "write failed");
  }

  void close() {
    out_.close();
    if (!out_) throw IoError(path_, "write failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::vector<char> buf_;
};

class PacketReader {
 public:
  explicit PacketReader(std::string path) : path_(std::move(path)), in_(path_, std::ios::binary) {
    if (!in_) throw IoError(path_, "cannot open packet file");
  }

  /// Reads up to `max` records; an empty result means end of file.
  std::vector<PacketRecord> read(std::size_t max) {
    buf_.resize(max * kPacketRecordBytes);
    in_.read(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got % kPacketRecordBytes != 0) throw IoError(path_, "truncated packet record");
    std::vector<PacketRecord> out(got / kPacketRecordBytes);
    const auto* p = reinterpret_cast<const unsigned char*>(buf_.data());
    for (auto& r : out) {
      r.src = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
              static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
      r.dst = static_cast<std::uint32_t>(p[4]) | static_cast<std::uint32_t>(p[5]) << 8 |
              static_cast<std::uint32_t>(p[6]) << 16 | static_cast<std::uint32_t>(p[7]) << 24;
      if (p[8] > 1) throw IoError(path_, "validity byte is neither 0 nor 1");
      r.valid = p[8] == 1;
      p += kPacketRecordBytes;
    }
    return out;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<char> buf_;
};

/// Inverse-CDF sampler for P(rank = r) proportional to 1 / r^s, r = 1..n.
/// Returns zero-based ranks.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    if (n == 0) throw ConfigError("zipf population must be positive");
    double acc = 0;
    for (std::size_t r = 0; r < n; ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[r] = acc;
    }
    for (auto& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  }

  /// u in [0, 1).
  std::size_t rank(double u) const {
    return static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  }

  std::size_t size() const noexcept { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

struct GeneratorOptions {
  std::uint64_t seed = 1;
  int log2_dim = 32;
  double zipf_exponent = 1.2;
  double invalid_fraction = 0.0;
  std::uint64_t population = std::uint64_t{1} << 16;  // capped at 2^log2_dim
};

class PacketGenerator {
 public:
  explicit PacketGenerator(const GeneratorOptions& opt)
      : opt_(opt),
        rng_(opt.seed),
        mask_(opt.log2_dim >= 32 ? 0xFFFFFFFFull : ((std::uint64_t{1} << opt.log2_dim) - 1)),
        zipf_(static_cast<std::size_t>(std::min<std::uint64_t>(opt.population, mask_ + 1)),
              opt.zipf_exponent) {
    if (opt.invalid_fraction < 0.0 || opt.invalid_fraction > 1.0) {
      throw ConfigError("invalid_fraction outside [0, 1]");
    }
  }

  PacketRecord next() {
    PacketRecord r;
    r.src = scatter(zipf_.rank(uniform()), 0x9E3779B1u, 0x7F4A7C15u);
    r.dst = scatter(zipf_.rank(uniform()), 0x85EBCA77u, 0xC2B2AE3Du);
    r.valid = !(uniform() < opt_.invalid_fraction);
    return r;
  }

  std::vector<PacketRecord> take(std::size_t n) {
    std::vector<PacketRecord> out(n);
    for (auto& r : out) r = next();
    return out;
  }

 private:
  // 53 random bits into [0, 1); independent of the standard library's
  // distribution implementations so streams are identical everywhere.
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::uint32_t scatter(std::size_t rank, std::uint32_t mult, std::uint32_t offset) const {
    return static_cast<std::uint32_t>((std::uint64_t{rank} * mult + offset) & mask_);
  }

  GeneratorOptions opt_;
  std::mt19937_64 rng_;
  std::uint64_t mask_;
  ZipfSampler zipf_;
};

/// Per-window ground truth written next to generated packets.
struct TruthRecord {
  std::uint64_t window_id = 0;
  std::uint64_t valid_packets = 0;
  std::uint64_t total_packets = 0;

  friend bool operator==(const TruthRecord&, const TruthRecord&) = default;
};

inline void write_truth_log(const std::string& path, std::span<const TruthRecord> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << "window_id,valid_packets,total_packets\n";
  for (const auto& t : rows) out << t.window_id << ',' << t.valid_packets << ',' << t.total_packets << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<TruthRecord> read_truth_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open truth log");
  std::vector<TruthRecord> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    TruthRecord t;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> t.window_id >> c1 >> t.valid_packets >> c2 >> t.total_packets) || c1 != ',' || c2 != ',') {
      throw IoError(path, "line " + std::to_string(lineno) + ": malformed truth record");
    }
    rows.push_back(t);
  }
  return rows;
}

}  // namespace htgc
