#pragma once

// Window sizing and pipeline settings, readable from key=value text.
//
//   np_packets      packets per window            (2^30)
//   nv              packets per matrix            (2^17)
//   nmat_per_file   matrices per archive          (2^6)
//   log2_dim        address-space width in bits   (32)
//   anon_key        32 hex digits
//   anonymize       true | false
//   subranges       src:dst[;src:dst...], each side "*", "lo-hi" or "a,b,c"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "htgc/anonymize.hpp"
#include "htgc/error.hpp"
#include "htgc/traffic_matrix.hpp"

namespace htgc {

struct Subrange {
  AddressSet src;
  AddressSet dst;
};

struct ChallengeConfig {
  std::uint64_t np_packets = std::uint64_t{1} << 30;
  std::uint64_t nv = std::uint64_t{1} << 17;
  std::uint64_t nmat_per_file = std::uint64_t{1} << 6;
  int log2_dim = 32;
  AnonKey anon_key{0x0123456789abcdefULL, 0xfedcba9876543210ULL};
  bool anonymize = true;
  std::vector<Subrange> subranges;
  std::string subranges_text;  // as given, for round-tripping into config files

  /// The challenge window shape scaled down by 2^10 packets.
  static ChallengeConfig desk() {
    ChallengeConfig c;
    c.np_packets = std::uint64_t{1} << 20;
    c.nv = std::uint64_t{1} << 12;
    c.nmat_per_file = std::uint64_t{1} << 4;
    return c;
  }

  std::uint64_t matrices_for(std::uint64_t packets) const { return (packets + nv - 1) / nv; }
  std::uint64_t archives_for(std::uint64_t matrices) const {
    return (matrices + nmat_per_file - 1) / nmat_per_file;
  }
  std::uint64_t matrices_per_window() const { return matrices_for(np_packets); }
  std::uint64_t archives_per_window() const { return archives_for(matrices_per_window()); }

  void validate() const {
    if (np_packets == 0 || nv == 0 || nmat_per_file == 0) {
      throw ConfigError("np_packets, nv and nmat_per_file must be positive");
    }
    if (log2_dim < kMinLog2Dim || log2_dim > kMaxLog2Dim) {
      throw ConfigError("log2_dim outside [1, 32]");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used, 0);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
}

inline AddressSet parse_address_set(const std::string& text, int log2_dim) {
  const std::string s = trim(text);
  if (s == "*" || s.empty()) return AddressSet::all(log2_dim);
  if (s.find(',') != std::string::npos) {
    std::vector<Index> ids;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      ids.push_back(static_cast<Index>(parse_u64("subranges", trim(tok))));
    }
    return AddressSet::list(std::move(ids));
  }
  const auto dash = s.find('-');
  if (dash == std::string::npos) {
    const auto i = static_cast<Index>(parse_u64("subranges", s));
    return AddressSet::range(i, i);
  }
  const auto lo = parse_u64("subranges", trim(s.substr(0, dash)));
  const auto hi = parse_u64("subranges", trim(s.substr(dash + 1)));
  if (lo > hi || hi > 0xFFFFFFFFull) throw ConfigError("subranges: bad range '" + s + "'");
  return AddressSet::range(static_cast<Index>(lo), static_cast<Index>(hi));
}

}  // namespace detail

inline std::vector<Subrange> parse_subranges(const std::string& text, int log2_dim) {
  std::vector<Subrange> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (detail::trim(item).empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("subranges: expected src:dst in '" + item + "'");
    out.push_back({detail::parse_address_set(item.substr(0, colon), log2_dim),
                   detail::parse_address_set(item.substr(colon + 1), log2_dim)});
  }
  return out;
}

/// Applies one key=value setting. Unknown keys are errors.
inline void apply_setting(ChallengeConfig& cfg, const std::string& key_in, const std::string& value_in) {
  const std::string key = detail::trim(key_in);
  const std::string value = detail::trim(value_in);
  if (key == "np_packets") cfg.np_packets = detail::parse_u64(key, value);
  else if (key == "nv") cfg.nv = detail::parse_u64(key, value);
  else if (key == "nmat_per_file") cfg.nmat_per_file = detail::parse_u64(key, value);
  else if (key == "log2_dim") cfg.log2_dim = static_cast<int>(detail::parse_u64(key, value));
  else if (key == "anon_key") cfg.anon_key = parse_anon_key(value);
  else if (key == "anonymize") {
    if (value == "true" || value == "1") cfg.anonymize = true;
    else if (value == "false" || value == "0") cfg.anonymize = false;
    else throw ConfigError("anonymize: expected true or false");
  } else if (key == "subranges") {
    cfg.subranges_text = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

/// Re-derives parsed fields that depend on several keys; call after all
/// settings are applied.
inline void finalize(ChallengeConfig& cfg) {
  cfg.validate();
  cfg.subranges = parse_subranges(cfg.subranges_text, cfg.log2_dim);
}

inline ChallengeConfig parse_config(std::istream& in, ChallengeConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    try {
      apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  finalize(cfg);
  return cfg;
}

inline ChallengeConfig load_config(const std::string& path, ChallengeConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config");
  return parse_config(in, std::move(cfg));
}

inline std::string to_config_text(const ChallengeConfig& cfg) {
  std::ostringstream os;
  os << "np_packets=" << cfg.np_packets << "\n"
     << "nv=" << cfg.nv << "\n"
     << "nmat_per_file=" << cfg.nmat_per_file << "\n"
     << "log2_dim=" << cfg.log2_dim << "\n"
     << "anon_key=" << to_hex(cfg.anon_key) << "\n"
     << "anonymize=" << (cfg.anonymize ? "true" : "false") << "\n";
  if (!cfg.subranges_text.empty()) os << "subranges=" << cfg.subranges_text << "\n";
  return os.str();
}

}  // namespace htgc
