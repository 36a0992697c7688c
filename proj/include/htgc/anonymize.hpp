#pragma once

// Keyed address permutation.
//
// Four Feistel rounds over the two halves of a width-bit address. For
// width 32 the halves are 16 bits each; for odd widths the halves differ by
// one bit and swap sizes every round, which keeps each round invertible.
// The round function is a 64-bit avalanche mix of the round key and the
// right half.

#include <array>
#include <cstdint>
#include <string>

#include "htgc/error.hpp"

namespace htgc {

struct AnonKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend bool operator==(const AnonKey&, const AnonKey&) = default;
};

/// 32 hex digits, most significant first.
inline AnonKey parse_anon_key(const std::string& hex) {
  if (hex.size() != 32) throw ConfigError("anon_key must be 32 hex digits");
  AnonKey k;
  for (std::size_t i = 0; i < 32; ++i) {
    const char c = hex[i];
    std::uint64_t v;
    if (c >= '0' && c <= '9') v = static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v = static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v = static_cast<std::uint64_t>(c - 'A' + 10);
    else throw ConfigError("anon_key has non-hex digit '" + std::string(1, c) + "'");
    auto& word = i < 16 ? k.hi : k.lo;
    word = (word << 4) | v;
  }
  return k;
}

inline std::string to_hex(const AnonKey& k) {
  static const char* digits = "0123456789abcdef";
  std::string s(32, '0');
  for (int i = 0; i < 16; ++i) {
    s[static_cast<std::size_t>(i)] = digits[(k.hi >> (60 - 4 * i)) & 0xF];
    s[static_cast<std::size_t>(16 + i)] = digits[(k.lo >> (60 - 4 * i)) & 0xF];
  }
  return s;
}

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint32_t low_mask(int bits) {
  return bits >= 32 ? 0xFFFFFFFFu : ((std::uint32_t{1} << bits) - 1);
}

}  // namespace detail

class Anonymizer {
 public:
  static constexpr int kRounds = 4;

  explicit Anonymizer(AnonKey key, int width_bits = 32) : width_(width_bits) {
    if (width_bits < 1 || width_bits > 32) throw ConfigError("anonymizer width outside [1, 32]");
    std::uint64_t s = key.hi ^ detail::mix64(key.lo + 0x9E3779B97F4A7C15ULL);
    for (auto& rk : round_keys_) {
      s += 0x9E3779B97F4A7C15ULL;
      rk = detail::mix64(s ^ key.lo);
    }
  }

  int width() const noexcept { return width_; }

  std::uint32_t anonymize(std::uint32_t addr) const {
    int lb = width_ / 2;
    int rb = width_ - lb;
    std::uint32_t l = (addr >> rb) & detail::low_mask(lb);
    std::uint32_t r = addr & detail::low_mask(rb);
    for (int i = 0; i < kRounds; ++i) {
      // (l: lb bits, r: rb bits) -> (r: rb bits, l ^ F(r): lb bits)
      const std::uint32_t nr = (l ^ round(i, r)) & detail::low_mask(lb);
      l = r;
      r = nr;
      std::swap(lb, rb);
    }
    return static_cast<std::uint32_t>((std::uint64_t{l} << rb) | r);
  }

  std::uint32_t deanonymize(std::uint32_t addr) const {
    // after an even number of rounds the half widths are back where they began
    int lb = width_ / 2;
    int rb = width_ - lb;
    std::uint32_t l = (addr >> rb) & detail::low_mask(lb);
    std::uint32_t r = addr & detail::low_mask(rb);
    for (int i = kRounds - 1; i >= 0; --i) {
      // invert: previous (pl: rb bits, pr: lb bits) with l = pr, r = pl ^ F(pr)
      const std::uint32_t pl = (r ^ round(i, l)) & detail::low_mask(rb);
      r = l;
      l = pl;
      std::swap(lb, rb);
    }
    return static_cast<std::uint32_t>((std::uint64_t{l} << rb) | r);
  }

 private:
  std::uint32_t round(int i, std::uint32_t half) const {
    return static_cast<std::uint32_t>(detail::mix64(round_keys_[static_cast<std::size_t>(i)] ^ half));
  }

  int width_;
  std::array<std::uint64_t, kRounds> round_keys_{};
};

}  // namespace htgc
