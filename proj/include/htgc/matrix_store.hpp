#pragma once

// Binary matrix files (.htmx) and the ustar archives that group them.
//
// .htmx layout, all integers little-endian:
//
//   offset  size  field
//   0       4     magic "HTMX"
//   4       1     version (1)
//   5       1     log2_dim
//   6       2     reserved, 0
//   8       8     nnz
//   16      16*n  (u32 row, u32 col, u64 count), sorted by (row, col)
//
// Archives are plain ustar files with one regular member per matrix and
// fixed metadata (mtime 0, uid/gid 0, mode 0644) so identical inputs give
// identical bytes.

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htgc/error.hpp"
#include "htgc/traffic_matrix.hpp"

namespace htgc {

inline constexpr std::array<char, 4> kMatrixMagic = {'H', 'T', 'M', 'X'};
inline constexpr std::uint8_t kMatrixVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 16;
inline constexpr std::size_t kMatrixTripleBytes = 16;

class DecodeError : public Error {
 public:
  enum class Kind {
    BadMagic,
    BadVersion,
    BadHeader,
    Truncated,
    TrailingBytes,
    IndexOutOfRange,
    UnsortedKeys,
    DuplicateKey,
    ZeroCount,
  };

  DecodeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_matrix(const TrafficMatrix& a) {
  std::vector<std::uint8_t> out;
  out.reserve(kMatrixHeaderBytes + kMatrixTripleBytes * nnz(a));
  out.insert(out.end(), kMatrixMagic.begin(), kMatrixMagic.end());
  out.push_back(kMatrixVersion);
  out.push_back(static_cast<std::uint8_t>(a.log2_dim()));
  detail::put_le<std::uint16_t>(out, 0);
  detail::put_le<std::uint64_t>(out, nnz(a));
  for (const auto& e : a.entries()) {
    detail::put_le<std::uint32_t>(out, e.row);
    detail::put_le<std::uint32_t>(out, e.col);
    detail::put_le<std::uint64_t>(out, e.count);
  }
  return out;
}

inline TrafficMatrix deserialize_matrix(std::span<const std::uint8_t> bytes) {
  using K = DecodeError::Kind;
  if (bytes.size() < kMatrixHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMatrixMagic.data(), 4) != 0) {
      throw DecodeError(K::BadMagic, "bad magic");
    }
    throw DecodeError(K::Truncated, "truncated header");
  }
  const std::uint8_t* p = bytes.data();
  if (std::memcmp(p, kMatrixMagic.data(), 4) != 0) throw DecodeError(K::BadMagic, "bad magic");
  if (p[4] != kMatrixVersion) {
    throw DecodeError(K::BadVersion, "unsupported version " + std::to_string(p[4]));
  }
  const int log2_dim = p[5];
  if (log2_dim < kMinLog2Dim || log2_dim > kMaxLog2Dim) {
    throw DecodeError(K::BadHeader, "log2_dim " + std::to_string(log2_dim) + " outside [1, 32]");
  }
  if (detail::get_le<std::uint16_t>(p + 6) != 0) {
    throw DecodeError(K::BadHeader, "nonzero reserved field");
  }
  const std::uint64_t n = detail::get_le<std::uint64_t>(p + 8);
  const std::uint64_t payload = bytes.size() - kMatrixHeaderBytes;
  if (n > payload / kMatrixTripleBytes) {
    throw DecodeError(K::Truncated, "payload holds fewer than " + std::to_string(n) + " triples");
  }
  if (payload != n * kMatrixTripleBytes) {
    throw DecodeError(K::TrailingBytes, "trailing bytes after " + std::to_string(n) + " triples");
  }

  const std::uint64_t dim = std::uint64_t{1} << log2_dim;
  std::vector<Entry> entries;
  entries.reserve(n);
  const std::uint8_t* t = p + kMatrixHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i, t += kMatrixTripleBytes) {
    Entry e{detail::get_le<std::uint32_t>(t), detail::get_le<std::uint32_t>(t + 4),
            detail::get_le<std::uint64_t>(t + 8)};
    if (e.row >= dim || e.col >= dim) {
      throw DecodeError(K::IndexOutOfRange, "triple " + std::to_string(i) + " index outside 2^" +
                                                std::to_string(log2_dim));
    }
    if (e.count == 0) throw DecodeError(K::ZeroCount, "triple " + std::to_string(i) + " has zero count");
    if (!entries.empty()) {
      const Entry& prev = entries.back();
      if (prev.row == e.row && prev.col == e.col) {
        throw DecodeError(K::DuplicateKey, "triple " + std::to_string(i) + " duplicates its predecessor");
      }
      if (detail::key_less(e, prev)) {
        throw DecodeError(K::UnsortedKeys, "triple " + std::to_string(i) + " out of order");
      }
    }
    entries.push_back(e);
  }
  return TrafficMatrix::from_entries(log2_dim, std::move(entries));
}

// Naming scheme. Zero padding keeps lexicographic order equal to processing
// order.

inline std::string member_name(std::uint64_t matrix_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "m%05llu.htmx", static_cast<unsigned long long>(matrix_index));
  return buf;
}

inline std::string archive_name(std::uint64_t window_id, std::uint64_t archive_index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "w%04llu_a%04llu.tar", static_cast<unsigned long long>(window_id),
                static_cast<unsigned long long>(archive_index));
  return buf;
}

inline std::string subrange_archive_name(std::uint64_t window_id, std::uint64_t archive_index,
                                         std::uint64_t range_id) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "w%04llu_a%04llu_r%02llu.tar",
                static_cast<unsigned long long>(window_id),
                static_cast<unsigned long long>(archive_index),
                static_cast<unsigned long long>(range_id));
  return buf;
}

struct ArchiveManifest {
  std::uint64_t window_id = 0;
  std::uint64_t archive_index = 0;
  std::vector<std::string> members;
};

class ArchiveError : public IoError {
 public:
  enum class Kind { Missing, MalformedTar, MalformedMember, MemberOrder };

  ArchiveError(Kind kind, const std::string& path, const std::string& member, const std::string& what)
      : IoError(path, member.empty() ? what : "member " + member + ": " + what),
        kind_(kind),
        member_(member) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& member() const noexcept { return member_; }

 private:
  Kind kind_;
  std::string member_;
};

namespace tar {

inline constexpr std::size_t kBlock = 512;

using Header = std::array<char, kBlock>;

inline void put_octal(char* field, std::size_t width, std::uint64_t value) {
  // width-1 zero-padded octal digits followed by NUL
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1),
                static_cast<unsigned long long>(value));
}

inline std::uint32_t header_checksum(const Header& h) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < kBlock; ++i) {
    // checksum field (148..155) counts as spaces
    sum += (i >= 148 && i < 156) ? std::uint32_t{' '} : static_cast<unsigned char>(h[i]);
  }
  return sum;
}

inline Header make_header(const std::string& name, std::uint64_t size) {
  Header h{};
  std::memcpy(h.data(), name.data(), std::min<std::size_t>(name.size(), 100));
  put_octal(h.data() + 100, 8, 0644);
  put_octal(h.data() + 108, 8, 0);
  put_octal(h.data() + 116, 8, 0);
  put_octal(h.data() + 124, 12, size);
  put_octal(h.data() + 136, 12, 0);
  h[156] = '0';
  std::memcpy(h.data() + 257, "ustar", 6);
  std::memcpy(h.data() + 263, "00", 2);
  const std::uint32_t sum = header_checksum(h);
  std::snprintf(h.data() + 148, 7, "%06o", sum);
  h[154] = '\0';
  h[155] = ' ';
  return h;
}

inline std::optional<std::uint64_t> parse_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  std::size_t i = 0;
  while (i < width && field[i] == ' ') ++i;
  bool any = false;
  for (; i < width && field[i] >= '0' && field[i] <= '7'; ++i) {
    v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
    any = true;
  }
  for (; i < width; ++i) {
    if (field[i] != '\0' && field[i] != ' ') return std::nullopt;
  }
  if (!any) return std::nullopt;
  return v;
}

inline std::uint64_t padded(std::uint64_t size) { return (size + kBlock - 1) / kBlock * kBlock; }

}  // namespace tar

/// Writes `matrices` as members of a new ustar archive at `path`. Member j is
/// named for matrix index archive_index * nmat_per_file + j.
inline ArchiveManifest write_archive(std::span<const TrafficMatrix> matrices, std::uint64_t window_id,
                                     std::uint64_t archive_index, std::uint64_t nmat_per_file,
                                     const std::string& path) {
  if (matrices.size() > nmat_per_file) {
    throw MatrixError("archive holds " + std::to_string(matrices.size()) +
                      " matrices, more than NmatPerFile " + std::to_string(nmat_per_file));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");

  ArchiveManifest manifest{window_id, archive_index, {}};
  static const std::array<char, tar::kBlock> zeros{};
  for (std::size_t j = 0; j < matrices.size(); ++j) {
    std::string name = member_name(archive_index * nmat_per_file + j);
    const auto bytes = serialize_matrix(matrices[j]);
    const auto header = tar::make_header(name, bytes.size());
    out.write(header.data(), header.size());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.write(zeros.data(), static_cast<std::streamsize>(tar::padded(bytes.size()) - bytes.size()));
    manifest.members.push_back(std::move(name));
  }
  out.write(zeros.data(), zeros.size());
  out.write(zeros.data(), zeros.size());
  out.close();
  if (!out) throw IoError(path, "write failed");
  return manifest;
}

/// Streams matrices out of an archive one member at a time.
class ArchiveReader {
 public:
  struct Member {
    std::string name;
    TrafficMatrix matrix;
  };

  explicit ArchiveReader(std::string path) : path_(std::move(path)), in_(path_, std::ios::binary) {
    if (!in_) throw ArchiveError(ArchiveError::Kind::Missing, path_, "", "cannot open archive");
  }

  const std::string& path() const noexcept { return path_; }

  /// Next regular-file member, or nullopt at the end of the archive.
  std::optional<Member> next() {
    using K = ArchiveError::Kind;
    while (!done_) {
      tar::Header h{};
      in_.read(h.data(), h.size());
      if (in_.gcount() == 0 && in_.eof()) {
        done_ = true;
        break;
      }
      if (static_cast<std::size_t>(in_.gcount()) != tar::kBlock) {
        throw ArchiveError(K::MalformedTar, path_, "", "truncated header block");
      }
      if (std::all_of(h.begin(), h.end(), [](char c) { return c == 0; })) {
        done_ = true;
        break;
      }
      const auto stored_sum = tar::parse_octal(h.data() + 148, 8);
      if (!stored_sum || *stored_sum != tar::header_checksum(h)) {
        throw ArchiveError(K::MalformedTar, path_, "", "header checksum mismatch");
      }
      const auto size = tar::parse_octal(h.data() + 124, 12);
      if (!size) throw ArchiveError(K::MalformedTar, path_, "", "bad size field");
      std::string name(h.data(), strnlen(h.data(), 100));
      if (std::memcmp(h.data() + 257, "ustar", 5) == 0 && h[345] != '\0') {
        name = std::string(h.data() + 345, strnlen(h.data() + 345, 155)) + "/" + name;
      }

      std::vector<std::uint8_t> payload(*size);
      in_.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(*size));
      if (static_cast<std::uint64_t>(in_.gcount()) != *size) {
        throw ArchiveError(K::MalformedTar, path_, name, "truncated member data");
      }
      in_.ignore(static_cast<std::streamsize>(tar::padded(*size) - *size));

      const char type = h[156];
      if (type != '0' && type != '\0') continue;  // directories, links, pax headers

      if (!last_name_.empty() && name <= last_name_) {
        throw ArchiveError(K::MemberOrder, path_, name, "member names not strictly increasing");
      }
      last_name_ = name;
      try {
        return Member{name, deserialize_matrix(payload)};
      } catch (const Error& e) {
        throw ArchiveError(K::MalformedMember, path_, name, e.what());
      }
    }
    return std::nullopt;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::string last_name_;
  bool done_ = false;
};

inline std::vector<TrafficMatrix> read_archive(const std::string& path) {
  ArchiveReader reader(path);
  std::vector<TrafficMatrix> out;
  while (auto m = reader.next()) out.push_back(std::move(m->matrix));
  return out;
}

}  // namespace htgc
