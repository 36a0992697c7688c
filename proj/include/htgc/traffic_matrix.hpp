#pragma once

// Hypersparse traffic-matrix kernel.
//
// A TrafficMatrix counts packets per (source, destination) pair over a
// 2^k x 2^k address space. Storage is coordinate form sorted row-major by
// (row, col):
//   - no duplicate keys
//   - every stored count is >= 1
//   - every index is < 2^k
// Every operation here returns a matrix in that canonical form, so two
// matrices are equal exactly when their entry lists are equal.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "htgc/error.hpp"

namespace htgc {

using Index = std::uint32_t;
using Count = std::uint64_t;

inline constexpr int kMinLog2Dim = 1;
inline constexpr int kMaxLog2Dim = 32;

struct Entry {
  Index row = 0;
  Index col = 0;
  Count count = 0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

struct AddressPair {
  Index src = 0;
  Index dst = 0;
};

/// One element of a sparse vector: only nonzero positions are stored.
struct IndexValue {
  Index index = 0;
  Count value = 0;

  friend bool operator==(const IndexValue&, const IndexValue&) = default;
};

using SparseVector = std::vector<IndexValue>;

namespace detail {

inline void check_log2_dim(int log2_dim) {
  if (log2_dim < kMinLog2Dim || log2_dim > kMaxLog2Dim) {
    throw MatrixError("log2_dim " + std::to_string(log2_dim) + " outside [1, 32]");
  }
}

inline Count checked_add(Count a, Count b) {
  if (a > std::numeric_limits<Count>::max() - b) {
    throw MatrixError("count overflow in matrix addition");
  }
  return a + b;
}

inline bool key_less(const Entry& a, const Entry& b) {
  return a.row < b.row || (a.row == b.row && a.col < b.col);
}

// Sort (index, value) pairs by index and coalesce runs by summing.
inline SparseVector coalesce(std::vector<IndexValue> v) {
  std::sort(v.begin(), v.end(),
            [](const IndexValue& a, const IndexValue& b) { return a.index < b.index; });
  SparseVector out;
  for (const auto& iv : v) {
    if (!out.empty() && out.back().index == iv.index) {
      out.back().value += iv.value;
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

}  // namespace detail

class TrafficMatrix {
 public:
  explicit TrafficMatrix(int log2_dim = kMaxLog2Dim) : log2_dim_(log2_dim) {
    detail::check_log2_dim(log2_dim);
  }

  /// Adopts an entry list, verifying every canonical-form invariant.
  static TrafficMatrix from_entries(int log2_dim, std::vector<Entry> entries) {
    TrafficMatrix m(log2_dim);
    m.entries_ = std::move(entries);
    if (auto why = m.invariant_violation(); !why.empty()) {
      throw MatrixError(why);
    }
    return m;
  }

  int log2_dim() const noexcept { return log2_dim_; }
  std::uint64_t dim() const noexcept { return std::uint64_t{1} << log2_dim_; }
  std::span<const Entry> entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

  /// Empty string when the matrix is canonical, otherwise a description of
  /// the first violation found.
  std::string invariant_violation() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const Entry& e = entries_[i];
      if (e.row >= dim() || e.col >= dim()) {
        return "entry " + std::to_string(i) + " index outside 2^" + std::to_string(log2_dim_);
      }
      if (e.count == 0) {
        return "entry " + std::to_string(i) + " stores an explicit zero";
      }
      if (i > 0 && !detail::key_less(entries_[i - 1], e)) {
        return "entry " + std::to_string(i) + " is duplicate or out of order";
      }
    }
    return {};
  }

  friend bool operator==(const TrafficMatrix&, const TrafficMatrix&) = default;

 private:
  friend TrafficMatrix add(const TrafficMatrix&, const TrafficMatrix&);
  friend void add_in_place(TrafficMatrix&, const TrafficMatrix&);
  friend TrafficMatrix matrix_from_pairs(std::span<const AddressPair>, int);

  int log2_dim_;
  std::vector<Entry> entries_;
};

/// Set of address indices: an inclusive range or an explicit sorted list.
class AddressSet {
 public:
  struct Range {
    Index lo;
    Index hi;
  };

  static AddressSet range(Index lo, Index hi) {
    if (lo > hi) {
      throw MatrixError("address range lo > hi");
    }
    return AddressSet(Range{lo, hi});
  }

  static AddressSet all(int log2_dim) {
    detail::check_log2_dim(log2_dim);
    return range(0, static_cast<Index>((std::uint64_t{1} << log2_dim) - 1));
  }

  /// Sorted and deduplicated on construction.
  static AddressSet list(std::vector<Index> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    return AddressSet(std::move(indices));
  }

  bool contains(Index i) const {
    if (const auto* r = std::get_if<Range>(&set_)) {
      return r->lo <= i && i <= r->hi;
    }
    const auto& v = std::get<std::vector<Index>>(set_);
    return std::binary_search(v.begin(), v.end(), i);
  }

  bool is_range() const noexcept { return std::holds_alternative<Range>(set_); }
  const Range* as_range() const noexcept { return std::get_if<Range>(&set_); }
  const std::vector<Index>* as_list() const noexcept {
    return std::get_if<std::vector<Index>>(&set_);
  }

 private:
  explicit AddressSet(std::variant<Range, std::vector<Index>> s) : set_(std::move(s)) {}

  std::variant<Range, std::vector<Index>> set_;
};

/// Tallies (src, dst) pairs; each distinct pair's count is its multiplicity.
inline TrafficMatrix matrix_from_pairs(std::span<const AddressPair> pairs, int log2_dim) {
  TrafficMatrix m(log2_dim);
  const std::uint64_t dim = m.dim();
  std::vector<std::uint64_t> keys;
  keys.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.src >= dim || p.dst >= dim) {
      throw MatrixError("pair #" + std::to_string(i) + " (" + std::to_string(p.src) + ", " +
                        std::to_string(p.dst) + ") outside 2^" + std::to_string(log2_dim) +
                        " address space");
    }
    keys.push_back((std::uint64_t{p.src} << 32) | p.dst);
  }
  std::sort(keys.begin(), keys.end());
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i + 1;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    m.entries_.push_back(Entry{static_cast<Index>(keys[i] >> 32),
                               static_cast<Index>(keys[i] & 0xFFFFFFFFu), j - i});
    i = j;
  }
  return m;
}

namespace detail {

inline void merge_sum(std::span<const Entry> a, std::span<const Entry> b, std::vector<Entry>& out) {
  out.clear();
  out.reserve(a.size() + b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    if (key_less(a[i], b[j])) {
      out.push_back(a[i++]);
    } else if (key_less(b[j], a[i])) {
      out.push_back(b[j++]);
    } else {
      out.push_back(Entry{a[i].row, a[i].col, checked_add(a[i].count, b[j].count)});
      ++i;
      ++j;
    }
  }
  out.insert(out.end(), a.begin() + static_cast<std::ptrdiff_t>(i), a.end());
  out.insert(out.end(), b.begin() + static_cast<std::ptrdiff_t>(j), b.end());
}

inline void check_same_dim(const TrafficMatrix& a, const TrafficMatrix& b) {
  if (a.log2_dim() != b.log2_dim()) {
    throw MatrixError("dimension mismatch: 2^" + std::to_string(a.log2_dim()) + " vs 2^" +
                      std::to_string(b.log2_dim()));
  }
}

}  // namespace detail

inline TrafficMatrix add(const TrafficMatrix& a, const TrafficMatrix& b) {
  detail::check_same_dim(a, b);
  TrafficMatrix out(a.log2_dim());
  detail::merge_sum(a.entries(), b.entries(), out.entries_);
  return out;
}

/// acc += a. Same result as add(acc, a); the old storage is reused when a is
/// empty.
inline void add_in_place(TrafficMatrix& acc, const TrafficMatrix& a) {
  detail::check_same_dim(acc, a);
  if (a.empty()) return;
  if (acc.empty()) {
    acc.entries_.assign(a.entries().begin(), a.entries().end());
    return;
  }
  std::vector<Entry> merged;
  detail::merge_sum(acc.entries(), a.entries(), merged);
  acc.entries_ = std::move(merged);
}

inline Count total_count(const TrafficMatrix& a) {
  Count total = 0;
  for (const auto& e : a.entries()) total = detail::checked_add(total, e.count);
  return total;
}

inline std::size_t nnz(const TrafficMatrix& a) { return a.entries().size(); }

inline Count max_count(const TrafficMatrix& a) {
  Count m = 0;
  for (const auto& e : a.entries()) m = std::max(m, e.count);
  return m;
}

/// Packets sent by each source (sum along each nonzero row).
inline SparseVector row_reduce(const TrafficMatrix& a) {
  SparseVector out;
  for (const auto& e : a.entries()) {
    if (!out.empty() && out.back().index == e.row) {
      out.back().value += e.count;
    } else {
      out.push_back({e.row, e.count});
    }
  }
  return out;
}

/// Packets received by each destination.
inline SparseVector col_reduce(const TrafficMatrix& a) {
  std::vector<IndexValue> cols;
  cols.reserve(a.entries().size());
  for (const auto& e : a.entries()) cols.push_back({e.col, e.count});
  return detail::coalesce(std::move(cols));
}

/// Fan-out: distinct destinations per source.
inline SparseVector row_degree(const TrafficMatrix& a) {
  SparseVector out;
  for (const auto& e : a.entries()) {
    if (!out.empty() && out.back().index == e.row) {
      ++out.back().value;
    } else {
      out.push_back({e.row, 1});
    }
  }
  return out;
}

/// Fan-in: distinct sources per destination.
inline SparseVector col_degree(const TrafficMatrix& a) {
  std::vector<IndexValue> cols;
  cols.reserve(a.entries().size());
  for (const auto& e : a.entries()) cols.push_back({e.col, 1});
  return detail::coalesce(std::move(cols));
}

/// Entries of `a` with row in `src` and col in `dst`, i.e. D_src * A * D_dst
/// for 0/1 diagonal masks.
inline TrafficMatrix diag_mask(const TrafficMatrix& a, const AddressSet& src, const AddressSet& dst) {
  std::vector<Entry> kept;
  for (const auto& e : a.entries()) {
    if (src.contains(e.row) && dst.contains(e.col)) kept.push_back(e);
  }
  return TrafficMatrix::from_entries(a.log2_dim(), std::move(kept));
}

inline Count vector_sum(const SparseVector& v) {
  Count s = 0;
  for (const auto& iv : v) s += iv.value;
  return s;
}

inline Count vector_max(const SparseVector& v) {
  Count m = 0;
  for (const auto& iv : v) m = std::max(m, iv.value);
  return m;
}

}  // namespace htgc
