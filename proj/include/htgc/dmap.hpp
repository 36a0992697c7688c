#pragma once

// Distribution maps: which processor owns which global indices.
//
// A Dmap is a processor grid, a per-dimension distribution and an ordered
// list of processor ids. A processor's grid coordinate comes from its
// position in the list, with the first grid dimension varying fastest.
// Ownership is a pure function of the map, so every process computes the
// same partition without talking to the others.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "htgc/error.hpp"

namespace htgc {

struct Dist {
  enum class Kind { Block, Cyclic, BlockCyclic, BlockOverlap };

  Kind kind = Kind::Block;
  std::size_t block_size = 0;  // BlockCyclic only

  static Dist block() { return {Kind::Block, 0}; }
  static Dist cyclic() { return {Kind::Cyclic, 0}; }
  static Dist block_cyclic(std::size_t b) { return {Kind::BlockCyclic, b}; }
  static Dist block_overlap() { return {Kind::BlockOverlap, 0}; }

  friend bool operator==(const Dist&, const Dist&) = default;
};

inline std::string to_string(const Dist& d) {
  switch (d.kind) {
    case Dist::Kind::Block: return "block";
    case Dist::Kind::Cyclic: return "cyclic";
    case Dist::Kind::BlockCyclic: return "blockcyclic:" + std::to_string(d.block_size);
    case Dist::Kind::BlockOverlap: return "blockoverlap";
  }
  return "?";
}

/// Parses "block", "cyclic" or "blockcyclic:<b>".
inline Dist parse_dist(const std::string& s) {
  if (s == "block") return Dist::block();
  if (s == "cyclic") return Dist::cyclic();
  const std::string prefix = "blockcyclic:";
  if (s.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const auto tail = s.substr(prefix.size());
      const auto b = std::stoull(tail, &used);
      if (used == tail.size()) return Dist::block_cyclic(b);
    } catch (const std::exception&) {
    }
  }
  throw MapError("unknown distribution '" + s + "'");
}

class Dmap {
 public:
  using Pid = std::int64_t;

  /// One distribution per grid dimension. An empty `dist` means block along
  /// every dimension; a single entry applies to all dimensions.
  Dmap(std::vector<std::size_t> grid, std::vector<Dist> dist, std::vector<Pid> procs)
      : grid_(std::move(grid)), dist_(std::move(dist)), procs_(std::move(procs)) {
    if (grid_.empty()) throw MapError("processor grid has no dimensions");
    for (auto g : grid_) {
      if (g == 0) throw MapError("processor grid has a zero extent");
    }
    if (dist_.empty()) dist_.assign(grid_.size(), Dist::block());
    if (dist_.size() == 1 && grid_.size() > 1) dist_.assign(grid_.size(), dist_.front());
    if (dist_.size() != grid_.size()) throw MapError("distribution count does not match grid rank");
    for (const auto& d : dist_) {
      if (d.kind == Dist::Kind::BlockOverlap) {
        throw MapError("block-overlap distribution is not supported");
      }
      if (d.kind == Dist::Kind::BlockCyclic && d.block_size == 0) {
        throw MapError("block-cyclic block size must be >= 1");
      }
    }
    const auto n = std::accumulate(grid_.begin(), grid_.end(), std::size_t{1}, std::multiplies<>());
    if (procs_.size() != n) {
      throw MapError("processor list has " + std::to_string(procs_.size()) +
                     " entries but the grid needs " + std::to_string(n));
    }
    std::unordered_set<Pid> seen(procs_.begin(), procs_.end());
    if (seen.size() != procs_.size()) throw MapError("processor list has duplicates");
  }

  /// The [np, 1] column-vector map over pids 0..np-1.
  static Dmap column(std::size_t np, Dist dist = Dist::block()) {
    std::vector<Pid> procs(np);
    std::iota(procs.begin(), procs.end(), Pid{0});
    return Dmap({np, 1}, {dist}, std::move(procs));
  }

  const std::vector<std::size_t>& grid() const noexcept { return grid_; }
  const std::vector<Dist>& dist() const noexcept { return dist_; }
  const std::vector<Pid>& procs() const noexcept { return procs_; }
  std::size_t size() const noexcept { return procs_.size(); }

  bool contains(Pid pid) const {
    return std::find(procs_.begin(), procs_.end(), pid) != procs_.end();
  }

  /// Grid coordinate of `pid` along `dim`.
  std::size_t coord(Pid pid, std::size_t dim) const {
    check_dim(dim);
    const auto it = std::find(procs_.begin(), procs_.end(), pid);
    if (it == procs_.end()) throw MapError("processor " + std::to_string(pid) + " not in map");
    std::size_t linear = static_cast<std::size_t>(it - procs_.begin());
    for (std::size_t d = 0; d < dim; ++d) linear /= grid_[d];
    return linear % grid_[dim];
  }

  void check_dim(std::size_t dim) const {
    if (dim >= grid_.size()) {
      throw MapError("dimension " + std::to_string(dim) + " outside map of rank " +
                     std::to_string(grid_.size()));
    }
  }

 private:
  std::vector<std::size_t> grid_;
  std::vector<Dist> dist_;
  std::vector<Pid> procs_;
};

namespace detail {

// Effective block size along one dimension; block maps use ceil(n/p).
inline std::size_t block_size_for(const Dist& d, std::size_t n, std::size_t p) {
  switch (d.kind) {
    case Dist::Kind::Block: return std::max<std::size_t>(1, (n + p - 1) / p);
    case Dist::Kind::Cyclic: return 1;
    default: return d.block_size;
  }
}

inline std::size_t extent_along(const Dmap& map, std::span<const std::size_t> shape, std::size_t dim) {
  map.check_dim(dim);
  if (dim >= shape.size()) {
    throw MapError("dimension " + std::to_string(dim) + " outside array of rank " +
                   std::to_string(shape.size()));
  }
  return shape[dim];
}

}  // namespace detail

/// Global indices along `dim` owned by `pid`, in increasing order.
inline std::vector<std::size_t> global_ind(const Dmap& map, std::span<const std::size_t> shape,
                                           std::size_t dim, Dmap::Pid pid) {
  const std::size_t n = detail::extent_along(map, shape, dim);
  const std::size_t p = map.grid()[dim];
  const std::size_t g = map.coord(pid, dim);
  const std::size_t b = detail::block_size_for(map.dist()[dim], n, p);

  std::vector<std::size_t> out;
  for (std::size_t start = g * b; start < n; start += p * b) {
    for (std::size_t i = start; i < std::min(start + b, n); ++i) out.push_back(i);
  }
  return out;
}

/// The processor owning `index` along `dim`. With a multi-dimensional grid,
/// several processors share a coordinate; the first one in list order is
/// returned.
inline Dmap::Pid owner(const Dmap& map, std::span<const std::size_t> shape, std::size_t dim,
                       std::size_t index) {
  const std::size_t n = detail::extent_along(map, shape, dim);
  if (index >= n) {
    throw MapError("index " + std::to_string(index) + " outside extent " + std::to_string(n));
  }
  const std::size_t p = map.grid()[dim];
  const std::size_t b = detail::block_size_for(map.dist()[dim], n, p);
  const std::size_t g = (index / b) % p;
  for (auto pid : map.procs()) {
    if (map.coord(pid, dim) == g) return pid;
  }
  throw MapError("no processor at grid coordinate " + std::to_string(g));
}

}  // namespace htgc
