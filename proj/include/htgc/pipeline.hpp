#pragma once

// Window pipeline: packets -> anonymized matrices -> archives, and back:
// archives -> summed window matrix -> nine statistics.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "htgc/anonymize.hpp"
#include "htgc/config.hpp"
#include "htgc/dmap.hpp"
#include "htgc/error.hpp"
#include "htgc/matrix_store.hpp"
#include "htgc/packets.hpp"
#include "htgc/traffic_matrix.hpp"

namespace htgc {

struct NetworkStats {
  Count valid_packets = 0;
  Count unique_links = 0;
  Count max_link_packets = 0;
  Count unique_sources = 0;
  Count max_source_packets = 0;
  Count max_source_fanout = 0;
  Count unique_destinations = 0;
  Count max_dest_packets = 0;
  Count max_dest_fanin = 0;

  friend bool operator==(const NetworkStats&, const NetworkStats&) = default;
};

inline constexpr const char* kStatNames[9] = {
    "valid_packets",      "unique_links",        "max_link_packets",
    "unique_sources",     "max_source_packets",  "max_source_fanout",
    "unique_destinations", "max_dest_packets",   "max_dest_fanin",
};

inline std::array<Count, 9> as_array(const NetworkStats& s) {
  return {s.valid_packets,      s.unique_links,        s.max_link_packets,
          s.unique_sources,     s.max_source_packets,  s.max_source_fanout,
          s.unique_destinations, s.max_dest_packets,   s.max_dest_fanin};
}

inline NetworkStats from_array(const std::array<Count, 9>& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]};
}

/// Empty string if the cross-statistic inequalities hold, else the first
/// one that fails.
inline std::string stats_violation(const NetworkStats& s) {
  if (s.unique_links > s.valid_packets) return "unique_links > valid_packets";
  if (s.max_link_packets > s.max_source_packets) return "max_link_packets > max_source_packets";
  if (s.max_source_packets > s.valid_packets) return "max_source_packets > valid_packets";
  if (s.max_link_packets > s.max_dest_packets) return "max_link_packets > max_dest_packets";
  if (s.max_dest_packets > s.valid_packets) return "max_dest_packets > valid_packets";
  if (s.max_source_fanout > s.unique_destinations) return "max_source_fanout > unique_destinations";
  if (s.max_dest_fanin > s.unique_sources) return "max_dest_fanin > unique_sources";
  const bool all_zero = s == NetworkStats{};
  if ((s.valid_packets == 0) != all_zero) return "valid_packets == 0 but some statistic is not";
  return {};
}

/// All nine statistics from one pass over the entries plus one sort of the
/// column keys.
inline NetworkStats analyze(const TrafficMatrix& a) {
  NetworkStats s;
  const auto entries = a.entries();
  s.unique_links = entries.size();

  Index cur_row = 0;
  Count row_sum = 0;
  Count row_deg = 0;
  std::vector<IndexValue> cols;
  cols.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    s.valid_packets = detail::checked_add(s.valid_packets, e.count);
    s.max_link_packets = std::max(s.max_link_packets, e.count);
    if (i == 0 || e.row != cur_row) {
      cur_row = e.row;
      row_sum = 0;
      row_deg = 0;
      ++s.unique_sources;
    }
    row_sum += e.count;
    ++row_deg;
    s.max_source_packets = std::max(s.max_source_packets, row_sum);
    s.max_source_fanout = std::max(s.max_source_fanout, row_deg);
    cols.push_back({e.col, e.count});
  }

  std::sort(cols.begin(), cols.end(),
            [](const IndexValue& x, const IndexValue& y) { return x.index < y.index; });
  for (std::size_t i = 0; i < cols.size();) {
    Count sum = 0;
    std::size_t j = i;
    for (; j < cols.size() && cols[j].index == cols[i].index; ++j) sum += cols[j].value;
    ++s.unique_destinations;
    s.max_dest_packets = std::max(s.max_dest_packets, sum);
    s.max_dest_fanin = std::max<Count>(s.max_dest_fanin, j - i);
    i = j;
  }
  return s;
}

inline std::vector<NetworkStats> subrange_analyze(const TrafficMatrix& a, std::span<const Subrange> subranges) {
  std::vector<NetworkStats> out;
  out.reserve(subranges.size());
  for (const auto& r : subranges) out.push_back(analyze(diag_mask(a, r.src, r.dst)));
  return out;
}

// ---------------------------------------------------------------------------
// Building and saving windows

/// Chunks a packet stream into matrices of Nv packets each. Chunk boundaries
/// count every packet; invalid packets are dropped from the matrix but still
/// advance the boundary.
class WindowBuilder {
 public:
  using Sink = std::function<void(TrafficMatrix)>;

  WindowBuilder(const ChallengeConfig& cfg, Sink sink)
      : cfg_(cfg), anon_(cfg.anon_key, cfg.log2_dim), sink_(std::move(sink)) {
    cfg_.validate();
    pairs_.reserve(static_cast<std::size_t>(cfg_.nv));
  }

  void push(const PacketRecord& p) {
    if (p.valid) {
      if ((std::uint64_t{p.src} | p.dst) >= dim_) {
        throw MatrixError("packet (" + std::to_string(p.src) + ", " + std::to_string(p.dst) +
                          ") outside 2^" + std::to_string(cfg_.log2_dim) + " address space");
      }
      pairs_.push_back(cfg_.anonymize ? AddressPair{anon_.anonymize(p.src), anon_.anonymize(p.dst)}
                                      : AddressPair{p.src, p.dst});
      ++valid_;
    }
    if (++in_chunk_ == cfg_.nv) emit();
  }

  void push(std::span<const PacketRecord> ps) {
    for (const auto& p : ps) push(p);
  }

  /// Emits the trailing short matrix, if any.
  void finish() {
    if (in_chunk_ > 0) emit();
  }

  std::uint64_t valid_packets() const noexcept { return valid_; }
  std::uint64_t matrices_emitted() const noexcept { return emitted_; }

 private:
  void emit() {
    sink_(matrix_from_pairs(pairs_, cfg_.log2_dim));
    pairs_.clear();
    in_chunk_ = 0;
    ++emitted_;
  }

  ChallengeConfig cfg_;
  Anonymizer anon_;
  Sink sink_;
  std::uint64_t dim_ = std::uint64_t{1} << cfg_.log2_dim;
  std::vector<AddressPair> pairs_;
  std::uint64_t in_chunk_ = 0;
  std::uint64_t valid_ = 0;
  std::uint64_t emitted_ = 0;
};

inline std::vector<TrafficMatrix> build_window(std::span<const PacketRecord> packets, const ChallengeConfig& cfg) {
  std::vector<TrafficMatrix> out;
  WindowBuilder b(cfg, [&](TrafficMatrix m) { out.push_back(std::move(m)); });
  b.push(packets);
  b.finish();
  return out;
}

struct SavedArchive {
  std::uint64_t window_id = 0;
  std::uint64_t archive_index = 0;
  std::optional<std::uint64_t> range_id;
  std::string path;
};

/// Groups matrices NmatPerFile at a time into archives. When subranges are
/// configured each group is also masked and written to per-range archives;
/// masked matrices are dropped as soon as their archive is written.
class WindowWriter {
 public:
  WindowWriter(const ChallengeConfig& cfg, std::uint64_t window_id, std::filesystem::path out_dir)
      : cfg_(cfg), window_id_(window_id), out_dir_(std::move(out_dir)) {}

  void add(TrafficMatrix m) {
    group_.push_back(std::move(m));
    if (group_.size() == cfg_.nmat_per_file) flush();
  }

  /// Writes the trailing partial group and returns every archive written.
  std::vector<SavedArchive> finish() {
    if (!group_.empty()) flush();
    return std::move(saved_);
  }

 private:
  void flush() {
    const auto main = (out_dir_ / archive_name(window_id_, next_archive_)).string();
    write_archive(group_, window_id_, next_archive_, cfg_.nmat_per_file, main);
    saved_.push_back({window_id_, next_archive_, std::nullopt, main});
    for (std::size_t r = 0; r < cfg_.subranges.size(); ++r) {
      std::vector<TrafficMatrix> masked;
      masked.reserve(group_.size());
      for (const auto& m : group_) masked.push_back(diag_mask(m, cfg_.subranges[r].src, cfg_.subranges[r].dst));
      const auto path = (out_dir_ / subrange_archive_name(window_id_, next_archive_, r)).string();
      write_archive(masked, window_id_, next_archive_, cfg_.nmat_per_file, path);
      saved_.push_back({window_id_, next_archive_, r, path});
    }
    group_.clear();
    ++next_archive_;
  }

  ChallengeConfig cfg_;
  std::uint64_t window_id_;
  std::filesystem::path out_dir_;
  std::vector<TrafficMatrix> group_;
  std::vector<SavedArchive> saved_;
  std::uint64_t next_archive_ = 0;
};

inline std::vector<SavedArchive> save_window(std::span<const TrafficMatrix> matrices, const ChallengeConfig& cfg,
                                             std::uint64_t window_id, const std::filesystem::path& out_dir) {
  WindowWriter w(cfg, window_id, out_dir);
  for (const auto& m : matrices) w.add(m);
  return w.finish();
}

// ---------------------------------------------------------------------------
// Reading and summing

namespace detail {

inline void accumulate_archives(std::span<const std::string> paths, std::optional<TrafficMatrix>& acc) {
  for (const auto& path : paths) {
    ArchiveReader reader(path);
    try {
      while (auto m = reader.next()) {
        if (!acc) acc.emplace(m->matrix.log2_dim());
        add_in_place(*acc, m->matrix);
      }
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      throw IoError(path, e.what());
    }
  }
}

}  // namespace detail

/// Sum of every matrix in every archive. With n_threads > 1 the archive list
/// is split into contiguous slices summed concurrently and reduced in slice
/// order; integer addition makes the result independent of the split.
/// Returns an empty 2^log2_dim matrix when the archives hold no members.
inline TrafficMatrix sum_window(std::span<const std::string> archive_paths, int log2_dim, unsigned n_threads = 1) {
  const std::size_t n = archive_paths.size();
  const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(n_threads, n));
  std::vector<std::optional<TrafficMatrix>> partial(t);
  std::vector<std::exception_ptr> errors(t);

  auto work = [&](std::size_t k) {
    const std::size_t lo = n * k / t;
    const std::size_t hi = n * (k + 1) / t;
    try {
      detail::accumulate_archives(archive_paths.subspan(lo, hi - lo), partial[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  if (t == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(t);
    for (std::size_t k = 0; k < t; ++k) pool.emplace_back(work, k);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  TrafficMatrix acc(log2_dim);
  for (auto& p : partial) {
    if (!p) continue;
    if (p->log2_dim() != log2_dim) {
      throw MatrixError("archive matrices are 2^" + std::to_string(p->log2_dim()) + ", expected 2^" +
                        std::to_string(log2_dim));
    }
    add_in_place(acc, *p);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Window manifests and result records

struct WindowDescriptor {
  std::uint64_t window_id = 0;
  std::vector<std::string> archives;                           // main archives, in order
  std::map<std::uint64_t, std::vector<std::string>> subrange;  // range id -> archives
};

/// Manifest lines: `main,<window>,<archive>,<path>` and
/// `sub,<window>,<archive>,<range>,<path>`. Relative paths resolve against
/// the manifest's directory.
inline void write_manifest(const std::string& path, std::span<const SavedArchive> archives) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  const auto base = std::filesystem::path(path).parent_path();
  for (const auto& a : archives) {
    const auto rel = std::filesystem::path(a.path).lexically_relative(base.empty() ? "." : base);
    const auto shown = rel.empty() ? std::filesystem::path(a.path) : rel;
    if (a.range_id) {
      out << "sub," << a.window_id << ',' << a.archive_index << ',' << *a.range_id << ',' << shown.string() << '\n';
    } else {
      out << "main," << a.window_id << ',' << a.archive_index << ',' << shown.string() << '\n';
    }
  }
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<WindowDescriptor> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open manifest");
  const auto base = std::filesystem::path(path).parent_path();
  std::map<std::uint64_t, std::map<std::uint64_t, std::string>> main;
  std::map<std::uint64_t, std::map<std::uint64_t, std::map<std::uint64_t, std::string>>> subs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    const std::size_t fields = line.rfind("sub,", 0) == 0 ? 5 : 4;
    while (f.size() + 1 < fields) {
      const auto c = line.find(',', pos);
      if (c == std::string::npos) break;
      f.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    f.push_back(line.substr(pos));
    if (f.size() != fields || (f[0] != "main" && f[0] != "sub")) {
      throw IoError(path, "line " + std::to_string(lineno) + ": malformed manifest entry");
    }
    try {
      const auto w = std::stoull(f[1]);
      const auto a = std::stoull(f[2]);
      std::filesystem::path p(f.back());
      if (p.is_relative()) p = base / p;
      if (f[0] == "main") main[w][a] = p.string();
      else subs[w][std::stoull(f[3])][a] = p.string();
    } catch (const std::logic_error&) {
      throw IoError(path, "line " + std::to_string(lineno) + ": malformed manifest entry");
    }
  }
  std::vector<WindowDescriptor> out;
  for (auto& [w, archives] : main) {
    WindowDescriptor d;
    d.window_id = w;
    for (auto& [a, p] : archives) d.archives.push_back(p);
    for (auto& [r, archs] : subs[w]) {
      for (auto& [a, p] : archs) d.subrange[r].push_back(p);
    }
    out.push_back(std::move(d));
  }
  return out;
}

struct WindowResult {
  std::uint64_t window_id = 0;
  NetworkStats stats;
  std::vector<NetworkStats> subranges;

  friend bool operator==(const WindowResult&, const WindowResult&) = default;
};

/// `window_id=<w> valid_packets=<n> ... max_dest_fanin=<n>` followed by
/// `r<i>.<stat>=<n>` groups for each subrange.
inline std::string format_record(const WindowResult& r) {
  std::ostringstream os;
  os << "window_id=" << r.window_id;
  const auto a = as_array(r.stats);
  for (std::size_t i = 0; i < 9; ++i) os << ' ' << kStatNames[i] << '=' << a[i];
  for (std::size_t k = 0; k < r.subranges.size(); ++k) {
    const auto s = as_array(r.subranges[k]);
    for (std::size_t i = 0; i < 9; ++i) os << " r" << k << '.' << kStatNames[i] << '=' << s[i];
  }
  return os.str();
}

inline WindowResult parse_record(const std::string& line) {
  std::istringstream ss(line);
  std::string tok;
  std::vector<std::pair<std::string, std::uint64_t>> kv;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw Error("stats record: token '" + tok + "' is not key=value");
    try {
      std::size_t used = 0;
      const auto v = std::stoull(tok.substr(eq + 1), &used);
      if (used != tok.size() - eq - 1) throw std::invalid_argument("junk");
      kv.emplace_back(tok.substr(0, eq), v);
    } catch (const std::logic_error&) {
      throw Error("stats record: bad value in '" + tok + "'");
    }
  }
  if (kv.size() < 10 || (kv.size() - 1) % 9 != 0 || kv[0].first != "window_id") {
    throw Error("stats record: expected window_id and groups of nine statistics");
  }
  WindowResult r;
  r.window_id = kv[0].second;
  const std::size_t groups = (kv.size() - 1) / 9;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::string prefix = g == 0 ? "" : "r" + std::to_string(g - 1) + ".";
    std::array<Count, 9> a{};
    for (std::size_t i = 0; i < 9; ++i) {
      const auto& [k, v] = kv[1 + 9 * g + i];
      if (k != prefix + kStatNames[i]) throw Error("stats record: unexpected field '" + k + "'");
      a[i] = v;
    }
    if (g == 0) r.stats = from_array(a);
    else r.subranges.push_back(from_array(a));
  }
  return r;
}

inline void write_stats_file(const std::string& path, std::span<const WindowResult> results) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& r : results) out << format_record(r) << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<WindowResult> read_stats_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open stats file");
  std::vector<WindowResult> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const Error& e) {
      throw IoError(path, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Concatenates per-process results and orders them by window id. A window
/// reported twice is an error.
inline std::vector<WindowResult> merge_results(std::vector<std::vector<WindowResult>> parts) {
  std::vector<WindowResult> all;
  for (auto& p : parts) all.insert(all.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  std::stable_sort(all.begin(), all.end(),
                   [](const WindowResult& a, const WindowResult& b) { return a.window_id < b.window_id; });
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].window_id == all[i - 1].window_id) {
      throw Error("window " + std::to_string(all[i].window_id) + " reported more than once");
    }
  }
  return all;
}

// ---------------------------------------------------------------------------
// Per-process driver

struct WindowTiming {
  std::uint64_t window_id = 0;
  double sum_seconds = 0;
  double analyze_seconds = 0;
  std::uint64_t packets = 0;
};

struct WindowFailure {
  std::uint64_t window_id = 0;
  std::string message;
};

struct ProcessReport {
  std::vector<WindowResult> results;
  std::vector<WindowTiming> timings;
  std::vector<WindowFailure> failures;

  bool ok() const noexcept { return failures.empty(); }
};

struct ProcessOptions {
  unsigned n_threads = 1;
  std::string output_path;  // per-process stats file; skipped when empty
};

/// Sums and analyzes the windows this process owns under `map`, treating
/// the window list as an [N, 1] array distributed along dimension 0. A
/// failing window is recorded and the remaining windows still run.
inline ProcessReport process_filelist(std::span<const WindowDescriptor> filelist, const Dmap& map, Dmap::Pid pid,
                                      const ChallengeConfig& cfg, const ProcessOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  const std::size_t shape[2] = {filelist.size(), 1};
  const auto mine = global_ind(map, shape, 0, pid);

  ProcessReport report;
  for (const auto i : mine) {
    const WindowDescriptor& w = filelist[i];
    try {
      const auto t0 = clock::now();
      const TrafficMatrix a_t = sum_window(w.archives, cfg.log2_dim, opt.n_threads);
      const auto t1 = clock::now();
      WindowResult r{w.window_id, analyze(a_t), subrange_analyze(a_t, cfg.subranges)};
      const auto t2 = clock::now();
      report.timings.push_back({w.window_id, std::chrono::duration<double>(t1 - t0).count(),
                                std::chrono::duration<double>(t2 - t1).count(), r.stats.valid_packets});
      report.results.push_back(std::move(r));
    } catch (const std::exception& e) {
      report.failures.push_back({w.window_id, e.what()});
    }
  }
  if (!opt.output_path.empty()) write_stats_file(opt.output_path, report.results);
  return report;
}

}  // namespace htgc
