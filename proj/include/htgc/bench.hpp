#pragma once

// Benchmark records and scaling reports.
//
// A run is identified by (n_procs, n_threads). Its elapsed time is the
// slowest worker's summed phase time, since workers run concurrently and
// never wait on each other. Speedup and efficiency are relative to the
// 1-process, 1-thread run when one is present, else to the run with the
// fewest cores.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "htgc/error.hpp"

namespace htgc {

inline constexpr const char* kBenchCsvHeader = "phase,window_id,pid,n_procs,n_threads,wall_seconds,packets_processed";

enum class Phase { Sum, Analyze, Read };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Sum: return "sum";
    case Phase::Analyze: return "analyze";
    case Phase::Read: return "read";
  }
  return "?";
}

struct BenchRecord {
  Phase phase = Phase::Sum;
  std::uint64_t window_id = 0;
  std::int64_t pid = 0;
  std::uint64_t n_procs = 1;
  std::uint64_t n_threads = 1;
  double wall_seconds = 0;
  std::uint64_t packets_processed = 0;
};

// Durations below the clock resolution are recorded as this floor so every
// record has a positive duration.
inline constexpr double kMinWallSeconds = 1e-9;

inline std::string format_bench_row(const BenchRecord& r) {
  std::ostringstream os;
  os.precision(9);
  os << std::fixed << to_string(r.phase) << ',' << r.window_id << ',' << r.pid << ',' << r.n_procs << ','
     << r.n_threads << ',' << std::max(r.wall_seconds, kMinWallSeconds) << ',' << r.packets_processed;
  return os.str();
}

class BenchParseError : public Error {
 public:
  BenchParseError(const std::string& source, int line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

inline std::vector<BenchRecord> parse_bench_csv(std::istream& in, const std::string& source = "<csv>") {
  std::vector<BenchRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != kBenchCsvHeader) throw BenchParseError(source, lineno, "unexpected header");
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw BenchParseError(source, lineno, "expected 7 fields");
    BenchRecord r;
    if (f[0] == "sum") r.phase = Phase::Sum;
    else if (f[0] == "analyze") r.phase = Phase::Analyze;
    else if (f[0] == "read") r.phase = Phase::Read;
    else throw BenchParseError(source, lineno, "unknown phase '" + f[0] + "'");
    try {
      std::size_t used = 0;
      auto whole = [&](const std::string& s) {
        if (used != s.size()) throw std::invalid_argument(s);
      };
      r.window_id = std::stoull(f[1], &used); whole(f[1]);
      r.pid = std::stoll(f[2], &used); whole(f[2]);
      r.n_procs = std::stoull(f[3], &used); whole(f[3]);
      r.n_threads = std::stoull(f[4], &used); whole(f[4]);
      r.wall_seconds = std::stod(f[5], &used); whole(f[5]);
      r.packets_processed = std::stoull(f[6], &used); whole(f[6]);
    } catch (const std::logic_error&) {
      throw BenchParseError(source, lineno, "malformed numeric field");
    }
    if (!(r.wall_seconds > 0)) throw BenchParseError(source, lineno, "wall_seconds must be positive");
    out.push_back(r);
  }
  if (lineno == 0) throw BenchParseError(source, 1, "missing header");
  return out;
}

inline std::vector<BenchRecord> read_bench_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open bench csv");
  return parse_bench_csv(in, path);
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRecord>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << kBenchCsvHeader << '\n';
  for (const auto& r : rows) out << format_bench_row(r) << '\n';
  if (!out) throw IoError(path, "write failed");
}

struct ScalingRow {
  std::uint64_t n_procs = 1;
  std::uint64_t n_threads = 1;
  std::uint64_t windows = 0;
  std::uint64_t packets = 0;
  double elapsed_seconds = 0;
  double mean_sum_seconds = 0;
  double mean_analyze_seconds = 0;
  double throughput = 0;  // packets / second
  double speedup = 0;
  double efficiency = 0;
};

inline std::vector<ScalingRow> scaling_table(const std::vector<BenchRecord>& records) {
  struct Acc {
    std::map<std::int64_t, double> per_pid;
    double sum_total = 0, analyze_total = 0;
    std::uint64_t sum_n = 0, analyze_n = 0, packets = 0;
  };
  std::map<std::pair<std::uint64_t, std::uint64_t>, Acc> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.n_procs, r.n_threads}];
    g.per_pid[r.pid] += r.wall_seconds;
    if (r.phase == Phase::Sum) {
      g.sum_total += r.wall_seconds;
      ++g.sum_n;
      g.packets += r.packets_processed;
    } else if (r.phase == Phase::Analyze) {
      g.analyze_total += r.wall_seconds;
      ++g.analyze_n;
    }
  }

  std::vector<ScalingRow> rows;
  for (const auto& [key, g] : groups) {
    ScalingRow row;
    row.n_procs = key.first;
    row.n_threads = key.second;
    row.windows = g.sum_n;
    row.packets = g.packets;
    for (const auto& [pid, t] : g.per_pid) row.elapsed_seconds = std::max(row.elapsed_seconds, t);
    row.mean_sum_seconds = g.sum_n ? g.sum_total / static_cast<double>(g.sum_n) : 0;
    row.mean_analyze_seconds = g.analyze_n ? g.analyze_total / static_cast<double>(g.analyze_n) : 0;
    row.throughput = row.elapsed_seconds > 0 ? static_cast<double>(row.packets) / row.elapsed_seconds : 0;
    rows.push_back(row);
  }
  if (rows.empty()) return rows;

  auto base = std::min_element(rows.begin(), rows.end(), [](const ScalingRow& a, const ScalingRow& b) {
    return a.n_procs * a.n_threads < b.n_procs * b.n_threads;
  });
  const double base_cores = static_cast<double>(base->n_procs * base->n_threads);
  const double base_elapsed = base->elapsed_seconds;
  for (auto& row : rows) {
    row.speedup = row.elapsed_seconds > 0 ? base_elapsed / row.elapsed_seconds : 0;
    row.efficiency = row.speedup * base_cores / static_cast<double>(row.n_procs * row.n_threads);
  }
  return rows;
}

inline std::string format_scaling_table(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%7s %9s %8s %12s %11s %13s %13s %14s %8s %6s\n", "n_procs", "n_threads",
                "windows", "packets", "elapsed_s", "mean_sum_s", "mean_anlz_s", "packets_per_s", "speedup", "eff");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%7llu %9llu %8llu %12llu %11.4f %13.6f %13.6f %14.1f %8.3f %6.3f\n",
                  static_cast<unsigned long long>(r.n_procs), static_cast<unsigned long long>(r.n_threads),
                  static_cast<unsigned long long>(r.windows), static_cast<unsigned long long>(r.packets),
                  r.elapsed_seconds, r.mean_sum_seconds, r.mean_analyze_seconds, r.throughput, r.speedup,
                  r.efficiency);
    os << buf;
  }
  return os.str();
}

inline std::string format_scaling_csv(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "n_procs,n_threads,windows,packets,elapsed_seconds,mean_sum_seconds,mean_analyze_seconds,"
        "packets_per_second,speedup,efficiency\n";
  for (const auto& r : rows) {
    os << r.n_procs << ',' << r.n_threads << ',' << r.windows << ',' << r.packets << ',' << r.elapsed_seconds << ','
       << r.mean_sum_seconds << ',' << r.mean_analyze_seconds << ',' << r.throughput << ',' << r.speedup << ','
       << r.efficiency << '\n';
  }
  return os.str();
}

/// "sum > analyze" comparison line per row.
inline std::string phase_comparison(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  std::size_t holds = 0;
  for (const auto& r : rows) {
    if (r.mean_sum_seconds > r.mean_analyze_seconds) ++holds;
  }
  os << "summation slower than analysis in " << holds << " of " << rows.size() << " configurations\n";
  return os.str();
}

/// Self-contained matplotlib script plotting throughput and per-phase means
/// against cores.
inline std::string plot_script(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "#!/usr/bin/env python3\n"
        "import matplotlib\n"
        "matplotlib.use('Agg')\n"
        "import matplotlib.pyplot as plt\n\n"
        "# n_procs, n_threads, packets_per_second, mean_sum_seconds, mean_analyze_seconds\n"
        "rows = [\n";
  for (const auto& r : rows) {
    os << "    (" << r.n_procs << ", " << r.n_threads << ", " << r.throughput << ", " << r.mean_sum_seconds << ", "
       << r.mean_analyze_seconds << "),\n";
  }
  os << "]\n\n"
        "fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))\n"
        "for label, sel in (('threads (1 proc)', lambda r: r[0] == 1), ('procs', lambda r: r[0] > 1 or r[1] == 1)):\n"
        "    pts = sorted((r[0] * r[1], r) for r in rows if sel(r))\n"
        "    if not pts:\n"
        "        continue\n"
        "    cores = [c for c, _ in pts]\n"
        "    ax0.loglog(cores, [r[2] for _, r in pts], 'o-', label=label)\n"
        "    ax1.loglog(cores, [r[3] for _, r in pts], 'o-', label=label + ' sum')\n"
        "    ax1.loglog(cores, [r[4] for _, r in pts], 's--', label=label + ' analyze')\n"
        "ax0.set_xlabel('cores (procs x threads)')\n"
        "ax0.set_ylabel('packets / second')\n"
        "ax0.legend()\n"
        "ax1.set_xlabel('cores (procs x threads)')\n"
        "ax1.set_ylabel('mean seconds per window')\n"
        "ax1.legend()\n"
        "fig.tight_layout()\n"
        "fig.savefig('scaling.png', dpi=150)\n";
  return os.str();
}

}  // namespace htgc
