// htgc: generate synthetic traffic, build matrix archives, run the
// read/sum/analyze step serially or across local worker processes, and
// report scaling.

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "htgc/bench.hpp"
#include "htgc/config.hpp"
#include "htgc/dmap.hpp"
#include "htgc/packets.hpp"
#include "htgc/pipeline.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace htgc;

namespace {

// Config flags shared by every subcommand that needs a ChallengeConfig.
// A --config file is applied first, then any flag given explicitly.
struct ConfigFlags {
  std::string file;
  std::optional<std::uint64_t> np_packets, nv, nmat_per_file;
  std::optional<int> log2_dim;
  std::optional<std::string> anon_key, subranges;
  bool no_anonymize = false;
  bool desk = false;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value config file");
    app->add_flag("--desk", desk, "start from the desk-scale window shape (2^20/2^12/2^4)");
    app->add_option("--np-packets", np_packets, "packets per window");
    app->add_option("--nv", nv, "packets per matrix");
    app->add_option("--nmat-per-file", nmat_per_file, "matrices per archive");
    app->add_option("--log2-dim", log2_dim, "address-space width in bits");
    app->add_option("--anon-key", anon_key, "32 hex digit anonymization key");
    app->add_flag("--no-anonymize", no_anonymize, "keep addresses as generated");
    app->add_option("--subranges", subranges, "src:dst[;src:dst...] subrange masks");
  }

  ChallengeConfig resolve() const {
    ChallengeConfig cfg = desk ? ChallengeConfig::desk() : ChallengeConfig{};
    if (!file.empty()) cfg = load_config(file, cfg);
    if (np_packets) cfg.np_packets = *np_packets;
    if (nv) cfg.nv = *nv;
    if (nmat_per_file) cfg.nmat_per_file = *nmat_per_file;
    if (log2_dim) cfg.log2_dim = *log2_dim;
    if (anon_key) cfg.anon_key = parse_anon_key(*anon_key);
    if (no_anonymize) cfg.anonymize = false;
    if (subranges) cfg.subranges_text = *subranges;
    finalize(cfg);
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

std::string pid_file(const std::string& stem, std::int64_t pid, const std::string& ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_p%03lld.%s", stem.c_str(), static_cast<long long>(pid), ext.c_str());
  return buf;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::uint64_t seed = 1;
  std::uint64_t windows = 1;
  double invalid_fraction = 0.0;
  double zipf = 1.2;
  std::uint64_t population = std::uint64_t{1} << 16;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, const ChallengeConfig& cfg) {
  fs::create_directories(a.out);
  GeneratorOptions opt;
  opt.seed = a.seed;
  opt.log2_dim = cfg.log2_dim;
  opt.zipf_exponent = a.zipf;
  opt.invalid_fraction = a.invalid_fraction;
  opt.population = a.population;
  PacketGenerator gen(opt);
  PacketWriter writer((fs::path(a.out) / "packets.bin").string());

  std::vector<TruthRecord> truth;
  constexpr std::uint64_t kBatch = 1 << 16;
  for (std::uint64_t w = 0; w < a.windows; ++w) {
    TruthRecord t{w, 0, cfg.np_packets};
    for (std::uint64_t done = 0; done < cfg.np_packets;) {
      const auto n = std::min(kBatch, cfg.np_packets - done);
      const auto batch = gen.take(static_cast<std::size_t>(n));
      for (const auto& p : batch) t.valid_packets += p.valid ? 1 : 0;
      writer.write(batch);
      done += n;
    }
    truth.push_back(t);
  }
  writer.close();
  write_truth_log((fs::path(a.out) / "truth.csv").string(), truth);
  write_text(fs::path(a.out) / "config.txt", to_config_text(cfg));
  std::cout << "generated " << a.windows << " window(s) of " << cfg.np_packets << " packets in " << a.out << "\n";
  return 0;
}

int cmd_build(const std::string& packets, const std::string& out, const ChallengeConfig& cfg) {
  fs::create_directories(out);
  PacketReader reader(packets);
  std::vector<SavedArchive> all;
  std::uint64_t window = 0;
  constexpr std::size_t kBatch = 1 << 16;
  for (;;) {
    WindowWriter writer(cfg, window, out);
    WindowBuilder builder(cfg, [&](TrafficMatrix m) { writer.add(std::move(m)); });
    std::uint64_t seen = 0;
    while (seen < cfg.np_packets) {
      const auto batch = reader.read(static_cast<std::size_t>(std::min<std::uint64_t>(kBatch, cfg.np_packets - seen)));
      if (batch.empty()) break;
      builder.push(batch);
      seen += batch.size();
    }
    if (seen == 0) break;
    builder.finish();
    auto saved = writer.finish();
    std::cout << "window " << window << ": " << seen << " packets, " << builder.valid_packets() << " valid, "
              << builder.matrices_emitted() << " matrices, " << saved.size() << " archives\n";
    all.insert(all.end(), saved.begin(), saved.end());
    ++window;
    if (seen < cfg.np_packets) break;
  }
  const auto manifest = (fs::path(out) / "manifest.txt").string();
  write_manifest(manifest, all);
  write_text(fs::path(out) / "config.txt", to_config_text(cfg));
  std::cout << "wrote " << manifest << "\n";
  return 0;
}

struct RunArgs {
  std::string manifest;
  std::optional<std::int64_t> pid;
  std::optional<std::uint64_t> np;
  std::string dist = "block";
  unsigned threads = 1;
  std::string out = ".";
};

std::int64_t env_or(const char* name, std::optional<std::int64_t> flag, std::int64_t fallback) {
  if (flag) return *flag;
  if (const char* v = std::getenv(name)) return std::stoll(v);
  return fallback;
}

int cmd_run(const RunArgs& a, const ChallengeConfig& cfg) {
  const auto np = static_cast<std::uint64_t>(env_or("HT_NP", a.np ? std::optional<std::int64_t>(*a.np) : std::nullopt, 1));
  const auto pid = env_or("HT_PID", a.pid, 0);
  if (np == 0 || pid < 0 || static_cast<std::uint64_t>(pid) >= np) {
    std::cerr << "run: need 0 <= pid < np (pid=" << pid << ", np=" << np << ")\n";
    return 2;
  }
  fs::create_directories(a.out);
  const auto windows = read_manifest(a.manifest);
  const Dmap map = Dmap::column(np, parse_dist(a.dist));

  ProcessOptions opt;
  opt.n_threads = a.threads;
  opt.output_path = (fs::path(a.out) / pid_file("stats", pid, "txt")).string();
  const auto report = process_filelist(windows, map, pid, cfg, opt);

  std::vector<BenchRecord> bench;
  for (const auto& t : report.timings) {
    bench.push_back({Phase::Sum, t.window_id, pid, np, a.threads, t.sum_seconds, t.packets});
    bench.push_back({Phase::Analyze, t.window_id, pid, np, a.threads, t.analyze_seconds, t.packets});
  }
  write_bench_csv((fs::path(a.out) / pid_file("bench", pid, "csv")).string(), bench);
  for (const auto& f : report.failures) {
    std::cerr << "pid " << pid << ": window " << f.window_id << " failed: " << f.message << "\n";
  }
  return report.ok() ? 0 : 1;
}

struct LaunchArgs {
  std::string manifest;
  std::uint64_t np = 1;
  unsigned threads = 1;
  std::string dist = "block";
  std::string out = ".";
  bool sweep = false;
  std::vector<unsigned> sweep_threads{1, 2, 4, 8, 16};
  std::vector<std::uint64_t> sweep_procs{1, 2, 4, 8};
};

std::string self_exe() { return fs::read_symlink("/proc/self/exe").string(); }

// Runs `np` workers of this executable and merges their outputs into
// out/stats.txt and out/bench.csv. Returns the number of failed workers.
int launch_once(const std::string& manifest, const std::string& config_path, std::uint64_t np, unsigned threads,
                const std::string& dist, const fs::path& out, double* wall_seconds = nullptr) {
  fs::create_directories(out);
  const auto exe = self_exe();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<pid_t> children;
  for (std::uint64_t p = 0; p < np; ++p) {
    std::vector<std::string> args = {exe,        "run",       "--manifest", manifest,
                                     "--config", config_path, "--pid",      std::to_string(p),
                                     "--np",     std::to_string(np), "--dist", dist,
                                     "--threads", std::to_string(threads), "--out", out.string()};
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    argv.push_back(nullptr);
    pid_t child = 0;
    if (posix_spawn(&child, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
      throw IoError(exe, "posix_spawn failed");
    }
    children.push_back(child);
  }
  int failed = 0;
  for (auto c : children) {
    int status = 0;
    waitpid(c, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failed;
  }
  if (wall_seconds) *wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<std::vector<WindowResult>> parts;
  std::vector<BenchRecord> bench;
  for (std::uint64_t p = 0; p < np; ++p) {
    const auto stats = out / pid_file("stats", static_cast<std::int64_t>(p), "txt");
    const auto csv = out / pid_file("bench", static_cast<std::int64_t>(p), "csv");
    if (fs::exists(stats)) parts.push_back(read_stats_file(stats.string()));
    if (fs::exists(csv)) {
      auto rows = read_bench_csv(csv.string());
      bench.insert(bench.end(), rows.begin(), rows.end());
    }
  }
  write_stats_file((out / "stats.txt").string(), merge_results(std::move(parts)));
  write_bench_csv((out / "bench.csv").string(), bench);
  return failed;
}

int cmd_launch(const LaunchArgs& a, const ChallengeConfig& cfg) {
  fs::create_directories(a.out);
  const auto config_path = (fs::path(a.out) / "run_config.txt").string();
  write_text(config_path, to_config_text(cfg));
  const auto manifest = fs::absolute(a.manifest).string();

  if (!a.sweep) {
    double wall = 0;
    const int failed = launch_once(manifest, config_path, a.np, a.threads, a.dist, a.out, &wall);
    std::cout << "launch: " << a.np << " process(es) x " << a.threads << " thread(s), " << wall << " s wall";
    if (failed) std::cout << ", " << failed << " worker(s) failed";
    std::cout << "\n";
    return failed ? 1 : 0;
  }

  // thread sweep at one process, then process sweep at a fixed thread count
  std::vector<std::pair<std::uint64_t, unsigned>> configs;
  for (auto t : a.sweep_threads) configs.emplace_back(1, t);
  for (auto p : a.sweep_procs) {
    if (p != 1 || a.threads != 1) configs.emplace_back(p, a.threads);
  }
  std::vector<BenchRecord> all;
  std::optional<std::string> reference;
  int failed = 0;
  for (const auto& [np, threads] : configs) {
    const auto dir = fs::path(a.out) / ("np" + std::to_string(np) + "_t" + std::to_string(threads));
    double wall = 0;
    failed += launch_once(manifest, config_path, np, threads, a.dist, dir, &wall);
    std::cout << "sweep: " << np << " process(es) x " << threads << " thread(s), " << wall << " s wall\n";
    auto rows = read_bench_csv((dir / "bench.csv").string());
    all.insert(all.end(), rows.begin(), rows.end());
    std::ifstream in(dir / "stats.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!reference) {
      reference = text;
      write_text(fs::path(a.out) / "stats.txt", text);
    } else if (text != *reference) {
      std::cerr << "sweep: merged stats for np=" << np << " threads=" << threads << " differ from the first run\n";
      ++failed;
    }
  }
  write_bench_csv((fs::path(a.out) / "bench.csv").string(), all);
  return failed ? 1 : 0;
}

int cmd_merge(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<std::vector<WindowResult>> parts;
  for (const auto& in : inputs) parts.push_back(read_stats_file(in));
  const auto merged = merge_results(std::move(parts));
  if (out.empty() || out == "-") {
    for (const auto& r : merged) std::cout << format_record(r) << "\n";
  } else {
    write_stats_file(out, merged);
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& csvs, const std::string& out) {
  std::vector<BenchRecord> all;
  for (const auto& c : csvs) {
    auto rows = read_bench_csv(c);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  const auto rows = scaling_table(all);
  std::cout << format_scaling_table(rows) << phase_comparison(rows);
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "scaling.csv", format_scaling_csv(rows));
    write_text(fs::path(out) / "plot_scaling.py", plot_script(rows));
    std::cout << "wrote " << (fs::path(out) / "scaling.csv").string() << " and "
              << (fs::path(out) / "plot_scaling.py").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anonymized traffic-matrix pipeline and benchmark harness"};
  app.require_subcommand(1);

  ConfigFlags gen_cfg, build_cfg, run_cfg, launch_cfg;

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic packet stream and its truth log");
  gen_cfg.attach(generate);
  generate->add_option("--seed", gen.seed, "random seed");
  generate->add_option("--windows", gen.windows, "number of windows");
  generate->add_option("--invalid-fraction", gen.invalid_fraction, "probability a packet is invalid")
      ->check(CLI::Range(0.0, 1.0));
  generate->add_option("--zipf", gen.zipf, "Zipf popularity exponent");
  generate->add_option("--population", gen.population, "distinct addresses per side before capping");
  generate->add_option("--out", gen.out, "output directory")->required();

  std::string build_packets, build_out;
  auto* build = app.add_subcommand("build", "anonymize, build and archive traffic matrices");
  build_cfg.attach(build);
  build->add_option("--packets", build_packets, "packet file")->required()->check(CLI::ExistingFile);
  build->add_option("--out", build_out, "archive directory")->required();

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "sum and analyze the windows owned by one process");
  run_cfg.attach(run_cmd);
  run_cmd->add_option("--manifest", run.manifest, "manifest from build")->required();
  run_cmd->add_option("--pid", run.pid, "this process id (default $HT_PID or 0)");
  run_cmd->add_option("--np", run.np, "number of processes (default $HT_NP or 1)");
  run_cmd->add_option("--dist", run.dist, "block | cyclic | blockcyclic:<b>");
  run_cmd->add_option("--threads", run.threads, "summation threads")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", run.out, "output directory");

  LaunchArgs launch;
  auto* launch_cmd = app.add_subcommand("launch", "run local worker processes and merge their outputs");
  launch_cfg.attach(launch_cmd);
  launch_cmd->add_option("--manifest", launch.manifest, "manifest from build")->required();
  launch_cmd->add_option("--np", launch.np, "number of worker processes")->check(CLI::PositiveNumber);
  launch_cmd->add_option("--threads", launch.threads, "summation threads per worker")->check(CLI::PositiveNumber);
  launch_cmd->add_option("--dist", launch.dist, "block | cyclic | blockcyclic:<b>");
  launch_cmd->add_option("--out", launch.out, "output directory");
  launch_cmd->add_flag("--sweep", launch.sweep, "run the thread sweep then the process sweep");
  launch_cmd->add_option("--sweep-threads", launch.sweep_threads, "thread counts for the 1-process sweep");
  launch_cmd->add_option("--sweep-procs", launch.sweep_procs, "process counts for the process sweep");

  std::vector<std::string> merge_inputs;
  std::string merge_out;
  auto* merge = app.add_subcommand("merge", "merge per-process stats files ordered by window");
  merge->add_option("inputs", merge_inputs, "stats files")->required();
  merge->add_option("--out", merge_out, "merged stats file (default stdout)");

  std::vector<std::string> report_csvs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "scaling table, CSV and plot script from bench CSVs");
  report->add_option("csvs", report_csvs, "bench CSV files")->required();
  report->add_option("--out", report_out, "directory for scaling.csv and plot_scaling.py");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(gen, gen_cfg.resolve());
    if (*build) return cmd_build(build_packets, build_out, build_cfg.resolve());
    if (*run_cmd) return cmd_run(run, run_cfg.resolve());
    if (*launch_cmd) return cmd_launch(launch, launch_cfg.resolve());
    if (*merge) return cmd_merge(merge_inputs, merge_out);
    if (*report) return cmd_report(report_csvs, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
