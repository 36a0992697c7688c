#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "dense_oracle.hpp"
#include "htgc/pipeline.hpp"

using namespace htgc;
using namespace htgc::testing;

namespace {

ChallengeConfig tiny_config() {
  ChallengeConfig cfg;
  cfg.np_packets = 1 << 12;
  cfg.nv = 1 << 6;
  cfg.nmat_per_file = 1 << 2;
  cfg.log2_dim = 10;
  return cfg;
}

std::vector<PacketRecord> packets_for(const ChallengeConfig& cfg, std::uint64_t seed, std::size_t n,
                                      double invalid = 0.2) {
  GeneratorOptions opt;
  opt.seed = seed;
  opt.log2_dim = cfg.log2_dim;
  opt.invalid_fraction = invalid;
  opt.population = 300;
  return PacketGenerator(opt).take(n);
}

std::vector<std::string> main_paths(const std::vector<SavedArchive>& saved) {
  std::vector<std::string> out;
  for (const auto& s : saved)
    if (!s.range_id) out.push_back(s.path);
  return out;
}

}  // namespace

TEST(Analyze, Empty) {
  EXPECT_EQ(analyze(TrafficMatrix(8)), NetworkStats{});
  EXPECT_EQ(stats_violation(NetworkStats{}), "");
}

TEST(Analyze, SmallForcedExample) {
  const auto m = TrafficMatrix::from_entries(2, {{1, 0, 2}, {1, 1, 1}, {3, 0, 3}});
  const NetworkStats expected{6, 3, 3, 2, 3, 2, 2, 5, 2};
  EXPECT_EQ(analyze(m), expected);
  EXPECT_EQ(dense_stats(to_dense(m)), expected);
}

TEST(Analyze, RandomMatchesDenseOracle) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 8);
    const auto pairs = random_pairs(rng, k, rng() % 500);
    const auto s = analyze(matrix_from_pairs(pairs, k));
    EXPECT_EQ(s, dense_stats(dense_from_pairs(pairs, k)));
    EXPECT_EQ(stats_violation(s), "");
  }
}

TEST(StatsViolation, DetectsEachInequality) {
  NetworkStats s{6, 3, 3, 2, 3, 2, 2, 5, 2};
  EXPECT_EQ(stats_violation(s), "");
  auto t = s;
  t.unique_links = 7;
  EXPECT_NE(stats_violation(t), "");
  t = s;
  t.max_source_fanout = 3;
  EXPECT_NE(stats_violation(t), "");
  t = s;
  t.max_dest_fanin = 3;
  EXPECT_NE(stats_violation(t), "");
  t = NetworkStats{};
  t.unique_sources = 1;
  EXPECT_NE(stats_violation(t), "");
}

TEST(SubrangeAnalyze, FullRangeIsIdentity) {
  std::mt19937_64 rng(2);
  const auto m = matrix_from_pairs(random_pairs(rng, 8, 400), 8);
  const std::vector<Subrange> full = {{AddressSet::all(8), AddressSet::all(8)}};
  EXPECT_EQ(subrange_analyze(m, full), std::vector<NetworkStats>{analyze(m)});
}

TEST(SubrangeAnalyze, DisjointSourcePartitionConserves) {
  std::mt19937_64 rng(8);
  const auto m = matrix_from_pairs(random_pairs(rng, 8, 1000), 8);
  const std::vector<Subrange> parts = {{AddressSet::range(0, 63), AddressSet::all(8)},
                                       {AddressSet::range(64, 200), AddressSet::all(8)},
                                       {AddressSet::range(201, 255), AddressSet::all(8)}};
  Count total = 0;
  for (const auto& s : subrange_analyze(m, parts)) total += s.valid_packets;
  EXPECT_EQ(total, analyze(m).valid_packets);
}

TEST(SubrangeAnalyze, RandomRangesMatchDense) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pairs = random_pairs(rng, 6, rng() % 400);
    const auto m = matrix_from_pairs(pairs, 6);
    std::vector<Subrange> subs;
    for (int i = 0; i < 3; ++i) subs.push_back({random_address_set(rng, 6), random_address_set(rng, 6)});
    const auto got = subrange_analyze(m, subs);
    const auto d = dense_from_pairs(pairs, 6);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      EXPECT_EQ(got[i], dense_stats(dense_triple_product(d, subs[i].src, subs[i].dst)));
    }
  }
}

TEST(BuildWindow, AllInvalid) {
  auto cfg = tiny_config();
  auto packets = packets_for(cfg, 1, cfg.np_packets, 1.0);
  const auto ms = build_window(packets, cfg);
  EXPECT_EQ(ms.size(), cfg.matrices_per_window());
  Count total = 0;
  for (const auto& m : ms) total += total_count(m);
  EXPECT_EQ(total, 0u);
}

TEST(BuildWindow, ChunksByNv) {
  auto cfg = tiny_config();
  cfg.nv = 4;
  const auto packets = packets_for(cfg, 2, 8, 0.0);
  const auto ms = build_window(packets, cfg);
  ASSERT_EQ(ms.size(), 2u);
  EXPECT_EQ(total_count(ms[0]), 4u);
  EXPECT_EQ(total_count(ms[1]), 4u);
}

TEST(BuildWindow, InvalidPacketsStillAdvanceBoundaries) {
  auto cfg = tiny_config();
  cfg.nv = 4;
  cfg.anonymize = false;
  std::vector<PacketRecord> ps = {{1, 1, true}, {2, 2, false}, {3, 3, false}, {4, 4, true},
                                  {5, 5, true}, {6, 6, true}, {7, 7, true},   {8, 8, false},
                                  {9, 9, true}};
  const auto ms = build_window(ps, cfg);
  ASSERT_EQ(ms.size(), 3u);
  EXPECT_EQ(total_count(ms[0]), 2u);
  EXPECT_EQ(total_count(ms[1]), 3u);
  EXPECT_EQ(total_count(ms[2]), 1u);
}

TEST(BuildWindow, MatchesWholeWindowTally) {
  const auto cfg = tiny_config();
  const auto packets = packets_for(cfg, 3, cfg.np_packets);
  const Anonymizer anon(cfg.anon_key, cfg.log2_dim);
  std::map<std::pair<Index, Index>, Count> tally;
  for (const auto& p : packets)
    if (p.valid) ++tally[{anon.anonymize(p.src), anon.anonymize(p.dst)}];

  std::map<std::pair<Index, Index>, Count> got;
  for (const auto& m : build_window(packets, cfg))
    for (const auto& e : m.entries()) got[{e.row, e.col}] += e.count;
  EXPECT_EQ(got, tally);
}

TEST(BuildWindow, RejectsAddressesOutsideSpace) {
  auto cfg = tiny_config();
  std::vector<PacketRecord> ps = {{1u << cfg.log2_dim, 0, true}};
  EXPECT_THROW(build_window(ps, cfg), MatrixError);
}

TEST(SaveWindow, DeskShapeGivesSixteenArchives) {
  TempDir dir;
  auto cfg = ChallengeConfig::desk();
  cfg.log2_dim = 8;
  std::vector<TrafficMatrix> ms(cfg.matrices_per_window(), TrafficMatrix(8));
  const auto saved = save_window(ms, cfg, 0, dir.path());
  EXPECT_EQ(saved.size(), 16u);
  EXPECT_TRUE(std::filesystem::exists(dir / "w0000_a0015.tar"));
}

TEST(SaveWindow, SubrangeArchives) {
  TempDir dir;
  auto cfg = ChallengeConfig::desk();
  cfg.log2_dim = 8;
  cfg.subranges_text = "0-127:*;128-255:*";
  finalize(cfg);
  std::vector<TrafficMatrix> ms(cfg.matrices_per_window(), TrafficMatrix(8));
  const auto saved = save_window(ms, cfg, 2, dir.path());
  std::size_t main = 0, sub = 0;
  for (const auto& s : saved) (s.range_id ? sub : main)++;
  EXPECT_EQ(main, 16u);
  EXPECT_EQ(sub, 32u);
  EXPECT_TRUE(std::filesystem::exists(dir / "w0002_a0007_r01.tar"));
}

TEST(SaveWindow, OnDiskSumEqualsInMemorySum) {
  TempDir dir;
  auto cfg = tiny_config();
  cfg.subranges_text = "0-500:*";
  finalize(cfg);
  const auto ms = build_window(packets_for(cfg, 4, cfg.np_packets), cfg);
  TrafficMatrix mem(cfg.log2_dim);
  for (const auto& m : ms) add_in_place(mem, m);

  const auto saved = save_window(ms, cfg, 0, dir.path());
  EXPECT_EQ(sum_window(main_paths(saved), cfg.log2_dim), mem);

  std::vector<std::string> sub;
  for (const auto& s : saved)
    if (s.range_id) sub.push_back(s.path);
  EXPECT_EQ(sum_window(sub, cfg.log2_dim), diag_mask(mem, cfg.subranges[0].src, cfg.subranges[0].dst));
}

TEST(SumWindow, OneArchiveOfOneEmptyMatrix) {
  TempDir dir;
  write_archive(std::vector<TrafficMatrix>{TrafficMatrix(8)}, 0, 0, 4, dir / "a.tar");
  const std::vector<std::string> paths = {dir / "a.tar"};
  EXPECT_TRUE(sum_window(paths, 8).empty());
  EXPECT_TRUE(sum_window({}, 8).empty());
}

TEST(SumWindow, TwoArchivesTwoMatricesEach) {
  TempDir dir;
  using E = std::vector<Entry>;
  const auto a = TrafficMatrix::from_entries(2, E{{0, 0, 1}, {1, 2, 3}});
  const auto b = TrafficMatrix::from_entries(2, E{{0, 0, 2}});
  const auto c = TrafficMatrix::from_entries(2, E{{3, 3, 7}});
  const auto d = TrafficMatrix::from_entries(2, E{{1, 2, 1}, {3, 3, 1}});
  write_archive(std::vector{a, b}, 0, 0, 2, dir / "w0000_a0000.tar");
  write_archive(std::vector{c, d}, 0, 1, 2, dir / "w0000_a0001.tar");
  const std::vector<std::string> paths = {dir / "w0000_a0000.tar", dir / "w0000_a0001.tar"};
  const auto expected = TrafficMatrix::from_entries(2, E{{0, 0, 3}, {1, 2, 4}, {3, 3, 8}});
  for (unsigned t : {1u, 2u, 8u}) EXPECT_EQ(sum_window(paths, 2, t), expected) << t << " threads";
}

TEST(SumWindow, ThreadCountDoesNotChangeResult) {
  TempDir dir;
  const auto cfg = tiny_config();
  const auto saved = save_window(build_window(packets_for(cfg, 5, cfg.np_packets), cfg), cfg, 0, dir.path());
  const auto paths = main_paths(saved);
  const auto serial = sum_window(paths, cfg.log2_dim, 1);
  for (unsigned t : {2u, 3u, 4u, 16u}) EXPECT_EQ(sum_window(paths, cfg.log2_dim, t), serial);
}

TEST(SumWindow, ErrorsNameThePath) {
  TempDir dir;
  write_archive(std::vector<TrafficMatrix>{TrafficMatrix(3)}, 0, 0, 4, dir / "a.tar");
  const std::vector<std::string> missing = {dir / "a.tar", dir / "nope.tar"};
  try {
    sum_window(missing, 3, 2);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), dir / "nope.tar");
  }
  const std::vector<std::string> wrong_dim = {dir / "a.tar"};
  EXPECT_THROW(sum_window(wrong_dim, 4), MatrixError);
}

TEST(Records, FormatAndParse) {
  WindowResult r{7, {6, 3, 3, 2, 3, 2, 2, 5, 2}, {{1, 1, 1, 1, 1, 1, 1, 1, 1}}};
  const auto line = format_record(r);
  EXPECT_EQ(line.rfind("window_id=7 valid_packets=6 unique_links=3 max_link_packets=3 unique_sources=2 ", 0), 0u);
  EXPECT_NE(line.find(" r0.max_dest_fanin=1"), std::string::npos);
  EXPECT_EQ(parse_record(line), r);
  EXPECT_THROW(parse_record("window_id=1 valid_packets=2"), Error);
  EXPECT_THROW(parse_record("window=1"), Error);
}

TEST(Records, MergeOrdersAndRejectsDuplicates) {
  WindowResult a{2, {}, {}}, b{0, {}, {}}, c{1, {}, {}};
  const auto merged = merge_results({{a}, {b, c}});
  ASSERT_EQ(merged.size(), 3u);
  EXPECT_EQ(merged[0].window_id, 0u);
  EXPECT_EQ(merged[2].window_id, 2u);
  EXPECT_THROW(merge_results({{a}, {a}}), Error);
}

TEST(Manifest, RoundTripRelativePaths) {
  TempDir dir;
  const auto cfg = [] {
    auto c = tiny_config();
    c.subranges_text = "0-9:*";
    finalize(c);
    return c;
  }();
  std::vector<SavedArchive> all;
  for (std::uint64_t w = 0; w < 2; ++w) {
    std::vector<TrafficMatrix> ms(6, TrafficMatrix(cfg.log2_dim));
    auto s = save_window(ms, cfg, w, dir.path());
    all.insert(all.end(), s.begin(), s.end());
  }
  write_manifest(dir / "manifest.txt", all);
  const auto windows = read_manifest(dir / "manifest.txt");
  ASSERT_EQ(windows.size(), 2u);
  EXPECT_EQ(windows[1].window_id, 1u);
  ASSERT_EQ(windows[1].archives.size(), 2u);
  EXPECT_EQ(windows[1].archives[1], dir / "w0001_a0001.tar");
  ASSERT_EQ(windows[1].subrange.at(0).size(), 2u);
}

TEST(ProcessFilelist, BlockOwnershipAndOutputFiles) {
  TempDir dir;
  const auto cfg = tiny_config();
  std::vector<WindowDescriptor> windows;
  for (std::uint64_t w = 0; w < 4; ++w) {
    const auto saved = save_window(build_window(packets_for(cfg, 10 + w, cfg.np_packets), cfg), cfg, w, dir.path());
    windows.push_back({w, main_paths(saved), {}});
  }
  const auto map = Dmap::column(2);
  const auto r0 = process_filelist(windows, map, 0, cfg, {1, dir / "p0.txt"});
  const auto r1 = process_filelist(windows, map, 1, cfg, {2, dir / "p1.txt"});
  ASSERT_TRUE(r0.ok());
  ASSERT_TRUE(r1.ok());
  ASSERT_EQ(r0.results.size(), 2u);
  EXPECT_EQ(r0.results[0].window_id, 0u);
  EXPECT_EQ(r0.results[1].window_id, 1u);
  EXPECT_EQ(r1.results[0].window_id, 2u);
  EXPECT_EQ(r1.results[1].window_id, 3u);
  EXPECT_EQ(read_stats_file(dir / "p1.txt"), r1.results);

  const auto serial = process_filelist(windows, Dmap::column(1), 0, cfg);
  EXPECT_EQ(merge_results({r1.results, r0.results}), serial.results);
}

TEST(ProcessFilelist, OneWindowFourProcs) {
  TempDir dir;
  const auto cfg = tiny_config();
  const auto saved = save_window(build_window(packets_for(cfg, 1, cfg.np_packets), cfg), cfg, 0, dir.path());
  const std::vector<WindowDescriptor> windows = {{0, main_paths(saved), {}}};
  const auto map = Dmap::column(4);
  std::size_t producing = 0;
  for (Dmap::Pid p = 0; p < 4; ++p) {
    const auto out = dir / ("p" + std::to_string(p) + ".txt");
    const auto r = process_filelist(windows, map, p, cfg, {1, out});
    EXPECT_TRUE(std::filesystem::exists(out));
    producing += r.results.empty() ? 0 : 1;
    EXPECT_EQ(read_stats_file(out).size(), r.results.size());
  }
  EXPECT_EQ(producing, 1u);
}

TEST(ProcessFilelist, FailingWindowDoesNotStopOthers) {
  TempDir dir;
  const auto cfg = tiny_config();
  const auto saved = save_window(build_window(packets_for(cfg, 1, cfg.np_packets), cfg), cfg, 1, dir.path());
  const std::vector<WindowDescriptor> windows = {{0, {dir / "missing.tar"}, {}}, {1, main_paths(saved), {}}};
  const auto r = process_filelist(windows, Dmap::column(1), 0, cfg);
  EXPECT_FALSE(r.ok());
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].window_id, 0u);
  EXPECT_NE(r.failures[0].message.find("missing.tar"), std::string::npos);
  ASSERT_EQ(r.results.size(), 1u);
  EXPECT_EQ(r.results[0].window_id, 1u);
}

TEST(Invariance, AnonymizationDoesNotChangeStatistics) {
  auto cfg = tiny_config();
  const auto packets = packets_for(cfg, 6, cfg.np_packets);
  auto sum_all = [](const std::vector<TrafficMatrix>& ms, int k) {
    TrafficMatrix acc(k);
    for (const auto& m : ms) add_in_place(acc, m);
    return acc;
  };
  const auto with = analyze(sum_all(build_window(packets, cfg), cfg.log2_dim));
  cfg.anonymize = false;
  const auto without = analyze(sum_all(build_window(packets, cfg), cfg.log2_dim));
  EXPECT_EQ(with, without);
}
