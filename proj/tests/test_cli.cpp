#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "qsm/error.hpp"

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qsm_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qsm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return qsm::cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t data_rows(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')) - 1;
}

TEST(Cli, MarketRowCountsAndDeterminism) {
  const auto a = scratch("market_a"), b = scratch("market_b");
  const std::vector<std::string> flags = {"market", "--mode", "classical", "--runs", "2",
                                          "--rounds", "10", "--seed", "7", "--threads", "2"};
  auto fa = flags, fb = flags;
  fa.insert(fa.end(), {"--out", a.string()});
  fb.insert(fb.end(), {"--out", b.string()});
  ASSERT_EQ(cli(fa), 0);
  ASSERT_EQ(cli(fb), 0);
  EXPECT_EQ(data_rows(a / "prices.csv"), 20u);
  EXPECT_EQ(data_rows(a / "traders.csv"), 160u);
  EXPECT_EQ(data_rows(a / "summary.csv"), 10u);
  EXPECT_TRUE(fs::exists(a / "manifest.json"));
  for (const char* f : {"prices.csv", "traders.csv", "summary.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_EQ(slurp(a / "prices.csv").substr(0, 29), "run_id,round,avg_price,volume");
}

TEST(Cli, ThreadCountDoesNotChangeOutput) {
  const auto a = scratch("threads_a"), b = scratch("threads_b");
  ASSERT_EQ(cli({"market", "--mode", "quantum", "--runs", "3", "--rounds", "20", "--threads", "1",
                 "--out", a.string()}),
            0);
  ASSERT_EQ(cli({"market", "--mode", "quantum", "--runs", "3", "--rounds", "20", "--threads", "3",
                 "--out", b.string()}),
            0);
  EXPECT_EQ(slurp(a / "traders.csv"), slurp(b / "traders.csv"));
}

TEST(Cli, GammaSweepRows) {
  const auto d = scratch("sweep");
  ASSERT_EQ(cli({"gamma-sweep", "--gamma", "0,1.5", "--runs", "2", "--rounds", "5", "--out",
                 d.string()}),
            0);
  EXPECT_EQ(data_rows(d / "gamma_sweep.csv"), 2u);
  EXPECT_EQ(data_rows(d / "gamma_sweep_runs.csv"), 4u);
}

TEST(Cli, GameSurfaceRows) {
  const auto d = scratch("surface");
  ASSERT_EQ(cli({"game-surface", "--k", "4", "--out", d.string()}), 0);
  const std::string s = slurp(d / "utility_surface.csv");
  EXPECT_EQ(data_rows(d / "utility_surface.csv"), 50u);
  std::size_t p1 = 0, pos = 0;
  while ((pos = s.find("\n1,", pos)) != std::string::npos) ++p1, ++pos;
  EXPECT_EQ(p1, 25u);
  EXPECT_EQ(data_rows(d / "pure_equilibria.csv"), 0u);
}

TEST(Cli, NashCsvSchema) {
  const auto d = scratch("nash");
  ASSERT_EQ(cli({"nash", "--k", "3:4", "--out", d.string()}), 0);
  const std::string s = slurp(d / "nash.csv");
  EXPECT_EQ(s.substr(0, s.find('\n')),
            "k,equilibrium_index,player,avg_theta,support_size,weights,completeness");
  EXPECT_NE(s.find("support-enumeration"), std::string::npos);
  EXPECT_GE(data_rows(d / "nash.csv"), 4u);
}

TEST(Cli, ConfigFileMapsOntoFlags) {
  const auto d = scratch("config");
  fs::create_directories(d);
  {
    std::ofstream cfg(d / "run.cfg");
    cfg << "# small run\nruns = 1\nrounds=3\nmode=quantum\n";
  }
  ASSERT_EQ(cli({"market", "--config", (d / "run.cfg").string(), "--rounds", "4", "--out",
                 (d / "o").string()}),
            0);
  EXPECT_EQ(data_rows(d / "o" / "prices.csv"), 4u);
}

TEST(Cli, ExitCodes) {
  const auto d = scratch("errors");
  EXPECT_EQ(cli({}), 1);
  EXPECT_EQ(cli({"frobnicate"}), 1);
  EXPECT_EQ(cli({"market", "--rounds", "0", "--out", d.string()}), 1);
  EXPECT_EQ(cli({"market", "--gamma", "1.0", "--out", d.string()}), 1);
  EXPECT_EQ(cli({"market", "--mode", "sideways", "--out", d.string()}), 1);
  EXPECT_EQ(cli({"market", "--mode", "quantum", "--gamma", "3", "--out", d.string()}), 1);
  EXPECT_EQ(cli({"nash", "--k", "x", "--out", d.string()}), 1);
  EXPECT_EQ(cli({"market", "--runs", "1", "--rounds", "1", "--out", "/proc/qsm/none"}), 2);
}

TEST(Cli, KListParsing) {
  EXPECT_EQ(qsm::cli::parse_k_list({"2:4", "7"}), (std::vector<int>{2, 3, 4, 7}));
  EXPECT_THROW(qsm::cli::parse_k_list({"5:2"}), qsm::DomainError);
}

}  // namespace
