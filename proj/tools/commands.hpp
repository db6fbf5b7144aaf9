#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qsm::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Union of all subcommand flags; each subcommand reads the ones it needs.
struct Options {
  std::string subcommand;
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  int runs = 40;
  int rounds = 1000;
  int agents = 8;
  std::vector<double> gamma;  // empty: subcommand default
  std::string mode;  // empty: subcommand default
  std::vector<std::string> k;  // integers or inclusive ranges "lo:hi"
  double p = 2.0 / 3.0;
  double phi1 = 0;
  double phi2 = 1.0471975511965976;  // pi/3
  int threads = 0;   // 0: hardware concurrency
  // Flags given explicitly on the command line or in a config file.
  std::vector<std::string> given;

  bool was_given(const std::string& flag) const;
};

/// Parses argv (with optional --config FILE expansion) and dispatches.
int run(int argc, const char* const* argv);

int cmd_market(const Options& opt);
int cmd_gamma_sweep(const Options& opt);
int cmd_game_surface(const Options& opt);
int cmd_nash(const Options& opt);

/// Expands "lo:hi" ranges; throws DomainError on malformed entries.
std::vector<int> parse_k_list(const std::vector<std::string>& items);

}  // namespace qsm::cli
