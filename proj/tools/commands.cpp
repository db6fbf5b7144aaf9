#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "csv.hpp"
#include "qsm/error.hpp"
#include "qsm/game.hpp"
#include "qsm/market.hpp"
#include "qsm/nash.hpp"

namespace qsm::cli {
namespace {

constexpr double kPi = std::numbers::pi;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void usage_check(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

int thread_count(const Options& opt) {
  if (opt.threads > 0) return opt.threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(0..n-1) on a small pool; results must be written by index.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

nlohmann::json flags_json(const Options& opt) {
  nlohmann::json j;
  j["seed"] = opt.seed;
  j["out"] = opt.out.string();
  j["runs"] = opt.runs;
  j["rounds"] = opt.rounds;
  j["agents"] = opt.agents;
  j["gamma"] = opt.gamma;
  j["mode"] = opt.mode;
  j["k"] = opt.k;
  j["p"] = opt.p;
  j["phi1"] = opt.phi1;
  j["phi2"] = opt.phi2;
  j["threads"] = opt.threads;
  return j;
}

// Thread count is left out of the manifest: it does not affect outputs and
// keeps reruns byte-identical across machines.
void write_manifest(const Options& opt, nlohmann::json extra, const std::vector<std::string>& files) {
  nlohmann::json m;
  m["tool"] = "qsm";
  m["version"] = kVersion;
  m["subcommand"] = opt.subcommand;
  auto flags = flags_json(opt);
  flags.erase("threads");
  m["flags"] = flags;
  m["explicit_flags"] = opt.given;
  m["outputs"] = files;
  for (auto& [key, value] : extra.items()) m[key] = value;
  write_atomically(opt.out / "manifest.json", m.dump(2) + "\n");
}

void prepare_out(const Options& opt) {
  std::error_code ec;
  std::filesystem::create_directories(opt.out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + opt.out.string());
}

const char* kMarketSeeding =
    "run_seed = seed + run_index; trader i: init stream derive_seed(run_seed, 2i), noise stream "
    "derive_seed(run_seed, 2i+1); phases derive_seed(run_seed, 0x5048415345); "
    "derive_seed(b, t) = splitmix64(b ^ splitmix64(t))";

market::MarketConfig market_config(const Options& opt, market::Mode mode, double gamma) {
  market::MarketConfig cfg;
  cfg.n_traders = opt.agents;
  cfg.rounds = opt.rounds;
  cfg.mode = mode;
  cfg.gamma = gamma;
  cfg.seed = opt.seed;
  return cfg;
}

void check_market_flags(const Options& opt) {
  usage_check(opt.runs >= 1, "--runs must be at least 1");
  usage_check(opt.rounds >= 1, "--rounds must be at least 1");
  usage_check(opt.agents >= 2, "--agents must be at least 2");
}

struct GameFlags {
  GameSpec spec;
  bool quantum = true;
};

GameFlags game_flags(const Options& opt) {
  const std::string mode = opt.mode.empty() ? "quantum" : opt.mode;
  usage_check(mode == "quantum" || mode == "classical", "--mode must be classical or quantum");
  usage_check(opt.gamma.size() <= 1, "this subcommand takes a single --gamma");
  GameFlags g;
  g.quantum = mode == "quantum";
  if (g.quantum) {
    const double gamma = opt.gamma.empty() ? kPi / 2 : opt.gamma.front();
    g.spec = GameSpec::quantum(2, opt.p, gamma, {opt.phi1, opt.phi2});
  } else {
    usage_check(opt.gamma.empty() && !opt.was_given("phi1") && !opt.was_given("phi2"),
                "--gamma/--phi1/--phi2 apply to quantum mode only");
    g.spec = GameSpec::classical(2, opt.p);
  }
  g.spec.validate();
  return g;
}

}  // namespace

bool Options::was_given(const std::string& flag) const {
  return std::find(given.begin(), given.end(), flag) != given.end();
}

std::vector<int> parse_k_list(const std::vector<std::string>& items) {
  std::vector<int> out;
  auto to_int = [](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    detail::require(used == s.size() && !s.empty(), "malformed k value '" + s + "'");
    return v;
  };
  for (const std::string& item : items) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back(to_int(item));
      continue;
    }
    const int lo = to_int(item.substr(0, colon));
    const int hi = to_int(item.substr(colon + 1));
    detail::require(lo <= hi, "empty k range '" + item + "'");
    for (int k = lo; k <= hi; ++k) out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_market(const Options& opt) {
  market::Mode mode{};
  double gamma = 0;
  try {
    check_market_flags(opt);
    const std::string m = opt.mode.empty() ? "classical" : opt.mode;
    usage_check(m == "classical" || m == "quantum", "--mode must be classical or quantum");
    usage_check(opt.gamma.size() <= 1, "market takes a single --gamma");
    mode = m == "classical" ? market::Mode::Classical : market::Mode::Quantum;
    if (mode == market::Mode::Classical) {
      usage_check(opt.gamma.empty(), "--gamma requires --mode quantum");
    } else {
      gamma = opt.gamma.empty() ? kPi / 2 : opt.gamma.front();
    }
    market_config(opt, mode, gamma).validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  std::vector<std::vector<market::RoundRecord>> runs(static_cast<std::size_t>(opt.runs));
  parallel_for(runs.size(), thread_count(opt), [&](std::size_t r) {
    auto cfg = market_config(opt, mode, gamma);
    cfg.seed = market::run_seed(opt.seed, static_cast<int>(r));
    runs[r] = market::run_simulation(cfg);
  });

  Csv prices("run_id,round,avg_price,volume");
  Csv traders("run_id,round,trader_id,cash,stock,net_worth");
  Csv summary("round,mean_price,std_price,runs");
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (const auto& rec : runs[r]) {
      prices.row(r, rec.round + 1, rec.avg_price, rec.volume);
      for (std::size_t t = 0; t < rec.traders.size(); ++t) {
        const auto& s = rec.traders[t];
        traders.row(r, rec.round + 1, t, s.cash, s.stock, s.net_worth);
      }
    }
  std::vector<double> column(runs.size());
  for (int round = 0; round < opt.rounds; ++round) {
    for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r][round].avg_price;
    summary.row(round + 1, mean(column), stddev(column), runs.size());
  }
  for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r].back().avg_price;

  prepare_out(opt);
  write_atomically(opt.out / "prices.csv", prices.text());
  write_atomically(opt.out / "traders.csv", traders.text());
  write_atomically(opt.out / "summary.csv", summary.text());
  nlohmann::json extra;
  extra["seed_derivation"] = kMarketSeeding;
  extra["effective"] = {{"mode", market::to_string(mode)}, {"gamma", gamma}};
  write_manifest(opt, extra, {"prices.csv", "traders.csv", "summary.csv"});
  std::cout << fmt::format("market {}: {} runs x {} rounds, mean final price {} (sd {})\n",
                           market::to_string(mode), opt.runs, opt.rounds, num(mean(column)),
                           num(stddev(column)));
  return kOk;
}

int cmd_gamma_sweep(const Options& opt) {
  std::vector<double> gammas = opt.gamma;
  try {
    check_market_flags(opt);
    usage_check(opt.mode.empty() || opt.mode == "quantum", "gamma-sweep runs in quantum mode");
    if (gammas.empty()) gammas = {0, kPi / 8, kPi / 4, 3 * kPi / 8, kPi / 2};
    for (double g : gammas) market_config(opt, market::Mode::Quantum, g).validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  const std::size_t runs = static_cast<std::size_t>(opt.runs);
  std::vector<double> final_price(gammas.size() * runs);
  parallel_for(final_price.size(), thread_count(opt), [&](std::size_t idx) {
    auto cfg = market_config(opt, market::Mode::Quantum, gammas[idx / runs]);
    cfg.seed = market::run_seed(opt.seed, static_cast<int>(idx % runs));
    final_price[idx] = market::run_simulation(cfg).back().avg_price;
  });

  Csv sweep("gamma,mean_delta_price,std_delta_price,runs");
  Csv finals("gamma,run_id,final_price,delta_price");
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    std::vector<double> delta(runs);
    for (std::size_t r = 0; r < runs; ++r) {
      const double fp = final_price[g * runs + r];
      delta[r] = fp - market::MarketConfig{}.initial_price;
      finals.row(gammas[g], r, fp, delta[r]);
    }
    sweep.row(gammas[g], mean(delta), stddev(delta), runs);
    std::cout << fmt::format("gamma {}: mean delta price {} (sd {})\n", num(gammas[g]),
                             num(mean(delta)), num(stddev(delta)));
  }

  prepare_out(opt);
  write_atomically(opt.out / "gamma_sweep.csv", sweep.text());
  write_atomically(opt.out / "gamma_sweep_runs.csv", finals.text());
  nlohmann::json extra;
  extra["seed_derivation"] = kMarketSeeding;
  extra["effective"] = {{"mode", "quantum"}, {"gammas", gammas}};
  write_manifest(opt, extra, {"gamma_sweep.csv", "gamma_sweep_runs.csv"});
  return kOk;
}

int cmd_game_surface(const Options& opt) {
  GameFlags g;
  int k = 20;
  try {
    g = game_flags(opt);
    if (!opt.k.empty()) {
      const auto ks = parse_k_list(opt.k);
      usage_check(ks.size() == 1, "game-surface takes a single --k");
      k = ks.front();
    }
    usage_check(k >= 2, "--k must be at least 2");
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  const UtilityGrid grid = sample_utilities(g.spec, k);
  const int n = static_cast<int>(grid.grid.size());
  Csv surface("player,i,j,theta1,theta2,utility");
  for (int player = 1; player <= 2; ++player)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        surface.row(player, i, j, grid.grid[i], grid.grid[j],
                    player == 1 ? grid.u1[i][j] : grid.u2[i][j]);

  // Grid best responses (all ties), plus the analytic curves where they apply.
  Csv responses("player,given_index,given_theta,response_index,response_theta,source");
  for (int j = 0; j < n; ++j)
    for (int i : grid_best_rows(grid, j)) responses.row(1, j, grid.grid[j], i, grid.grid[i], "grid");
  for (int i = 0; i < n; ++i)
    for (int j : grid_best_cols(grid, i)) responses.row(2, i, grid.grid[i], j, grid.grid[j], "grid");
  const GameSpec ref = GameSpec::mismatched_phases();
  const bool analytic = g.quantum && std::abs(g.spec.gamma - ref.gamma) < 1e-12 &&
                        std::abs(g.spec.p - ref.p) < 1e-12 && g.spec.phi == ref.phi;
  if (analytic) {
    for (int j = 0; j < n; ++j)
      responses.row(1, j, grid.grid[j], "", best_response_p1(grid.grid[j], g.spec), "analytic");
    for (int i = 0; i < n; ++i)
      responses.row(2, i, grid.grid[i], "", best_response_p2(grid.grid[i], g.spec), "analytic");
  }

  Csv pure("i,j,theta1,theta2");
  for (const GridCell& c : pure_nash_scan(g.spec, k))
    pure.row(c.row, c.col, grid.grid[c.row], grid.grid[c.col]);

  prepare_out(opt);
  write_atomically(opt.out / "utility_surface.csv", surface.text());
  write_atomically(opt.out / "best_responses.csv", responses.text());
  write_atomically(opt.out / "pure_equilibria.csv", pure.text());
  nlohmann::json extra;
  extra["effective"] = {{"mode", g.quantum ? "quantum" : "classical"},
                        {"gamma", g.spec.gamma},
                        {"phi", g.spec.phi},
                        {"k", k},
                        {"analytic_best_responses", analytic}};
  write_manifest(opt, extra, {"utility_surface.csv", "best_responses.csv", "pure_equilibria.csv"});
  std::cout << fmt::format("game-surface k={}: {} pure grid equilibria\n", k, pure.rows());
  return kOk;
}

int cmd_nash(const Options& opt) {
  GameFlags g;
  std::vector<int> ks;
  try {
    g = game_flags(opt);
    ks = parse_k_list(opt.k.empty() ? std::vector<std::string>{"2:23"} : opt.k);
    for (int k : ks) usage_check(k >= 1, "--k values must be at least 1");
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }

  struct Solved {
    nash::Bimatrix game;
    nash::EnumerationResult result;
  };
  std::vector<Solved> solved(ks.size());
  parallel_for(ks.size(), thread_count(opt), [&](std::size_t i) {
    solved[i].game = nash::build_bimatrix(g.spec, ks[i]);
    solved[i].result = nash::enumerate_mixed(solved[i].game);
  });

  Csv csv("k,equilibrium_index,player,avg_theta,support_size,weights,completeness");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto& [game, res] = solved[i];
    const std::string completeness = nash::to_string(res.completeness);
    for (std::size_t e = 0; e < res.equilibria.size(); ++e) {
      const auto& prof = res.equilibria[e];
      const auto [avg1, avg2] = nash::average_strategy(prof, game);
      for (int player = 1; player <= 2; ++player) {
        const Eigen::VectorXd& w = player == 1 ? prof.w1 : prof.w2;
        std::vector<std::string> weights;
        for (Eigen::Index s = 0; s < w.size(); ++s) weights.push_back(num(std::max(0.0, w[s])));
        csv.row(ks[i], e, player, player == 1 ? avg1 : avg2,
                (player == 1 ? prof.support1() : prof.support2()).size(),
                fmt::format("{}", fmt::join(weights, ";")), completeness);
      }
    }
    std::cout << fmt::format("k={}: {} equilibria ({})\n", ks[i], res.equilibria.size(),
                             completeness);
  }

  prepare_out(opt);
  write_atomically(opt.out / "nash.csv", csv.text());
  nlohmann::json extra;
  extra["effective"] = {{"mode", g.quantum ? "quantum" : "classical"},
                        {"gamma", g.spec.gamma},
                        {"phi", g.spec.phi},
                        {"k", ks}};
  write_manifest(opt, extra, {"nash.csv"});
  return kOk;
}

// ---------------------------------------------------------------------------

namespace {

/// Reads key=value lines ('#' comments) into "--key value" arguments.
std::vector<std::string> config_arguments(const std::filesystem::path& path) {
  std::ifstream is(path);
  usage_check(static_cast<bool>(is), "cannot read config file " + path.string());
  std::vector<std::string> args;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    usage_check(eq != std::string::npos, "config line without '=': " + line);
    args.push_back("--" + trim(line.substr(0, eq)));
    args.push_back(trim(line.substr(eq + 1)));
  }
  return args;
}

void add_shared_flags(CLI::App& sub, Options& opt) {
  // Later occurrences win, so command-line flags override config-file values.
  sub.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  sub.add_option("--seed", opt.seed, "master seed (64-bit)");
  sub.add_option("--out", opt.out, "output directory");
  sub.add_option("--runs", opt.runs, "independent runs");
  sub.add_option("--rounds", opt.rounds, "rounds per run");
  sub.add_option("--agents", opt.agents, "number of traders");
  sub.add_option("--gamma", opt.gamma, "entanglement angle(s) in radians")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sub.add_option("--mode", opt.mode, "classical or quantum");
  sub.add_option("--k", opt.k, "grid resolution(s): integers or lo:hi ranges")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sub.add_option("--p", opt.p, "guessing-game target fraction");
  sub.add_option("--phi1", opt.phi1, "player 1 phase");
  sub.add_option("--phi2", opt.phi2, "player 2 phase");
  sub.add_option("--threads", opt.threads, "worker threads (0: all cores)");
}

}  // namespace

int run(int argc, const char* const* argv) {
  try {
    // Expand --config FILE in place so explicit flags later on the line win.
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
      const std::string a = argv[i];
      if (a == "--config" || a.rfind("--config=", 0) == 0) {
        std::string file;
        if (a == "--config") {
          usage_check(i + 1 < argc, "--config needs a file");
          file = argv[++i];
        } else {
          file = a.substr(9);
        }
        const auto extra = config_arguments(file);
        args.insert(args.end(), extra.begin(), extra.end());
      } else {
        args.push_back(a);
      }
    }
    // Keep the subcommand first.
    auto sub_pos = std::find_if(args.begin(), args.end(), [](const std::string& s) {
      return s == "market" || s == "gamma-sweep" || s == "game-surface" || s == "nash";
    });
    if (sub_pos != args.end() && sub_pos != args.begin()) std::rotate(args.begin(), sub_pos, sub_pos + 1);

    Options opt;
    CLI::App app{"Quantum-mediated stock market and guessing-game laboratory"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    std::vector<CLI::App*> subs = {
        app.add_subcommand("market", "run market simulations"),
        app.add_subcommand("gamma-sweep", "final-price change versus entanglement"),
        app.add_subcommand("game-surface", "two-player utility surfaces and best responses"),
        app.add_subcommand("nash", "mixed equilibria of the discretised game"),
    };
    for (CLI::App* s : subs) add_shared_flags(*s, opt);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? kOk : kUsage;
    }
    for (CLI::App* s : subs) {
      if (!s->parsed()) continue;
      opt.subcommand = s->get_name();
      for (const CLI::Option* o : s->get_options())
        if (o->count() > 0) opt.given.push_back(o->get_name(false, true).substr(2));
    }

    if (opt.subcommand == "market") return cmd_market(opt);
    if (opt.subcommand == "gamma-sweep") return cmd_gamma_sweep(opt);
    if (opt.subcommand == "game-surface") return cmd_game_surface(opt);
    return cmd_nash(opt);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace qsm::cli
