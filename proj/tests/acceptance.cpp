// Acceptance suite: one PASS/FAIL line per criterion.
//
//   qsm_acceptance                 run every criterion
//   qsm_acceptance --criterion 7   run selected criteria (flag may repeat)
//
// Exit status is non-zero when any selected criterion fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "commands.hpp"
#include "dense_oracle.hpp"
#include "qsm/agents.hpp"
#include "qsm/game.hpp"
#include "qsm/market.hpp"
#include "qsm/nash.hpp"
#include "qsm/qcore.hpp"

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kMasterSeed = 1;  // default seed set: runs use seeds 1..40
constexpr int kRuns = 40;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome circuit_vs_closed_form() {
  const auto t0 = Clock::now();
  double worst = 0;
  const double gammas[] = {0, kPi / 8, kPi / 4, 3 * kPi / 8, kPi / 2};
  for (double g : gammas)
    for (int a = 0; a < 50; ++a)
      for (int b = 0; b < 50; ++b) {
        const double t1 = kPi * a / 49, t2 = kPi * b / 49;
        const auto v = qsm::adjusted_valuations(qsm::CircuitParams::unphased(g, {t1, t2}));
        const double c2 = std::pow(std::cos(g), 2), s2 = std::pow(std::sin(g), 2);
        const double x1 = (1 - c2 * std::cos(t1) - s2 * std::cos(t2)) / 2;
        const double x2 = (1 - c2 * std::cos(t2) - s2 * std::cos(t1)) / 2;
        worst = std::max({worst, std::abs(v[0] - x1), std::abs(v[1] - x2)});
      }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5,
          fmt::format("max |error| {:.3g} over 12500 points, {:.2f} s", worst, secs)};
}

Outcome entangler_shape() {
  double worst = 0;
  for (int n = 1; n <= 10; ++n)
    for (int i = 0; i < 9; ++i) {
      const double g = kPi / 2 * i / 8;
      const auto sv = qsm::entangler_state(g, n);
      const std::size_t ones = (std::size_t{1} << n) - 1;
      double sq = 0;
      for (std::size_t b = 0; b < sv.dimension(); ++b) {
        qsm::cplx want = 0;
        if (b == 0) want += std::cos(g / 2);
        if (b == ones) want += qsm::cplx(0, -std::sin(g / 2));
        sq += std::norm(sv.amplitude(b) - want);
      }
      worst = std::max(worst, std::sqrt(sq));
    }
  return {worst <= 1e-12, fmt::format("max norm distance {:.3g} (N=1..10, 9 gammas)", worst)};
}

Outcome classical_bust() {
  bool pass = true;
  std::string detail;
  for (int n : {2, 3, 8}) {
    const auto eq = qsm::classical_grid_nash(qsm::GameSpec::classical(n, 2.0 / 3.0), 100);
    const bool unique_zero = eq.size() == 1 && eq[0] == std::vector<int>(n, 0);
    pass = pass && unique_zero;
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(eq.size(), 3); ++i)
      list += fmt::format("{}({}{})", i ? " " : "", eq[i][0], n > 1 ? ",..." : "");
    detail += fmt::format("N={}: {} equilibria [{}]; ", n, eq.size(), list);
  }
  return {pass, detail};
}

Outcome phase_matched_bust() {
  bool pass = true;
  std::string bad;
  for (int i = 0; i < 9; ++i) {
    const double g = kPi / 2 * i / 8;
    const auto cells = qsm::pure_nash_scan(qsm::GameSpec::quantum(2, 2.0 / 3.0, g, {0, 0}), 20);
    const bool only_zero = cells.size() == 1 && cells[0] == qsm::GridCell{0, 0};
    if (!only_zero) {
      pass = false;
      std::string list;
      for (const auto& c : cells) list += fmt::format("({},{})", c.row, c.col);
      bad += fmt::format(" gamma={:.4f}:{}", g, list);
    }
  }
  return {pass, pass ? "all 9 gammas give {(0,0)} on the k=20 grid"
                     : "grid k=20, extra equilibria at" + bad};
}

Outcome phase_mismatched_no_bust() {
  std::string bad;
  for (int k = 8; k <= 23; ++k)
    if (!qsm::pure_nash_scan(qsm::GameSpec::mismatched_phases(), k).empty())
      bad += fmt::format(" {}", k);
  return {bad.empty(), bad.empty() ? "no pure grid equilibrium for k=8..23"
                                   : "pure equilibria found at k =" + bad};
}

std::pair<double, double> ref_utilities(double t1, double t2) {
  const auto v = oracle::valuations(kPi / 2, {t1, t2}, {0, kPi / 3}, {0, 0});
  const double target = (2.0 / 3.0) * (v[0] + v[1]) / 2;
  return {-std::pow(v[0] - target, 2), -std::pow(v[1] - target, 2)};
}

Outcome analytic_best_responses() {
  const int k = 2000;
  const double step = kPi / k;
  std::vector<double> grid_u1(k + 1), grid_u2(k + 1);
  int ext_bad = 0, p2_bad = 0;
  double ext_worst = 0, p2_worst = 0;
  for (int probe = 0; probe < 50; ++probe) {
    const double t = kPi * (probe + 0.5) / 50;
    // The closed form gives the interior stationary point of u1 (a minimum).
    int arg = 0;
    for (int m = 0; m <= k; ++m) {
      grid_u1[m] = ref_utilities(m * step, t).first;
      if (grid_u1[m] < grid_u1[arg]) arg = m;
    }
    const double e6 = std::abs(qsm::p1_interior_extremum(t) - arg * step);
    ext_worst = std::max(ext_worst, e6);
    ext_bad += e6 > step;
    // Player 2's argmax can hold two tied roots; distance to the nearest one.
    for (int j = 0; j <= k; ++j) grid_u2[j] = ref_utilities(t, j * step).second;
    const double best = *std::max_element(grid_u2.begin(), grid_u2.end());
    const double br = qsm::best_response_p2(t);
    double e2 = kPi;
    for (int j = 0; j <= k; ++j) {
      const bool local = (j == 0 || grid_u2[j] >= grid_u2[j - 1]) &&
                         (j == k || grid_u2[j] >= grid_u2[j + 1]);
      if (local && grid_u2[j] >= best - 1e-6) e2 = std::min(e2, std::abs(br - j * step));
    }
    p2_worst = std::max(p2_worst, e2);
    p2_bad += e2 > step;
  }
  const double c0 = std::cos(qsm::best_response_p2(0));
  const double cpi = std::cos(qsm::best_response_p2(kPi));
  const bool spots = std::abs(c0 - 1.0 / 7) < 1e-12 && std::abs(cpi - 3.0 / 5) < 1e-12;
  return {ext_bad == 0 && p2_bad == 0 && spots,
          fmt::format("p1 extremum max dev {:.2g} rad, p2 max dev {:.2g} rad (step {:.2g}); "
                      "cos at 0 = {:.15f}, at pi = {:.15f}",
                      ext_worst, p2_worst, step, c0, cpi)};
}

Outcome mixed_nash() {
  const auto spec = qsm::GameSpec::mismatched_phases();
  const auto t0 = Clock::now();
  const auto g23 = qsm::nash::build_bimatrix(spec, 23);
  const auto r23 = qsm::nash::enumerate_mixed(g23);
  const double secs = seconds_since(t0);
  bool pass = r23.equilibria.size() == 1 && secs < 60;
  std::string detail = fmt::format("k=23: {} equilibria ({}, {:.2f} s)", r23.equilibria.size(),
                                   qsm::nash::to_string(r23.completeness), secs);
  if (r23.equilibria.size() == 1) {
    const auto [a1, a2] = qsm::nash::average_strategy(r23.equilibria[0], g23);
    const bool close = std::abs(a1 - kPi / 2) <= 0.1 && std::abs(a2 - 3 * kPi / 8) <= 0.1;
    pass = pass && close;
    detail += fmt::format(" avg=({:.4f}, {:.4f}) target=({:.4f}, {:.4f})", a1, a2, kPi / 2,
                          3 * kPi / 8);
  }
  bool audits = true, exhaustive = true;
  std::size_t at3 = 0;
  for (int k = 2; k <= 12; ++k) {
    const auto g = qsm::nash::build_bimatrix(spec, k);
    const auto r = qsm::nash::enumerate_mixed(g);
    exhaustive = exhaustive && r.completeness == qsm::nash::Completeness::SupportEnumeration;
    for (const auto& e : r.equilibria) audits = audits && qsm::nash::passes_audit(e, g);
    if (k == 3) at3 = r.equilibria.size();
  }
  pass = pass && audits && exhaustive && at3 > 1;
  detail += fmt::format("; k=3: {} equilibria; k<=12 audits {}, support enumeration {}", at3,
                        audits ? "pass" : "FAIL", exhaustive ? "throughout" : "NOT used");
  return {pass, detail};
}

Outcome solver_cross_validation() {
  qsm::RandomStream rng(20240601);
  int audit_fail = 0, subset_fail = 0, empty = 0, games = 0;
  while (games < 200) {
    const int m = 2 + static_cast<int>(rng.next_u64() % 5);
    const int n = 2 + static_cast<int>(rng.next_u64() % 5);
    qsm::nash::Bimatrix g{Eigen::MatrixXd(m, n), Eigen::MatrixXd(m, n), {}};
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        g.a(i, j) = rng.uniform(-1, 1);
        g.b(i, j) = rng.uniform(-1, 1);
      }
    bool singular = false;
    const auto se = qsm::nash::support_enumeration(g, &singular);
    if (singular) continue;  // keep non-degenerate draws only
    ++games;
    const auto lh = qsm::nash::lemke_howson_all(g);
    empty += se.empty() || lh.empty();
    for (const auto& e : se) audit_fail += !qsm::nash::passes_audit(e, g, 1e-8);
    for (const auto& e : lh) {
      audit_fail += !qsm::nash::passes_audit(e, g, 1e-8);
      const bool found = std::any_of(se.begin(), se.end(), [&](const auto& s) {
        return (s.w1 - e.w1).template lpNorm<Eigen::Infinity>() < 1e-7 &&
               (s.w2 - e.w2).template lpNorm<Eigen::Infinity>() < 1e-7;
      });
      subset_fail += !found;
    }
  }
  return {audit_fail == 0 && subset_fail == 0 && empty == 0,
          fmt::format("200 games: audit failures {}, LH not in SE {}, games without equilibrium {}",
                      audit_fail, subset_fail, empty)};
}

Outcome gradient_and_optimizer() {
  using qsm::agents::PolicyNet;
  qsm::RandomStream rng(4242);
  double worst = 0;
  int checked = 0;
  while (checked < 20) {
    auto net = PolicyNet::random(rng);
    for (double& b : net.params().subspan(PolicyNet::kB1, 32)) b = rng.uniform(-0.3, 0.3);
    for (double& b : net.params().subspan(PolicyNet::kB2, 32)) b = rng.uniform(-0.3, 0.3);
    const qsm::agents::Observation o{rng.uniform(0, 15), rng.uniform(0, 15), rng.uniform(0, 15)};
    const auto tr = net.trace(o);
    if ((tr.pre1.array().abs() < 1e-6).any() || (tr.pre2.array().abs() < 1e-6).any()) continue;
    ++checked;
    const auto g = net.gradient(o);
    double err = 0, scale = 0;
    for (std::size_t i = 0; i < PolicyNet::kParamCount; ++i) {
      auto p = net, m = net;
      p.params()[i] += 1e-5;
      m.params()[i] -= 1e-5;
      err = std::max(err, std::abs((p.forward(o) - m.forward(o)) / 2e-5 - g[i]));
      scale = std::max(scale, std::abs(g[i]));
    }
    worst = std::max(worst, err / scale);
  }
  qsm::agents::Adam opt(4);
  std::vector<double> params = {0.1, -0.2, 3.0, 0.0};
  const std::vector<double> grad = {1.0, -0.5, 1e-3, 2.0};
  const auto before = params;
  opt.ascend(params, grad);
  double adam_err = 0;
  for (int i = 0; i < 4; ++i) {
    const double mh = (1 - 0.9) * grad[i] / (1 - 0.9);
    const double vh = (1 - 0.999) * grad[i] * grad[i] / (1 - 0.999);
    adam_err = std::max(adam_err, std::abs(params[i] - (before[i] + 1e-3 * mh / (std::sqrt(vh) + 1e-8))));
  }
  return {worst < 1e-4 && adam_err <= 1e-12,
          fmt::format("max relative FD error {:.3g} over 20 nets; Adam step error {:.3g}", worst,
                      adam_err)};
}

// --- market experiments (shared by 10-12) ----------------------------------

struct Experiment {
  double mean_final = 0;
  bool conserved = true;
  double seconds = 0;
};

Experiment run_experiment(qsm::market::Mode mode, double gamma) {
  static std::map<std::pair<int, double>, Experiment> cache;
  const auto key = std::pair{static_cast<int>(mode), gamma};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const auto t0 = Clock::now();
  std::vector<double> finals(kRuns);
  std::vector<char> conserved(kRuns, 1);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int r = next++; r < kRuns; r = next++) {
      qsm::market::MarketConfig cfg;
      cfg.mode = mode;
      cfg.gamma = gamma;
      cfg.seed = qsm::market::run_seed(kMasterSeed, r);
      const auto recs = qsm::market::run_simulation(cfg);
      const double cash0 = cfg.n_traders * cfg.initial_cash;
      const double stock0 = cfg.n_traders * cfg.initial_stock;
      for (const auto& rec : recs) {
        double cash = 0, stock = 0;
        for (const auto& t : rec.traders) cash += t.cash, stock += t.stock;
        if (std::abs(cash - cash0) > 1e-9 || stock != stock0) conserved[r] = 0;
      }
      finals[r] = recs.back().avg_price;
    }
  };
  std::vector<std::thread> pool;
  const unsigned n = std::max(1u, std::thread::hardware_concurrency());
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  Experiment e;
  for (double f : finals) e.mean_final += f / kRuns;
  e.conserved = std::all_of(conserved.begin(), conserved.end(), [](char c) { return c; });
  e.seconds = seconds_since(t0);
  cache[key] = e;
  return e;
}

Outcome market_collapse() {
  const auto e = run_experiment(qsm::market::Mode::Classical, 0);
  return {e.mean_final < 2 && e.seconds < 300,
          fmt::format("classical mean final price {:.4f} over {} runs ({:.1f} s)", e.mean_final,
                      kRuns, e.seconds)};
}

Outcome market_stabilization() {
  using qsm::market::Mode;
  const auto classical = run_experiment(Mode::Classical, 0);
  const auto q2 = run_experiment(Mode::Quantum, kPi / 2);
  const auto q4 = run_experiment(Mode::Quantum, kPi / 4);
  const auto q0 = run_experiment(Mode::Quantum, 0);
  const bool band = q2.mean_final >= 7 && q2.mean_final <= 13;
  const bool above = q2.mean_final > classical.mean_final;
  const bool ordered = q2.mean_final > q4.mean_final && q4.mean_final > q0.mean_final;
  return {band && above && ordered,
          fmt::format("mean final price: quantum pi/2 {:.4f} (band [7,13] {}), classical {:.4f}; "
                      "delta price pi/2 {:.4f} > pi/4 {:.4f} > 0 {:.4f}: {}",
                      q2.mean_final, band ? "ok" : "MISSED", classical.mean_final,
                      q2.mean_final - 10, q4.mean_final - 10, q0.mean_final - 10,
                      ordered ? "ok" : "MISSED")};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome conservation_and_determinism() {
  using qsm::market::Mode;
  bool conserved = true;
  for (const auto& [mode, gamma] :
       {std::pair{Mode::Classical, 0.0}, std::pair{Mode::Quantum, kPi / 2},
        std::pair{Mode::Quantum, kPi / 4}, std::pair{Mode::Quantum, 0.0}})
    conserved = conserved && run_experiment(mode, gamma).conserved;

  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "qsm_acceptance_determinism";
  fs::remove_all(root);
  bool identical = true;
  for (const char* mode : {"classical", "quantum"}) {
    std::vector<std::string> outs;
    for (const char* tag : {"a", "b"}) {
      const fs::path out = root / (std::string(mode) + "_" + tag);
      const std::vector<std::string> args = {"qsm",   "market",     "--mode", mode,
                                             "--runs", "4",         "--rounds", "250",
                                             "--seed", "99",        "--out",  out.string()};
      std::vector<const char*> argv;
      for (const auto& a : args) argv.push_back(a.c_str());
      std::ostringstream sink;
      auto* old = std::cout.rdbuf(sink.rdbuf());
      const int rc = qsm::cli::run(static_cast<int>(argv.size()), argv.data());
      std::cout.rdbuf(old);
      if (rc != 0) identical = false;
      outs.push_back(slurp(out / "prices.csv") + slurp(out / "traders.csv") +
                     slurp(out / "summary.csv"));
    }
    identical = identical && outs[0] == outs[1] && !outs[0].empty();
  }
  fs::remove_all(root);
  return {conserved && identical,
          fmt::format("cash/stock conserved in every round of 160 runs: {}; repeated CLI runs "
                      "byte-identical: {}",
                      conserved ? "yes" : "NO", identical ? "yes" : "NO")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "circuit matches closed forms", circuit_vs_closed_form},
      {2, "entangler shape", entangler_shape},
      {3, "classical bust is the unique grid equilibrium", classical_bust},
      {4, "phase-matched bust persists", phase_matched_bust},
      {5, "phase-mismatched game has no pure equilibrium", phase_mismatched_no_bust},
      {6, "analytic best responses", analytic_best_responses},
      {7, "mixed Nash equilibria", mixed_nash},
      {8, "solver cross-validation", solver_cross_validation},
      {9, "gradient and optimizer checks", gradient_and_optimizer},
      {10, "classical market collapse", market_collapse},
      {11, "quantum market stabilization", market_stabilization},
      {12, "conservation and determinism", conservation_and_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      selected.insert(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: " << argv[0] << " [--criterion N]...\n";
      return 2;
    }
  }
  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << fmt::format("[{}] criterion {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", c.id,
                             c.name, o.detail)
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
