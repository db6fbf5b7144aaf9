#pragma once

// Classical and quantum p-guessing games.
//
// Utility of player i:  u_i = -(x_i - (p/N) * sum_j x_j)^2
//
// Classical games use raw values x_i in [0, 100]. Quantum games take raw
// angles theta_i in [0, pi], pass them through the mediation circuit (psi = 0)
// and use the adjusted valuations in [0, 1] as x_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qsm/error.hpp"
#include "qsm/qcore.hpp"

namespace qsm {

enum class Scale { Classical, Quantum };

inline constexpr double kClassicalMax = 100.0;

// Two utilities closer than this (relative to max(1, |u|)) count as tied.
inline constexpr double kUtilityTieTol = 1e-12;

inline bool utility_at_least(double u, double best) {
  return u >= best - kUtilityTieTol * std::max(1.0, std::abs(best));
}

struct GameSpec {
  int n_players = 2;
  double p = 2.0 / 3.0;
  Scale scale = Scale::Classical;
  double gamma = 0;
  std::vector<double> phi;  // one per player, quantum scale only

  static GameSpec classical(int n_players, double p) {
    GameSpec s;
    s.n_players = n_players;
    s.p = p;
    s.scale = Scale::Classical;
    s.validate();
    return s;
  }

  static GameSpec quantum(int n_players, double p, double gamma, std::vector<double> phi) {
    GameSpec s;
    s.n_players = n_players;
    s.p = p;
    s.scale = Scale::Quantum;
    s.gamma = gamma;
    s.phi = std::move(phi);
    s.validate();
    return s;
  }

  /// Maximally entangled two-player p = 2/3 game with phases (0, pi/3); the
  /// configuration the analytic best responses below are derived for.
  static GameSpec mismatched_phases() { return quantum(2, 2.0 / 3.0, kPi / 2, {0.0, kPi / 3}); }

  void validate() const {
    detail::require(n_players >= 2, "a game needs at least two players");
    detail::require(p > 0 && p <= 1, "p must lie in (0, 1]");
    if (scale == Scale::Quantum) {
      detail::require(n_players <= kMaxQubits, "quantum games support at most 12 players");
      detail::require(phi.size() == static_cast<std::size_t>(n_players),
                      "one phase per player is required");
      detail::checked_angle(gamma, 0, kPi / 2, "gamma");
      for (double f : phi) detail::checked_angle(f, 0, 2 * kPi, "phi");
    }
  }

  double upper_bound() const { return scale == Scale::Classical ? kClassicalMax : kPi; }
};

namespace detail {

inline double guessing_utility(std::span<const double> x, double p, std::size_t i) {
  const double n = static_cast<double>(x.size());
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  const double d = x[i] - p / n * total;
  return -d * d;
}

inline void check_player(const GameSpec& spec, std::size_t i) {
  require(i < static_cast<std::size_t>(spec.n_players), "player index out of range");
}

}  // namespace detail

inline double classical_utility(std::span<const double> profile, const GameSpec& spec,
                                std::size_t i) {
  detail::require(spec.scale == Scale::Classical, "classical_utility needs a classical spec");
  detail::require(profile.size() == static_cast<std::size_t>(spec.n_players),
                  "profile length must equal the player count");
  detail::check_player(spec, i);
  for (double v : profile)
    detail::require(std::isfinite(v) && v >= 0 && v <= kClassicalMax,
                    "classical values must lie in [0, 100]");
  return detail::guessing_utility(profile, spec.p, i);
}

/// Unique maximiser x_i = p/(N - p) * sum_{j != i} x_j, clamped to [0, 100].
inline double classical_best_response(std::span<const double> others, const GameSpec& spec) {
  detail::require(others.size() + 1 == static_cast<std::size_t>(spec.n_players),
                  "others must hold N - 1 values");
  const double sum = std::accumulate(others.begin(), others.end(), 0.0);
  const double n = spec.n_players;
  return std::clamp(spec.p / (n - spec.p) * sum, 0.0, kClassicalMax);
}

/// The bust profile (all zeros); the only solution of the best-response system
/// when p < 1.
inline std::vector<double> classical_pure_nash(const GameSpec& spec) {
  spec.validate();
  detail::require(spec.p < 1, "p = 1 admits a continuum of equilibria");
  return std::vector<double>(static_cast<std::size_t>(spec.n_players), 0.0);
}

/// Adjusted valuations of a quantum game at raw angles `theta`.
inline std::vector<double> quantum_valuations(std::span<const double> theta, const GameSpec& spec) {
  detail::require(spec.scale == Scale::Quantum, "quantum valuations need a quantum spec");
  detail::require(theta.size() == static_cast<std::size_t>(spec.n_players),
                  "profile length must equal the player count");
  CircuitParams params;
  params.gamma = spec.gamma;
  params.theta.assign(theta.begin(), theta.end());
  params.phi = spec.phi;
  params.psi.assign(theta.size(), 0.0);
  return adjusted_valuations(params);
}

inline double quantum_utility(std::span<const double> theta, const GameSpec& spec, std::size_t i) {
  detail::check_player(spec, i);
  const std::vector<double> x = quantum_valuations(theta, spec);
  return detail::guessing_utility(x, spec.p, i);
}

/// Both players' utilities of a two-player game at (v1, v2).
inline std::pair<double, double> utility_pair(double v1, double v2, const GameSpec& spec) {
  detail::require(spec.n_players == 2, "utility_pair needs a two-player spec");
  const double prof[2] = {v1, v2};
  if (spec.scale == Scale::Classical)
    return {classical_utility(prof, spec, 0), classical_utility(prof, spec, 1)};
  const std::vector<double> x = quantum_valuations(prof, spec);
  return {detail::guessing_utility(x, spec.p, 0), detail::guessing_utility(x, spec.p, 1)};
}

// ---------------------------------------------------------------------------
// Analytic best responses of the maximally entangled p = 2/3 game with
// phases (0, pi/3).

/// Interior stationary point of player 1's utility for fixed theta2:
///   cos(theta1) = +-sqrt((1 - 6c + 9c^2) / (13 - 6c - 3c^2)),  c = cos(theta2),
/// with the negative root below theta2 = arccos(1/3). These are minima of u1
/// except at (0, 0) and (pi, pi).
inline double p1_interior_extremum(double theta2) {
  theta2 = detail::checked_angle(theta2, 0, kPi, "theta2");
  const double c = std::cos(theta2);
  const double num = 1 - 6 * c + 9 * c * c;
  const double den = 13 - 6 * c - 3 * c * c;
  const double mag = std::sqrt(std::max(0.0, num / den));
  const double sign = theta2 < std::acos(1.0 / 3.0) ? -1.0 : 1.0;
  return std::acos(std::clamp(sign * mag, -1.0, 1.0));
}

/// Player 1's best response to theta2; always a boundary value, ties to 0.
inline double best_response_p1(double theta2, const GameSpec& spec = GameSpec::mismatched_phases()) {
  theta2 = detail::checked_angle(theta2, 0, kPi, "theta2");
  const double at_zero = utility_pair(0.0, theta2, spec).first;
  const double at_pi = utility_pair(kPi, theta2, spec).first;
  return utility_at_least(at_zero, at_pi) ? 0.0 : kPi;
}

/// Candidate maximisers of player 2's utility for fixed theta1:
///   cos(theta2) = (1 + 4c - 12c^2 -+ 8 sqrt(6) D sin(theta1)) / (12c^2 - 12c - 49),
///   D = sqrt(5 + 2c - cos(2 theta1)),
/// minus root on [0, 2pi/3], plus root on [pi/2, pi]. Both are zeros of
/// 2 x2 - x1, so u2 = 0 there; the sin^2 variant of this expression only
/// agrees at theta1 = 0 and pi. Empty entries are NaN.
inline std::pair<double, double> p2_response_branches(double theta1) {
  theta1 = detail::checked_angle(theta1, 0, kPi, "theta1");
  const double c = std::cos(theta1);
  const double s = std::sin(theta1);
  const double delta = std::sqrt(5 + 2 * c - std::cos(2 * theta1));
  const double base = 1 + 4 * c - 12 * c * c;
  const double den = 12 * c * c - 12 * c - 49;
  const double spread = 8 * std::sqrt(6.0) * delta * s;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double minus = theta1 <= 2 * kPi / 3 + kAngleSlack
                           ? std::acos(std::clamp((base - spread) / den, -1.0, 1.0))
                           : nan;
  const double plus = theta1 >= kPi / 2 - kAngleSlack
                          ? std::acos(std::clamp((base + spread) / den, -1.0, 1.0))
                          : nan;
  return {minus, plus};
}

/// Player 2's best response to theta1; in the branch overlap the candidate
/// with the higher utility wins (minus branch on ties).
inline double best_response_p2(double theta1, const GameSpec& spec = GameSpec::mismatched_phases()) {
  const auto [minus, plus] = p2_response_branches(theta1);
  theta1 = std::clamp(theta1, 0.0, kPi);
  if (std::isnan(plus)) return minus;
  if (std::isnan(minus)) return plus;
  const double u_minus = utility_pair(theta1, minus, spec).second;
  const double u_plus = utility_pair(theta1, plus, spec).second;
  return utility_at_least(u_minus, u_plus) ? minus : plus;
}

// ---------------------------------------------------------------------------
// Grid analysis.

/// Equally spaced grid {n * upper / k}, n = 0..k.
inline std::vector<double> strategy_grid(int k, double upper) {
  detail::require(k >= 1, "grid resolution must be >= 1");
  std::vector<double> g(static_cast<std::size_t>(k) + 1);
  for (int n = 0; n <= k; ++n) g[n] = upper * n / k;
  g.back() = upper;
  return g;
}

struct GridCell {
  int row = 0;  // player 1 grid index
  int col = 0;  // player 2 grid index
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Player utilities sampled over a (k+1) x (k+1) grid; u1[m][n] = u1(grid[m], grid[n]).
struct UtilityGrid {
  std::vector<double> grid;
  std::vector<std::vector<double>> u1;
  std::vector<std::vector<double>> u2;
};

inline UtilityGrid sample_utilities(const GameSpec& spec, int k) {
  detail::require(spec.n_players == 2, "grid sampling needs a two-player spec");
  UtilityGrid out;
  out.grid = strategy_grid(k, spec.upper_bound());
  const std::size_t n = out.grid.size();
  out.u1.assign(n, std::vector<double>(n));
  out.u2.assign(n, std::vector<double>(n));
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t j = 0; j < n; ++j) {
      const auto [a, b] = utility_pair(out.grid[m], out.grid[j], spec);
      out.u1[m][j] = a;
      out.u2[m][j] = b;
    }
  return out;
}

/// Grid indices of player 1's best responses to column `col` (ties included).
inline std::vector<int> grid_best_rows(const UtilityGrid& g, int col) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& row : g.u1) best = std::max(best, row[col]);
  std::vector<int> out;
  for (std::size_t m = 0; m < g.u1.size(); ++m)
    if (utility_at_least(g.u1[m][col], best)) out.push_back(static_cast<int>(m));
  return out;
}

/// Grid indices of player 2's best responses to row `row` (ties included).
inline std::vector<int> grid_best_cols(const UtilityGrid& g, int row) {
  const auto& r = g.u2[row];
  const double best = *std::max_element(r.begin(), r.end());
  std::vector<int> out;
  for (std::size_t j = 0; j < r.size(); ++j)
    if (utility_at_least(r[j], best)) out.push_back(static_cast<int>(j));
  return out;
}

/// Every grid cell at which both players weakly best-respond, in row-major
/// order. An empty result certifies that the grid game has no pure Nash
/// equilibrium.
inline std::vector<GridCell> pure_nash_scan(const GameSpec& spec, int k) {
  detail::require(k >= 2, "pure_nash_scan needs k >= 2");
  const UtilityGrid g = sample_utilities(spec, k);
  const int n = static_cast<int>(g.grid.size());
  std::vector<double> col_best(n, -std::numeric_limits<double>::infinity());
  std::vector<double> row_best(n, -std::numeric_limits<double>::infinity());
  for (int m = 0; m < n; ++m)
    for (int j = 0; j < n; ++j) {
      col_best[j] = std::max(col_best[j], g.u1[m][j]);
      row_best[m] = std::max(row_best[m], g.u2[m][j]);
    }
  std::vector<GridCell> out;
  for (int m = 0; m < n; ++m)
    for (int j = 0; j < n; ++j)
      if (utility_at_least(g.u1[m][j], col_best[j]) && utility_at_least(g.u2[m][j], row_best[m]))
        out.push_back({m, j});
  return out;
}

/// Exhaustive pure-Nash search of the symmetric N-player classical game on
/// the grid {100 n / k}. A profile is an equilibrium iff every entry is a
/// (weak) grid best response to the sum of the others; since utilities only
/// depend on a player's own value and the total, the search runs over
/// totals and sorted profiles instead of all (k+1)^N tuples.
///
/// Returns equilibria as non-decreasing grid-index tuples (each stands for
/// all of its permutations), up to `limit` entries.
inline std::vector<std::vector<int>> classical_grid_nash(const GameSpec& spec, int k,
                                                         std::size_t limit = 1000) {
  detail::require(spec.scale == Scale::Classical, "classical_grid_nash needs a classical spec");
  detail::require(k >= 1, "grid resolution must be >= 1");
  const int n_players = spec.n_players;
  const double step = kClassicalMax / k;
  const double scale = spec.p / n_players;
  // ok[t][v]: value index v best-responds when the profile total is t.
  const int max_total = n_players * k;
  std::vector<std::vector<char>> ok(max_total + 1, std::vector<char>(k + 1, 0));
  for (int others = 0; others <= (n_players - 1) * k; ++others) {
    std::vector<double> u(k + 1);
    double best = -std::numeric_limits<double>::infinity();
    for (int v = 0; v <= k; ++v) {
      const double d = v * step - scale * (v + others) * step;
      u[v] = -d * d;
      best = std::max(best, u[v]);
    }
    for (int v = 0; v <= k; ++v)
      if (utility_at_least(u[v], best)) ok[others + v][v] = 1;
  }

  std::vector<std::vector<int>> found;
  std::vector<int> current;
  // Depth-first over non-decreasing tuples whose entries are admissible for total t.
  std::function<void(int, int, int)> extend = [&](int t, int remaining_sum, int min_v) {
    if (found.size() >= limit) return;
    if (static_cast<int>(current.size()) == n_players) {
      if (remaining_sum == 0) found.push_back(current);
      return;
    }
    const int slots = n_players - static_cast<int>(current.size());
    for (int v = min_v; v <= k && v * slots <= remaining_sum; ++v) {
      if (!ok[t][v]) continue;
      if (remaining_sum - v > (slots - 1) * k) continue;
      current.push_back(v);
      extend(t, remaining_sum - v, v);
      current.pop_back();
    }
  };
  for (int t = 0; t <= max_total && found.size() < limit; ++t) extend(t, t, 0);
  return found;
}

// ---------------------------------------------------------------------------
// Surface export.

enum class SliceAxis { Theta1, Phi1, Theta2, Phi2 };

/// A point of the two-player quantum strategy space (theta1, phi1, theta2, phi2).
struct QuantumPoint {
  double theta1 = 0, phi1 = 0, theta2 = 0, phi2 = 0;

  double& at(SliceAxis a) {
    switch (a) {
      case SliceAxis::Theta1: return theta1;
      case SliceAxis::Phi1: return phi1;
      case SliceAxis::Theta2: return theta2;
      case SliceAxis::Phi2: return phi2;
    }
    return theta1;
  }
};

inline double axis_upper(SliceAxis a) {
  return (a == SliceAxis::Theta1 || a == SliceAxis::Theta2) ? kPi : 2 * kPi;
}

struct SurfaceSample {
  double x = 0, y = 0, u1 = 0, u2 = 0;
};

/// Samples (u1, u2) over a 2-D slice of the quantum strategy space: the two
/// chosen axes sweep their ranges on a (k+1) x (k+1) grid while the remaining
/// coordinates stay at `base`. Gamma and p come from `spec`.
inline std::vector<SurfaceSample> utility_slice(const GameSpec& spec, SliceAxis x_axis,
                                                SliceAxis y_axis, const QuantumPoint& base,
                                                int k) {
  detail::require(spec.scale == Scale::Quantum && spec.n_players == 2,
                  "utility slices need a two-player quantum spec");
  detail::require(x_axis != y_axis, "slice axes must differ");
  const std::vector<double> xs = strategy_grid(k, axis_upper(x_axis));
  const std::vector<double> ys = strategy_grid(k, axis_upper(y_axis));
  std::vector<SurfaceSample> out;
  out.reserve(xs.size() * ys.size());
  for (double x : xs)
    for (double y : ys) {
      QuantumPoint pt = base;
      pt.at(x_axis) = x;
      pt.at(y_axis) = y;
      GameSpec local = spec;
      local.phi = {pt.phi1, pt.phi2};
      const auto [a, b] = utility_pair(pt.theta1, pt.theta2, local);
      out.push_back({x, y, a, b});
    }
  return out;
}

}  // namespace qsm
