#pragma once

// Mixed-strategy Nash equilibria of discretised two-player games.
//
// enumerate_mixed() first removes strictly dominated strategies (by a pure
// strategy or a two-strategy mixture), which leaves the equilibrium set
// unchanged. The reduced game is then solved by support enumeration when the
// number of equal-size support pairs, C(m + n, m), fits the budget (the
// default budget admits every 13 x 13 game), and by Lemke-Howson from every
// label otherwise. Every reported profile passes an epsilon-best-response
// audit against the unperturbed payoffs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qsm/error.hpp"
#include "qsm/game.hpp"

namespace qsm::nash {

inline constexpr double kAuditEps = 1e-8;
inline constexpr double kSupportEps = 1e-9;
inline constexpr double kDedupTol = 1e-7;
inline constexpr double kPerturbation = 1e-9;

struct Bimatrix {
  Eigen::MatrixXd a;  // row player payoffs
  Eigen::MatrixXd b;  // column player payoffs
  std::vector<double> grid;  // strategy labels shared by both players

  Eigen::Index rows() const { return a.rows(); }
  Eigen::Index cols() const { return a.cols(); }

  void validate() const {
    qsm::detail::require(a.rows() > 0 && a.cols() > 0, "payoff matrices must be non-empty");
    qsm::detail::require(a.rows() == b.rows() && a.cols() == b.cols(),
                    "payoff matrices must have identical shape");
    qsm::detail::require(a.allFinite() && b.allFinite(), "payoffs must be finite");
    if (!grid.empty()) {
      qsm::detail::require(static_cast<Eigen::Index>(grid.size()) == a.rows() &&
                          static_cast<Eigen::Index>(grid.size()) == a.cols(),
                      "grid length must match the matrix dimensions");
      for (std::size_t i = 1; i < grid.size(); ++i)
        qsm::detail::require(grid[i] > grid[i - 1], "grid must be strictly increasing");
    }
  }
};

struct MixedProfile {
  Eigen::VectorXd w1;
  Eigen::VectorXd w2;
  // Set when the profile came out of a singular indifference system or has
  // more pure best responses than support strategies.
  bool degenerate = false;

  static std::vector<int> support_of(const Eigen::VectorXd& w) {
    std::vector<int> s;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w[i] > kSupportEps) s.push_back(static_cast<int>(i));
    return s;
  }
  std::vector<int> support1() const { return support_of(w1); }
  std::vector<int> support2() const { return support_of(w2); }
};

enum class Completeness {
  SupportEnumeration,      // all equal-size support pairs of the reduced game
  LemkeHowsonBestEffort,   // one path per starting label; may miss equilibria
};

inline std::string to_string(Completeness c) {
  return c == Completeness::SupportEnumeration ? "support-enumeration" : "lemke-howson-best-effort";
}

struct EnumerationOptions {
  // Largest C(m + n, m) solved by support enumeration; C(26, 13).
  std::uint64_t support_pair_budget = 10'400'600;
  bool reduce_dominated = true;
};

struct EnumerationResult {
  std::vector<MixedProfile> equilibria;
  Completeness completeness = Completeness::SupportEnumeration;
  std::vector<int> kept_rows;  // strategies surviving dominance elimination
  std::vector<int> kept_cols;
  bool singular_systems = false;
};

// ---------------------------------------------------------------------------

/// Discretises a two-player game on the grid {n * upper / k}, n = 0..k.
inline Bimatrix build_bimatrix(const GameSpec& spec, int k) {
  qsm::detail::require(k >= 1, "k must be >= 1");
  qsm::detail::require(spec.n_players == 2, "bimatrix games need two players");
  const UtilityGrid g = sample_utilities(spec, k);
  const Eigen::Index n = static_cast<Eigen::Index>(g.grid.size());
  Bimatrix out{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n), g.grid};
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index j = 0; j < n; ++j) {
      out.a(m, j) = g.u1[m][j];
      out.b(m, j) = g.u2[m][j];
    }
  return out;
}

/// Largest gain either player can make by a pure deviation.
inline std::pair<double, double> deviation_gains(const MixedProfile& prof, const Bimatrix& game) {
  const Eigen::VectorXd row_payoffs = game.a * prof.w2;
  const Eigen::VectorXd col_payoffs = game.b.transpose() * prof.w1;
  return {row_payoffs.maxCoeff() - prof.w1.dot(row_payoffs),
          col_payoffs.maxCoeff() - prof.w2.dot(col_payoffs)};
}

inline bool is_probability_vector(const Eigen::VectorXd& w) {
  return w.size() > 0 && w.minCoeff() >= 0 && std::abs(w.sum() - 1) <= 1e-9;
}

/// True when both weight vectors are valid and no pure deviation gains more than eps.
inline bool passes_audit(const MixedProfile& prof, const Bimatrix& game, double eps = kAuditEps) {
  if (prof.w1.size() != game.rows() || prof.w2.size() != game.cols()) return false;
  if (!is_probability_vector(prof.w1) || !is_probability_vector(prof.w2)) return false;
  const auto [g1, g2] = deviation_gains(prof, game);
  return g1 <= eps && g2 <= eps;
}

/// Expected strategy labels (sum_n w[n] * grid[n]) of both players.
inline std::pair<double, double> average_strategy(const MixedProfile& prof, const Bimatrix& game) {
  qsm::detail::require(static_cast<Eigen::Index>(game.grid.size()) == prof.w1.size() &&
                      static_cast<Eigen::Index>(game.grid.size()) == prof.w2.size(),
                  "profile does not fit the game grid");
  const Eigen::Map<const Eigen::VectorXd> grid(game.grid.data(),
                                               static_cast<Eigen::Index>(game.grid.size()));
  return {prof.w1.dot(grid), prof.w2.dot(grid)};
}

// ---------------------------------------------------------------------------
// Iterated strict dominance.

namespace detail {

// Is row `target` strictly dominated, over `cols`, by a * row r1 + (1 - a) * row r2
// for some a in [0, 1]? Each column bounds a to a half-line.
inline bool dominated_by_pair(const Eigen::MatrixXd& pay, int target, int r1, int r2,
                              std::span<const int> cols) {
  constexpr double margin = 1e-12;
  double lo = 0, hi = 1;
  for (int j : cols) {
    const double d = pay(r1, j) - pay(r2, j);
    const double need = pay(target, j) - pay(r2, j) + margin;
    if (std::abs(d) < 1e-15) {
      if (need >= 0) return false;
    } else if (d > 0) {
      lo = std::max(lo, need / d);
    } else {
      hi = std::min(hi, need / d);
    }
    if (lo > hi) return false;
  }
  return true;
}

inline std::vector<int> undominated_rows(const Eigen::MatrixXd& pay, const std::vector<int>& rows,
                                         const std::vector<int>& cols) {
  std::vector<int> kept;
  for (int target : rows) {
    bool dominated = false;
    for (std::size_t x = 0; x < rows.size() && !dominated; ++x)
      for (std::size_t y = x; y < rows.size() && !dominated; ++y) {
        const int r1 = rows[x], r2 = rows[y];
        if (r1 == target || r2 == target) continue;
        dominated = dominated_by_pair(pay, target, r1, r2, cols);
      }
    if (!dominated) kept.push_back(target);
  }
  return kept;
}

}  // namespace detail

/// Removes strictly dominated rows and columns until none remain.
inline std::pair<std::vector<int>, std::vector<int>> reduce_dominated(const Bimatrix& game) {
  std::vector<int> rows(static_cast<std::size_t>(game.rows()));
  std::vector<int> cols(static_cast<std::size_t>(game.cols()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = static_cast<int>(j);
  const Eigen::MatrixXd bt = game.b.transpose();
  for (;;) {
    std::vector<int> r = detail::undominated_rows(game.a, rows, cols);
    std::vector<int> c = detail::undominated_rows(bt, cols, r);
    const bool changed = r.size() != rows.size() || c.size() != cols.size();
    rows = std::move(r);
    cols = std::move(c);
    if (!changed) return {rows, cols};
  }
}

inline Bimatrix subgame(const Bimatrix& game, const std::vector<int>& rows, const std::vector<int>& cols) {
  Bimatrix out{Eigen::MatrixXd(rows.size(), cols.size()), Eigen::MatrixXd(rows.size(), cols.size()), {}};
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out.a(i, j) = game.a(rows[i], cols[j]);
      out.b(i, j) = game.b(rows[i], cols[j]);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Support enumeration.

namespace detail {

// Solves pay[I, J] w = v 1, sum(w) = 1 for w (weights over J). Returns nullopt
// when the system is singular.
inline std::optional<Eigen::VectorXd> indifference_weights(const Eigen::MatrixXd& pay,
                                                           std::span<const int> I,
                                                           std::span<const int> J) {
  const Eigen::Index s = static_cast<Eigen::Index>(I.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s + 1, s + 1);
  for (Eigen::Index r = 0; r < s; ++r) {
    for (Eigen::Index c = 0; c < s; ++c) m(r, c) = pay(I[r], J[c]);
    m(r, s) = -1;
  }
  for (Eigen::Index c = 0; c < s; ++c) m(s, c) = 1;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
  rhs[s] = 1;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) return std::nullopt;
  return Eigen::VectorXd(lu.solve(rhs).head(s));
}

inline bool next_combination(std::vector<int>& c, int n) {
  const int k = static_cast<int>(c.size());
  int i = k - 1;
  while (i >= 0 && c[i] == n - k + i) --i;
  if (i < 0) return false;
  ++c[i];
  for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
  return true;
}

inline Eigen::VectorXd scatter(const Eigen::VectorXd& w, std::span<const int> idx, Eigen::Index n) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = w[static_cast<Eigen::Index>(i)];
  return out;
}

// Deterministic perturbation pattern: distinct entries in (0, 1].
inline Eigen::MatrixXd perturbation_pattern(Eigen::Index rows, Eigen::Index cols, int salt) {
  Eigen::MatrixXd p(rows, cols);
  const double total = static_cast<double>(rows * cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      p(i, j) = static_cast<double>((i * cols + j) * (salt == 0 ? 1 : 7) % (rows * cols) + 1) / total;
  return p;
}

inline bool has_surplus_best_responses(const MixedProfile& prof, const Bimatrix& game) {
  const Eigen::VectorXd rp = game.a * prof.w2;
  const Eigen::VectorXd cp = game.b.transpose() * prof.w1;
  auto count_best = [](const Eigen::VectorXd& v) {
    const double best = v.maxCoeff();
    return static_cast<std::size_t>((v.array() >= best - kSupportEps).count());
  };
  return count_best(rp) > prof.support1().size() || count_best(cp) > prof.support2().size();
}

// Tries one support pair against (pa, pb); the audit runs on `game`.
inline std::optional<MixedProfile> try_support_pair(const Eigen::MatrixXd& pa,
                                                    const Eigen::MatrixXd& pb_t,
                                                    const Bimatrix& game,
                                                    std::span<const int> I,
                                                    std::span<const int> J, bool& singular) {
  // Column weights make the row player indifferent across I, and vice versa.
  const auto y = indifference_weights(pa, I, J);
  if (!y) {
    singular = true;
    return std::nullopt;
  }
  if (y->minCoeff() < -1e-12) return std::nullopt;
  const auto x = indifference_weights(pb_t, J, I);
  if (!x) {
    singular = true;
    return std::nullopt;
  }
  if (x->minCoeff() < -1e-12) return std::nullopt;
  MixedProfile prof;
  prof.w1 = scatter(x->cwiseMax(0.0), I, game.rows());
  prof.w2 = scatter(y->cwiseMax(0.0), J, game.cols());
  prof.w1 /= prof.w1.sum();
  prof.w2 /= prof.w2.sum();
  if (!passes_audit(prof, game)) return std::nullopt;
  return prof;
}

inline bool same_profile(const MixedProfile& l, const MixedProfile& r) {
  return (l.w1 - r.w1).lpNorm<Eigen::Infinity>() <= kDedupTol &&
         (l.w2 - r.w2).lpNorm<Eigen::Infinity>() <= kDedupTol;
}

inline void add_unique(std::vector<MixedProfile>& out, MixedProfile prof) {
  for (auto& e : out)
    if (same_profile(e, prof)) {
      e.degenerate = e.degenerate || prof.degenerate;
      return;
    }
  out.push_back(std::move(prof));
}

inline bool profile_less(const MixedProfile& l, const MixedProfile& r) {
  const auto ls1 = l.support1(), rs1 = r.support1(), ls2 = l.support2(), rs2 = r.support2();
  const auto lsize = ls1.size() + ls2.size(), rsize = rs1.size() + rs2.size();
  if (lsize != rsize) return lsize < rsize;
  if (ls1 != rs1) return ls1 < rs1;
  if (ls2 != rs2) return ls2 < rs2;
  for (Eigen::Index i = 0; i < l.w1.size(); ++i)
    if (l.w1[i] != r.w1[i]) return l.w1[i] < r.w1[i];
  for (Eigen::Index i = 0; i < l.w2.size(); ++i)
    if (l.w2[i] != r.w2[i]) return l.w2[i] < r.w2[i];
  return false;
}

inline void sort_profiles(std::vector<MixedProfile>& v) {
  std::sort(v.begin(), v.end(), profile_less);
}

}  // namespace detail

/// Number of equal-size support pairs of an m x n game, C(m + n, m),
/// saturating at UINT64_MAX.
inline std::uint64_t equal_support_pairs(Eigen::Index m, Eigen::Index n) {
  std::uint64_t c = 1;
  const Eigen::Index k = std::min(m, n);
  for (Eigen::Index i = 1; i <= k; ++i) {
    const std::uint64_t num = static_cast<std::uint64_t>(m + n - k + i);
    if (c > std::numeric_limits<std::uint64_t>::max() / num) return std::numeric_limits<std::uint64_t>::max();
    c = c * num / static_cast<std::uint64_t>(i);
  }
  return c;
}

/// All equilibria found by solving the indifference systems of every
/// equal-size support pair. Singular systems are re-solved on a game
/// perturbed by 1e-9 and kept only if they pass the unperturbed audit.
inline std::vector<MixedProfile> support_enumeration(const Bimatrix& game, bool* singular_seen = nullptr) {
  game.validate();
  const int m = static_cast<int>(game.rows());
  const int n = static_cast<int>(game.cols());
  const Eigen::MatrixXd bt = game.b.transpose();
  const Eigen::MatrixXd pa = game.a + kPerturbation * detail::perturbation_pattern(m, n, 0);
  const Eigen::MatrixXd pbt =
      (game.b + kPerturbation * detail::perturbation_pattern(m, n, 1)).transpose();

  std::vector<MixedProfile> found;
  bool any_singular = false;
  for (int s = 1; s <= std::min(m, n); ++s) {
    std::vector<int> I(s);
    for (int i = 0; i < s; ++i) I[i] = i;
    do {
      std::vector<int> J(s);
      for (int j = 0; j < s; ++j) J[j] = j;
      do {
        bool singular = false;
        auto prof = detail::try_support_pair(game.a, bt, game, I, J, singular);
        if (singular) {
          any_singular = true;
          bool again = false;
          prof = detail::try_support_pair(pa, pbt, game, I, J, again);
          if (prof) prof->degenerate = true;
        }
        if (prof) {
          prof->degenerate = prof->degenerate || detail::has_surplus_best_responses(*prof, game);
          detail::add_unique(found, std::move(*prof));
        }
      } while (detail::next_combination(J, n));
    } while (detail::next_combination(I, m));
  }
  if (singular_seen) *singular_seen = any_singular;
  detail::sort_profiles(found);
  return found;
}

// ---------------------------------------------------------------------------
// Lemke-Howson.

namespace detail {

// Complementary pivoting tableau over labels 0..m+n-1 (rows then columns);
// column l of `t` holds the variable carrying label l, the last column the
// right-hand side.
struct LhTableau {
  Eigen::MatrixXd t;
  std::vector<int> basis;
  std::vector<int> lex_cols;  // columns of the initial basis, for lexicographic ratio ties

  // Pivots `entering` into the basis; returns the label that leaves, or -1
  // when the column is unbounded.
  int pivot(int entering) {
    const Eigen::Index rhs = t.cols() - 1;
    int best = -1;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      const double piv = t(r, entering);
      if (piv <= 1e-12) continue;
      if (best < 0 || lex_less(r, best, entering, rhs)) best = static_cast<int>(r);
    }
    if (best < 0) return -1;
    const int leaving = basis[best];
    t.row(best) /= t(best, entering);
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      if (r != best && t(r, entering) != 0) t.row(r) -= t(r, entering) * t.row(best);
    basis[best] = entering;
    return leaving;
  }

  bool lex_less(Eigen::Index r, Eigen::Index q, int e, Eigen::Index rhs) const {
    const double dr = t(r, e), dq = t(q, e);
    auto cmp = [&](Eigen::Index c) { return t(r, c) / dr - t(q, c) / dq; };
    const double d0 = cmp(rhs);
    if (std::abs(d0) > 1e-12) return d0 < 0;
    for (int c : lex_cols) {
      const double d = cmp(c);
      if (std::abs(d) > 1e-12) return d < 0;
    }
    return r < q;
  }
};

}  // namespace detail

/// One Lemke-Howson path started by dropping `label` (0..m-1 rows,
/// m..m+n-1 columns). Returns nullopt if the path fails to close or the
/// endpoint fails the audit.
inline std::optional<MixedProfile> lemke_howson(const Bimatrix& game, int label, int max_pivots = 100000) {
  game.validate();
  const int m = static_cast<int>(game.rows());
  const int n = static_cast<int>(game.cols());
  qsm::detail::require(label >= 0 && label < m + n, "label out of range");
  const double shift = 1.0 - std::min(game.a.minCoeff(), game.b.minCoeff());
  const Eigen::MatrixXd a = game.a.array() + shift;
  const Eigen::MatrixXd b = game.b.array() + shift;

  // x-tableau: B^T x + s = 1, n rows; x carries labels 0..m-1, s labels m..
  detail::LhTableau px{Eigen::MatrixXd::Zero(n, m + n + 1), {}, {}};
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) px.t(j, i) = b(i, j);
    px.t(j, m + j) = 1;
    px.t(j, m + n) = 1;
    px.basis.push_back(m + j);
    px.lex_cols.push_back(m + j);
  }
  // y-tableau: A y + r = 1, m rows; r carries labels 0..m-1, y labels m..
  detail::LhTableau qy{Eigen::MatrixXd::Zero(m, m + n + 1), {}, {}};
  for (int i = 0; i < m; ++i) {
    qy.t(i, i) = 1;
    for (int j = 0; j < n; ++j) qy.t(i, m + j) = a(i, j);
    qy.t(i, m + n) = 1;
    qy.basis.push_back(i);
    qy.lex_cols.push_back(i);
  }

  int entering = label;
  bool in_x = label < m;
  for (int it = 0; it < max_pivots; ++it) {
    const int leaving = (in_x ? px : qy).pivot(entering);
    if (leaving < 0) return std::nullopt;
    if (leaving == label) {
      MixedProfile prof;
      prof.w1 = Eigen::VectorXd::Zero(m);
      prof.w2 = Eigen::VectorXd::Zero(n);
      for (int r = 0; r < n; ++r)
        if (px.basis[r] < m) prof.w1[px.basis[r]] = std::max(0.0, px.t(r, m + n));
      for (int r = 0; r < m; ++r)
        if (qy.basis[r] >= m) prof.w2[qy.basis[r] - m] = std::max(0.0, qy.t(r, m + n));
      if (prof.w1.sum() <= 0 || prof.w2.sum() <= 0) return std::nullopt;
      prof.w1 /= prof.w1.sum();
      prof.w2 /= prof.w2.sum();
      for (Eigen::Index i = 0; i < prof.w1.size(); ++i)
        if (prof.w1[i] < 1e-13) prof.w1[i] = 0;
      for (Eigen::Index i = 0; i < prof.w2.size(); ++i)
        if (prof.w2[i] < 1e-13) prof.w2[i] = 0;
      prof.w1 /= prof.w1.sum();
      prof.w2 /= prof.w2.sum();
      if (!passes_audit(prof, game)) return std::nullopt;
      prof.degenerate = detail::has_surplus_best_responses(prof, game);
      return prof;
    }
    entering = leaving;
    in_x = !in_x;
  }
  return std::nullopt;
}

/// Lemke-Howson from every label, deduplicated and sorted.
inline std::vector<MixedProfile> lemke_howson_all(const Bimatrix& game) {
  std::vector<MixedProfile> found;
  const int labels = static_cast<int>(game.rows() + game.cols());
  for (int l = 0; l < labels; ++l)
    if (auto prof = lemke_howson(game, l)) detail::add_unique(found, std::move(*prof));
  detail::sort_profiles(found);
  return found;
}

// ---------------------------------------------------------------------------

inline EnumerationResult enumerate_mixed(const Bimatrix& game, const EnumerationOptions& opt = {}) {
  game.validate();
  EnumerationResult res;
  if (opt.reduce_dominated) {
    std::tie(res.kept_rows, res.kept_cols) = reduce_dominated(game);
  } else {
    for (Eigen::Index i = 0; i < game.rows(); ++i) res.kept_rows.push_back(static_cast<int>(i));
    for (Eigen::Index j = 0; j < game.cols(); ++j) res.kept_cols.push_back(static_cast<int>(j));
  }
  const Bimatrix sub = subgame(game, res.kept_rows, res.kept_cols);

  std::vector<MixedProfile> local;
  if (equal_support_pairs(sub.rows(), sub.cols()) <= opt.support_pair_budget) {
    res.completeness = Completeness::SupportEnumeration;
    local = support_enumeration(sub, &res.singular_systems);
  } else {
    res.completeness = Completeness::LemkeHowsonBestEffort;
    local = lemke_howson_all(sub);
  }

  for (auto& prof : local) {
    MixedProfile full;
    full.w1 = detail::scatter(prof.w1, res.kept_rows, game.rows());
    full.w2 = detail::scatter(prof.w2, res.kept_cols, game.cols());
    full.degenerate = prof.degenerate || detail::has_surplus_best_responses(full, game);
    if (passes_audit(full, game)) detail::add_unique(res.equilibria, std::move(full));
  }
  detail::sort_profiles(res.equilibria);
  return res;
}

}  // namespace qsm::nash
