#pragma once

// Exact statevector simulation of the valuation-mediation circuit
//
//   |psi_f> = J^dagger(gamma) (U_1 x ... x U_N) J(gamma) |0...0>
//
// with J(gamma) = exp(-i gamma/2 X x ... x X) and the Eisert-style local gate
//
//   U(theta, phi, psi) = [  e^{i phi} cos(theta/2)   e^{-i psi} sin(theta/2) ]
//                        [ -e^{i psi} sin(theta/2)   e^{-i phi} cos(theta/2) ]
//
// Basis layout: amplitude index b encodes qubit 0 in its most significant
// bit, i.e. qubit i is bit (n - 1 - i) of b.
//
// Readout: the adjusted valuation of qubit i is the probability that it reads
// |1>, (1 - <sigma_z^(i)>) / 2. This is the convention under which the
// two-player closed forms (closed_form_pair) hold and under which gamma = 0
// reproduces the unmediated (classical) valuations.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qsm/error.hpp"

namespace qsm {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr int kMaxQubits = 12;
// Slack admitted on angle range checks; values inside the slack are clamped.
inline constexpr double kAngleSlack = 1e-12;

namespace detail {

inline double checked_angle(double v, double lo, double hi, const char* name) {
  require(std::isfinite(v), std::string(name) + " must be finite");
  require(v >= lo - kAngleSlack && v <= hi + kAngleSlack,
          std::string(name) + " out of range");
  return std::clamp(v, lo, hi);
}

}  // namespace detail

/// 2x2 complex matrix in row-major order.
using Gate2 = std::array<cplx, 4>;

namespace ops {

inline constexpr Gate2 sigma_x{cplx{0, 0}, cplx{1, 0}, cplx{1, 0}, cplx{0, 0}};
inline constexpr Gate2 sigma_z{cplx{1, 0}, cplx{0, 0}, cplx{0, 0}, cplx{-1, 0}};

/// Local valuation gate U(theta, phi, psi).
inline Gate2 local_gate(double theta, double phi, double psi) {
  const double c = std::cos(theta / 2);
  const double s = std::sin(theta / 2);
  const cplx eph = std::polar(1.0, phi);
  const cplx eps = std::polar(1.0, psi);
  return {eph * c, std::conj(eps) * s, -eps * s, std::conj(eph) * c};
}

inline Gate2 adjoint(const Gate2& g) {
  return {std::conj(g[0]), std::conj(g[2]), std::conj(g[1]), std::conj(g[3])};
}

inline Gate2 multiply(const Gate2& l, const Gate2& r) {
  return {l[0] * r[0] + l[1] * r[2], l[0] * r[1] + l[1] * r[3],
          l[2] * r[0] + l[3] * r[2], l[2] * r[1] + l[3] * r[3]};
}

}  // namespace ops

/// Amplitudes of an n-qubit register, 1 <= n <= kMaxQubits.
class Statevector {
 public:
  /// |0...0>
  explicit Statevector(int n_qubits) : n_(n_qubits) {
    detail::require(n_qubits >= 1 && n_qubits <= kMaxQubits,
                    "qubit count must lie in [1, 12]");
    amps_.assign(std::size_t{1} << n_qubits, cplx{0, 0});
    amps_[0] = 1.0;
  }

  int n_qubits() const { return n_; }
  std::size_t dimension() const { return amps_.size(); }
  std::span<const cplx> amplitudes() const { return amps_; }
  const cplx& amplitude(std::size_t basis) const { return amps_.at(basis); }

  double norm_squared() const {
    double acc = 0;
    for (const auto& a : amps_) acc += std::norm(a);
    return acc;
  }

  /// Applies J(gamma), or J^dagger(gamma) when `adjoint` is set, using
  /// J = cos(gamma/2) I - i sin(gamma/2) X^{(x)N}; X^{(x)N} maps b to ~b.
  void apply_entangler(double gamma, bool adjoint = false) {
    const double c = std::cos(gamma / 2);
    const double s = std::sin(gamma / 2);
    const cplx off = adjoint ? cplx{0, s} : cplx{0, -s};
    const std::size_t mask = amps_.size() - 1;
    // b and ~b form disjoint pairs; visit each pair once via the lower index.
    for (std::size_t b = 0; b < amps_.size(); ++b) {
      const std::size_t partner = b ^ mask;
      if (partner < b) continue;
      const cplx lo = amps_[b];
      const cplx hi = amps_[partner];
      amps_[b] = c * lo + off * hi;
      amps_[partner] = c * hi + off * lo;
    }
  }

  /// Applies a single-qubit gate to `qubit` (0-based, qubit 0 is the MSB).
  void apply_local(int qubit, const Gate2& g) {
    detail::require(qubit >= 0 && qubit < n_, "qubit index out of range");
    const std::size_t stride = std::size_t{1} << (n_ - 1 - qubit);
    for (std::size_t base = 0; base < amps_.size(); base += 2 * stride) {
      for (std::size_t off = 0; off < stride; ++off) {
        const std::size_t i0 = base + off;
        const std::size_t i1 = i0 + stride;
        const cplx a0 = amps_[i0];
        const cplx a1 = amps_[i1];
        amps_[i0] = g[0] * a0 + g[1] * a1;
        amps_[i1] = g[2] * a0 + g[3] * a1;
      }
    }
  }

  /// Probability that `qubit` reads |1>.
  double probability_one(int qubit) const {
    detail::require(qubit >= 0 && qubit < n_, "qubit index out of range");
    const std::size_t bit = std::size_t{1} << (n_ - 1 - qubit);
    double acc = 0;
    for (std::size_t b = 0; b < amps_.size(); ++b)
      if (b & bit) acc += std::norm(amps_[b]);
    return acc;
  }

  /// <sigma_z^(qubit)>
  double expectation_z(int qubit) const { return 1.0 - 2.0 * probability_one(qubit); }

 private:
  int n_;
  std::vector<cplx> amps_;
};

/// Angles for one evaluation of the mediation circuit.
struct CircuitParams {
  double gamma = 0;
  std::vector<double> theta;
  std::vector<double> phi;
  std::vector<double> psi;

  int n_qubits() const { return static_cast<int>(theta.size()); }

  /// Throws DomainError on length mismatch or out-of-range angles; returns a
  /// copy with boundary rounding clamped into range.
  CircuitParams validated() const {
    detail::require(!theta.empty() && theta.size() <= kMaxQubits,
                    "qubit count must lie in [1, 12]");
    detail::require(phi.size() == theta.size() && psi.size() == theta.size(),
                    "theta, phi and psi must have equal length");
    CircuitParams out;
    out.gamma = detail::checked_angle(gamma, 0, kPi / 2, "gamma");
    out.theta.reserve(theta.size());
    out.phi.reserve(theta.size());
    out.psi.reserve(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      out.theta.push_back(detail::checked_angle(theta[i], 0, kPi, "theta"));
      out.phi.push_back(detail::checked_angle(phi[i], 0, 2 * kPi, "phi"));
      out.psi.push_back(detail::checked_angle(psi[i], 0, 2 * kPi, "psi"));
    }
    return out;
  }

  /// Convenience: phases all zero.
  static CircuitParams unphased(double gamma, std::vector<double> theta) {
    const std::size_t n = theta.size();
    return {gamma, std::move(theta), std::vector<double>(n, 0.0),
            std::vector<double>(n, 0.0)};
  }
};

/// J(gamma)|0...0> = cos(gamma/2)|0...0> - i sin(gamma/2)|1...1>.
inline Statevector entangler_state(double gamma, int n) {
  gamma = detail::checked_angle(gamma, 0, kPi / 2, "gamma");
  Statevector sv(n);
  sv.apply_entangler(gamma);
  return sv;
}

/// Final state J^dagger (U_1 x ... x U_N) J |0...0>.
inline Statevector mediated_state(const CircuitParams& params) {
  const CircuitParams p = params.validated();
  Statevector sv(p.n_qubits());
  sv.apply_entangler(p.gamma);
  for (int q = 0; q < p.n_qubits(); ++q)
    sv.apply_local(q, ops::local_gate(p.theta[q], p.phi[q], p.psi[q]));
  sv.apply_entangler(p.gamma, /*adjoint=*/true);
  return sv;
}

/// Per-qubit adjusted valuations in [0, 1] (probability of reading |1>).
inline std::vector<double> adjusted_valuations(const CircuitParams& params) {
  const Statevector sv = mediated_state(params);
  std::vector<double> out(static_cast<std::size_t>(sv.n_qubits()));
  for (int q = 0; q < sv.n_qubits(); ++q)
    out[q] = std::clamp(sv.probability_one(q), 0.0, 1.0);
  return out;
}

/// Two-player adjusted valuations at zero phases, in closed form.
inline std::pair<double, double> closed_form_pair(double theta1, double theta2,
                                                  double gamma) {
  theta1 = detail::checked_angle(theta1, 0, kPi, "theta1");
  theta2 = detail::checked_angle(theta2, 0, kPi, "theta2");
  gamma = detail::checked_angle(gamma, 0, kPi / 2, "gamma");
  const double c2 = std::cos(gamma) * std::cos(gamma);
  const double s2 = std::sin(gamma) * std::sin(gamma);
  const double ct1 = std::cos(theta1);
  const double ct2 = std::cos(theta2);
  return {(1 - c2 * ct1 - s2 * ct2) / 2, (1 - c2 * ct2 - s2 * ct1) / 2};
}

/// Angle encoding of a round's cash valuations: theta_i = pi * v_i / v_max.
struct MarketEncoding {
  std::vector<double> theta;
  double max = 0;
  // v_max == 0: angles are all zero and no circuit should be evaluated.
  bool degenerate = false;

  /// Maps adjusted valuations in [0, 1] back to cash units.
  std::vector<double> to_cash(std::span<const double> adjusted) const {
    std::vector<double> out(adjusted.begin(), adjusted.end());
    for (double& v : out) v = degenerate ? 0.0 : v * max;
    return out;
  }
};

inline MarketEncoding rescale_to_market(std::span<const double> raw) {
  MarketEncoding enc;
  for (double v : raw) {
    detail::require(std::isfinite(v) && v >= 0, "raw valuations must be finite and >= 0");
    enc.max = std::max(enc.max, v);
  }
  enc.theta.assign(raw.size(), 0.0);
  if (enc.max == 0) {
    enc.degenerate = true;
    return enc;
  }
  for (std::size_t i = 0; i < raw.size(); ++i)
    enc.theta[i] = std::min(kPi, kPi * (raw[i] / enc.max));
  return enc;
}

}  // namespace qsm
