#pragma once

// Neural trading policies trained by REINFORCE with Adam.
//
// The policy is a 3 -> 32 -> 32 -> 1 ReLU network producing the mean mu of a
// unit-variance Gaussian; actions are a = mu + eps with eps ~ N(0, 1). Each
// trading round is a one-step episode, so the score-function gradient of
// R * log pi(a | mu) is R * (a - mu) * dmu/dparams.
//
// Flat parameter layout (used by snapshots and gradients):
//   W1 [32 x 3] row-major, b1 [32], W2 [32 x 32] row-major, b2 [32],
//   W3 [1 x 32], b3 [1]                                  -> 1217 values.

#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qsm/error.hpp"
#include "qsm/rng.hpp"

namespace qsm::agents {

inline constexpr int kInputs = 3;
inline constexpr int kHidden = 32;

struct Observation {
  double cash = 0;
  double stock = 0;
  double prev_price = 0;

  bool finite() const {
    return std::isfinite(cash) && std::isfinite(stock) && std::isfinite(prev_price);
  }
};

class PolicyNet {
 public:
  static constexpr std::size_t kW1 = 0;
  static constexpr std::size_t kB1 = kW1 + kHidden * kInputs;
  static constexpr std::size_t kW2 = kB1 + kHidden;
  static constexpr std::size_t kB2 = kW2 + kHidden * kHidden;
  static constexpr std::size_t kW3 = kB2 + kHidden;
  static constexpr std::size_t kB3 = kW3 + kHidden;
  static constexpr std::size_t kParamCount = kB3 + 1;

  using Vec = Eigen::Matrix<double, kHidden, 1>;
  using In = Eigen::Matrix<double, kInputs, 1>;

  /// All-zero parameters.
  PolicyNet() : params_(kParamCount, 0.0) {}

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static PolicyNet random(RandomStream& rng) {
    PolicyNet net;
    auto fill = [&](std::size_t from, std::size_t count, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < count; ++i) net.params_[from + i] = rng.uniform(-bound, bound);
    };
    fill(kW1, kHidden * kInputs, kInputs);
    fill(kW2, kHidden * kHidden, kHidden);
    fill(kW3, kHidden, kHidden);
    return net;
  }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// Intermediate values of one forward pass.
  struct Trace {
    In input;
    Vec pre1, act1, pre2, act2;
    double mu = 0;
  };

  Trace trace(const Observation& obs) const {
    detail::require(obs.finite(), "observation must be finite");
    Trace t;
    t.input << obs.cash, obs.stock, obs.prev_price;
    t.pre1 = w1() * t.input + b1();
    t.act1 = t.pre1.cwiseMax(0.0);
    t.pre2 = w2() * t.act1 + b2();
    t.act2 = t.pre2.cwiseMax(0.0);
    t.mu = w3().dot(t.act2) + params_[kB3];
    return t;
  }

  double forward(const Observation& obs) const { return trace(obs).mu; }

  /// d mu / d params in the flat layout.
  std::vector<double> gradient(const Observation& obs) const {
    const Trace t = trace(obs);
    std::vector<double> g(kParamCount, 0.0);
    // Output layer.
    for (int j = 0; j < kHidden; ++j) g[kW3 + j] = t.act2[j];
    g[kB3] = 1.0;
    // Second hidden layer.
    const Vec d2 = (t.pre2.array() > 0).select(w3(), 0.0);
    for (int r = 0; r < kHidden; ++r) {
      g[kB2 + r] = d2[r];
      for (int c = 0; c < kHidden; ++c) g[kW2 + r * kHidden + c] = d2[r] * t.act1[c];
    }
    // First hidden layer.
    const Vec back = w2().transpose() * d2;
    const Vec d1 = (t.pre1.array() > 0).select(back, 0.0);
    for (int r = 0; r < kHidden; ++r) {
      g[kB1 + r] = d1[r];
      for (int c = 0; c < kInputs; ++c) g[kW1 + r * kInputs + c] = d1[r] * t.input[c];
    }
    return g;
  }

  void write(std::ostream& os) const;
  static PolicyNet read(std::istream& is);

 private:
  using W1 = Eigen::Matrix<double, kHidden, kInputs, Eigen::RowMajor>;
  using W2 = Eigen::Matrix<double, kHidden, kHidden, Eigen::RowMajor>;

  Eigen::Map<const W1> w1() const { return Eigen::Map<const W1>(params_.data() + kW1); }
  Eigen::Map<const Vec> b1() const { return Eigen::Map<const Vec>(params_.data() + kB1); }
  Eigen::Map<const W2> w2() const { return Eigen::Map<const W2>(params_.data() + kW2); }
  Eigen::Map<const Vec> b2() const { return Eigen::Map<const Vec>(params_.data() + kB2); }
  Eigen::Map<const Vec> w3() const { return Eigen::Map<const Vec>(params_.data() + kW3); }

  std::vector<double> params_;
};

/// Text snapshot: a header line "qsm-policy 1 <count>" followed by one
/// parameter per line in the flat layout, printed with 17 significant digits.
inline void PolicyNet::write(std::ostream& os) const {
  const auto old_precision = os.precision(17);
  os << "qsm-policy 1 " << kParamCount << '\n';
  for (double v : params_) os << v << '\n';
  os.precision(old_precision);
}

inline PolicyNet PolicyNet::read(std::istream& is) {
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  is >> magic >> version >> count;
  detail::require(is && magic == "qsm-policy" && version == 1 && count == kParamCount,
                  "not a policy snapshot");
  PolicyNet net;
  for (double& v : net.params_) is >> v;
  detail::require(static_cast<bool>(is), "truncated policy snapshot");
  return net;
}

/// Bias-corrected Adam, used for gradient ascent.
struct Adam {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit Adam(std::size_t n = PolicyNet::kParamCount) : m(n, 0.0), v(n, 0.0) {}

  /// params += lr * m_hat / (sqrt(v_hat) + eps), with moments of `grad`.
  void ascend(std::span<double> params, std::span<const double> grad) {
    detail::require(params.size() == m.size() && grad.size() == m.size(),
                    "optimizer state does not match the parameters");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      params[i] += learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
    }
  }
};

/// log N(a; mu, 1)
inline double log_density(double action, double mu) {
  const double d = action - mu;
  return -0.5 * d * d - 0.5 * std::log(2 * std::numbers::pi);
}

/// a = mu + eps, eps drawn from `noise` (any callable returning a double).
template <class Noise>
double sample_action(double mu, Noise&& noise) {
  return mu + noise();
}

/// Score-function gradient R * (a - mu) * dmu/dparams.
inline std::vector<double> policy_gradient(const PolicyNet& net, const Observation& obs,
                                           double action, double reward) {
  std::vector<double> g = net.gradient(obs);
  const double scale = reward * (action - net.forward(obs));
  for (double& x : g) x *= scale;
  return g;
}

/// One REINFORCE step. Returns false (and leaves everything untouched) when
/// the reward is not finite.
inline bool reinforce_update(PolicyNet& net, Adam& opt, const Observation& obs, double action,
                             double reward) {
  if (!std::isfinite(reward) || !std::isfinite(action)) return false;
  const std::vector<double> g = policy_gradient(net, obs, action, reward);
  opt.ascend(net.params(), g);
  return true;
}

enum class Side { Buy, Sell };

struct DecodedOrder {
  Side side = Side::Sell;
  double valuation = 0;
};

/// Positive outputs buy, everything else sells; the magnitude is the valuation.
inline DecodedOrder decode_order(double raw) {
  return {raw > 0 ? Side::Buy : Side::Sell, std::abs(raw)};
}

}  // namespace qsm::agents
