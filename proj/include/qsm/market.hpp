#pragma once

// Single-commodity exchange: agents post orders, valuations are optionally
// mediated by the entangling circuit, buyers and sellers are matched within a
// tolerance, trades settle at the bid-ask midpoint, and every agent learns
// from its end-of-round net worth.
//
// Seeding: run r of an experiment with master seed S uses run_seed = S + r.
// Trader i initializes its network from derive_seed(run_seed, 2i) and draws
// exploration noise from derive_seed(run_seed, 2i + 1). Circuit phases come
// from derive_seed(run_seed, kPhaseTag), the optional matching shuffle from
// derive_seed(run_seed, kShuffleTag).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsm/agents.hpp"
#include "qsm/error.hpp"
#include "qsm/qcore.hpp"
#include "qsm/rng.hpp"

namespace qsm::market {

using agents::Side;

inline constexpr std::uint64_t kPhaseTag = 0x5048415345ULL;
inline constexpr std::uint64_t kShuffleTag = 0x53485546ULL;

enum class Mode { Classical, Quantum };
enum class PhasePolicy { RandomPerRound, Fixed };
enum class Reward { NetWorth, NetWorthChange };

inline std::string to_string(Mode m) { return m == Mode::Classical ? "classical" : "quantum"; }

struct MarketConfig {
  int n_traders = 8;
  double initial_cash = 10;
  double initial_stock = 10;
  double initial_price = 10;
  double tolerance = 1;
  int rounds = 1000;
  Mode mode = Mode::Classical;
  double gamma = 0;
  PhasePolicy phase_policy = PhasePolicy::RandomPerRound;
  // Used when phase_policy is Fixed; applied to every qubit.
  double fixed_phi = 0;
  double fixed_psi = 0;
  std::uint64_t seed = 1;

  // Variations, all off by default.
  Reward reward = Reward::NetWorth;
  bool running_baseline = false;
  bool normalize_observations = false;
  bool shuffle_matching = false;
  bool allow_shorting = false;

  void validate() const {
    detail::require(n_traders >= 2, "at least two traders are required");
    detail::require(tolerance > 0 && std::isfinite(tolerance), "tolerance must be positive");
    detail::require(rounds >= 1, "rounds must be at least 1");
    detail::require(initial_cash >= 0 && initial_stock >= 0 && initial_price > 0,
                    "initial holdings must be non-negative and the price positive");
    if (mode == Mode::Quantum) {
      detail::require(n_traders <= kMaxQubits, "quantum mode supports at most 12 traders");
      detail::require(gamma >= 0 && gamma <= kPi / 2 + kAngleSlack, "gamma must lie in [0, pi/2]");
      if (phase_policy == PhasePolicy::Fixed)
        detail::require(fixed_phi >= 0 && fixed_phi <= 2 * kPi && fixed_psi >= 0 &&
                            fixed_psi <= 2 * kPi,
                        "fixed phases must lie in [0, 2pi]");
    }
  }
};

struct TraderAccount {
  int id = 0;
  double cash = 0;
  double stock = 0;

  double net_worth(double price) const { return cash + stock * price; }
};

struct Order {
  int trader = 0;
  Side side = Side::Sell;
  double valuation = 0;
};

struct Trade {
  int buyer = 0;
  int seller = 0;
  double price = 0;
};

struct TraderSnapshot {
  double cash = 0;
  double stock = 0;
  double net_worth = 0;
};

struct RoundRecord {
  int round = 0;
  double avg_price = 0;
  int volume = 0;
  std::vector<TraderSnapshot> traders;
};

/// One learning trader: policy, optimizer and exploration stream.
struct Agent {
  agents::PolicyNet net;
  agents::Adam opt;
  RandomStream noise;
  double baseline = 0;
  long updates = 0;
  long skipped_updates = 0;

  Agent(std::uint64_t init_seed, std::uint64_t noise_seed) : noise(noise_seed) {
    RandomStream init(init_seed);
    net = agents::PolicyNet::random(init);
  }
};

/// Per-agent bookkeeping of one round's decision, needed for the update.
struct Decision {
  agents::Observation obs;
  double action = 0;
};

inline agents::Observation observe(const TraderAccount& acc, double prev_price,
                                   const MarketConfig& cfg) {
  agents::Observation obs{acc.cash, acc.stock, prev_price};
  if (cfg.normalize_observations) {
    if (cfg.initial_cash > 0) obs.cash /= cfg.initial_cash;
    if (cfg.initial_stock > 0) obs.stock /= cfg.initial_stock;
    obs.prev_price /= cfg.initial_price;
  }
  return obs;
}

/// forward + sample_action + decode_order for every trader. `noise(i)` returns
/// the exploration draw of trader i.
template <class Noise>
std::vector<Order> collect_orders(std::span<const agents::PolicyNet> nets,
                                  std::span<const agents::Observation> obs, Noise&& noise,
                                  std::vector<Decision>* decisions = nullptr) {
  detail::require(nets.size() == obs.size(), "one agent per trader is required");
  std::vector<Order> orders;
  orders.reserve(nets.size());
  if (decisions) decisions->assign(nets.size(), {});
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const double mu = nets[i].forward(obs[i]);
    const int id = static_cast<int>(i);
    const double a = agents::sample_action(mu, [&] { return noise(id); });
    const auto d = agents::decode_order(a);
    orders.push_back({id, d.side, d.valuation});
    if (decisions) (*decisions)[i] = {obs[i], a};
  }
  return orders;
}

/// Replaces every valuation by its circuit-adjusted value in cash units.
/// `phases(q)` returns the (phi, psi) pair of qubit q.
template <class PhaseSource>
std::vector<Order> quantum_mediate(std::vector<Order> orders, double gamma, PhaseSource&& phases) {
  std::vector<double> raw;
  raw.reserve(orders.size());
  for (const Order& o : orders) raw.push_back(o.valuation);
  const MarketEncoding enc = rescale_to_market(raw);
  if (enc.degenerate) {
    for (Order& o : orders) o.valuation = 0;
    return orders;
  }
  CircuitParams params;
  params.gamma = gamma;
  params.theta = enc.theta;
  for (std::size_t q = 0; q < orders.size(); ++q) {
    const auto [phi, psi] = phases(static_cast<int>(q));
    params.phi.push_back(phi);
    params.psi.push_back(psi);
  }
  const std::vector<double> cash = enc.to_cash(adjusted_valuations(params));
  for (std::size_t i = 0; i < orders.size(); ++i) orders[i].valuation = cash[i];
  return orders;
}

struct MatchOptions {
  double tolerance = 1;
  bool allow_shorting = false;
  // Priority order of traders; empty means ascending id.
  std::vector<int> priority;
};

/// Pairs buyers with sellers and settles the trades in `accounts`
/// (indexed by trader id).
inline std::vector<Trade> match_orders(std::span<const Order> orders,
                                       std::vector<TraderAccount>& accounts,
                                       const MatchOptions& opt) {
  std::vector<int> rank(accounts.size());
  if (opt.priority.empty()) {
    std::iota(rank.begin(), rank.end(), 0);
  } else {
    detail::require(opt.priority.size() == accounts.size(), "priority must cover every trader");
    for (std::size_t pos = 0; pos < opt.priority.size(); ++pos)
      rank[static_cast<std::size_t>(opt.priority[pos])] = static_cast<int>(pos);
  }
  std::vector<const Order*> buyers, sellers;
  for (const Order& o : orders) {
    detail::require(o.trader >= 0 && static_cast<std::size_t>(o.trader) < accounts.size(),
                    "order from an unknown trader");
    (o.side == Side::Buy ? buyers : sellers).push_back(&o);
  }
  auto by_rank = [&](const Order* a, const Order* b) { return rank[a->trader] < rank[b->trader]; };
  std::stable_sort(buyers.begin(), buyers.end(), by_rank);
  std::stable_sort(sellers.begin(), sellers.end(), by_rank);

  std::vector<Trade> trades;
  std::vector<bool> taken(sellers.size(), false);
  for (const Order* b : buyers) {
    TraderAccount& buyer = accounts[b->trader];
    for (std::size_t s = 0; s < sellers.size(); ++s) {
      if (taken[s] || sellers[s]->trader == b->trader) continue;
      if (std::abs(b->valuation - sellers[s]->valuation) > opt.tolerance) continue;
      TraderAccount& seller = accounts[sellers[s]->trader];
      const double price = 0.5 * (b->valuation + sellers[s]->valuation);
      if (!opt.allow_shorting && (seller.stock < 1 || buyer.cash < price)) continue;
      buyer.cash -= price;
      buyer.stock += 1;
      seller.cash += price;
      seller.stock -= 1;
      taken[s] = true;
      trades.push_back({b->trader, sellers[s]->trader, price});
      break;
    }
  }
  return trades;
}

class Market {
 public:
  explicit Market(const MarketConfig& cfg)
      : cfg_(cfg), phase_rng_(derive_seed(cfg.seed, kPhaseTag)),
        shuffle_rng_(derive_seed(cfg.seed, kShuffleTag)), price_(cfg.initial_price) {
    cfg_.validate();
    for (int i = 0; i < cfg_.n_traders; ++i) {
      accounts_.push_back({i, cfg_.initial_cash, cfg_.initial_stock});
      const auto id = static_cast<std::uint64_t>(i);
      agents_.emplace_back(derive_seed(cfg_.seed, 2 * id), derive_seed(cfg_.seed, 2 * id + 1));
      prev_worth_.push_back(accounts_.back().net_worth(price_));
    }
  }

  const MarketConfig& config() const { return cfg_; }
  const std::vector<TraderAccount>& accounts() const { return accounts_; }
  const std::vector<Agent>& traders() const { return agents_; }
  double price() const { return price_; }
  int rounds_played() const { return round_; }

  RoundRecord run_round() {
    const std::size_t n = accounts_.size();
    std::vector<agents::PolicyNet> nets;
    std::vector<agents::Observation> obs;
    nets.reserve(n);
    obs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      nets.push_back(agents_[i].net);
      obs.push_back(observe(accounts_[i], price_, cfg_));
    }
    std::vector<Decision> decisions;
    std::vector<Order> orders = collect_orders(
        std::span<const agents::PolicyNet>(nets), std::span<const agents::Observation>(obs),
        [&](int i) { return agents_[static_cast<std::size_t>(i)].noise.normal(); }, &decisions);

    if (cfg_.mode == Mode::Quantum) {
      orders = quantum_mediate(std::move(orders), cfg_.gamma, [&](int) {
        if (cfg_.phase_policy == PhasePolicy::Fixed)
          return std::pair{cfg_.fixed_phi, cfg_.fixed_psi};
        const double phi = phase_rng_.uniform(0, 2 * kPi);
        const double psi = phase_rng_.uniform(0, 2 * kPi);
        return std::pair{phi, psi};
      });
    }

    MatchOptions mo{cfg_.tolerance, cfg_.allow_shorting, {}};
    if (cfg_.shuffle_matching) {
      mo.priority.resize(n);
      std::iota(mo.priority.begin(), mo.priority.end(), 0);
      // Fisher-Yates on our own stream; std::shuffle is implementation-defined.
      for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(shuffle_rng_.next_u64() % (i + 1));
        std::swap(mo.priority[i], mo.priority[j]);
      }
    }
    const std::vector<Trade> trades = match_orders(orders, accounts_, mo);

    if (!trades.empty()) {
      double sum = 0;
      for (const Trade& t : trades) sum += t.price;
      price_ = sum / static_cast<double>(trades.size());
    }

    RoundRecord rec;
    rec.round = round_;
    rec.avg_price = price_;
    rec.volume = static_cast<int>(trades.size());
    rec.traders.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double worth = accounts_[i].net_worth(price_);
      rec.traders.push_back({accounts_[i].cash, accounts_[i].stock, worth});
      double reward = cfg_.reward == Reward::NetWorth ? worth : worth - prev_worth_[i];
      prev_worth_[i] = worth;
      Agent& ag = agents_[i];
      if (cfg_.running_baseline) {
        const double b = ag.baseline;
        ag.baseline += (reward - b) / static_cast<double>(ag.updates + 1);
        reward -= b;
      }
      if (agents::reinforce_update(ag.net, ag.opt, decisions[i].obs, decisions[i].action, reward))
        ++ag.updates;
      else
        ++ag.skipped_updates;
    }
    ++round_;
    return rec;
  }

 private:
  MarketConfig cfg_;
  std::vector<TraderAccount> accounts_;
  std::vector<Agent> agents_;
  std::vector<double> prev_worth_;
  RandomStream phase_rng_;
  RandomStream shuffle_rng_;
  double price_;
  int round_ = 0;
};

inline std::vector<RoundRecord> run_simulation(const MarketConfig& cfg) {
  cfg.validate();
  Market m(cfg);
  std::vector<RoundRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int r = 0; r < cfg.rounds; ++r) out.push_back(m.run_round());
  return out;
}

/// Seed of run `run_index` in an experiment with master seed `master`.
inline std::uint64_t run_seed(std::uint64_t master, int run_index) {
  return master + static_cast<std::uint64_t>(run_index);
}

}  // namespace qsm::market
