#include "fleetrl/model.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "fleetrl/csv.hpp"

namespace fleetrl {

FleetConfig FleetConfig::uniform(int n, double alpha, double delta_mean,
                                 double delta_var, double u_max, double p_max,
                                 double penalty, double gamma) {
  FleetConfig cfg;
  cfg.n = n;
  cfg.alpha = Eigen::VectorXd::Constant(n, alpha);
  cfg.delta_mean = Eigen::VectorXd::Constant(n, delta_mean);
  cfg.delta_var = Eigen::VectorXd::Constant(n, delta_var);
  cfg.u_max = Eigen::VectorXd::Constant(n, u_max);
  cfg.p_max = p_max;
  cfg.penalty = Eigen::VectorXd::Constant(n, penalty);
  cfg.gamma = gamma;
  return cfg;
}

std::vector<std::string> FleetConfig::validate() const {
  if (n < 1) {
    throw std::invalid_argument("fleet: n must be >= 1");
  }
  auto check_size = [&](const Eigen::VectorXd& v, const char* name) {
    if (v.size() != n) {
      throw std::invalid_argument(std::string("fleet: ") + name +
                                  " must have one entry per agent");
    }
  };
  check_size(alpha, "alpha");
  check_size(delta_mean, "delta_mean");
  check_size(delta_var, "delta_var");
  check_size(u_max, "u_max");
  check_size(penalty, "penalty");
  if ((alpha.array() <= 0.0).any()) {
    throw std::invalid_argument("fleet: alpha must be positive");
  }
  if ((u_max.array() <= 0.0).any()) {
    throw std::invalid_argument("fleet: u_max must be positive");
  }
  if ((penalty.array() < 0.0).any()) {
    throw std::invalid_argument("fleet: penalty must be nonnegative");
  }
  if ((delta_var.array() < 0.0).any()) {
    throw std::invalid_argument("fleet: delta_var must be nonnegative");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("fleet: gamma must be in (0, 1]");
  }
  std::vector<std::string> warnings;
  if (!(p_max < u_max.sum())) {
    warnings.push_back(
        "fleet: p_max >= sum(u_max); the grid peak constraint is vacuous");
  }
  if (!(p_max > 0.0)) {
    throw std::invalid_argument("fleet: p_max must be positive");
  }
  return warnings;
}

Eigen::VectorXd step_dynamics(const SocState& state, const ControlAction& action,
                              const Eigen::VectorXd& noise,
                              const FleetConfig& cfg) {
  return state.soc + cfg.alpha.cwiseProduct(noise + action.net);
}

CorrectionResult low_level_correct(const Eigen::VectorXd& raw,
                                   const FleetConfig& cfg) {
  CorrectionResult r;
  r.state.soc = raw.cwiseMax(0.0).cwiseMin(1.0);
  r.correction = (r.state.soc - raw).cwiseQuotient(cfg.alpha);
  return r;
}

Eigen::VectorXd stage_cost(const ControlAction& action,
                           const Eigen::VectorXd& buy_price,
                           const Eigen::VectorXd& sell_price) {
  return buy_price.cwiseProduct(action.buy()) -
         sell_price.cwiseProduct(action.sell());
}

Eigen::VectorXd modified_stage_cost_per_agent(const SocState& state,
                                              const ControlAction& action,
                                              const Eigen::VectorXd& buy_price,
                                              const Eigen::VectorXd& sell_price,
                                              const FleetConfig& cfg) {
  const Eigen::VectorXd econ = stage_cost(action, buy_price, sell_price);
  const Eigen::ArrayXd soc = state.soc.array();
  const Eigen::ArrayXd band = (soc - 0.9).max(0.0) + (0.1 - soc).max(0.0);
  return econ + (cfg.penalty.array() * band).matrix();
}

double modified_stage_cost(const SocState& state, const ControlAction& action,
                           const Eigen::VectorXd& buy_price,
                           const Eigen::VectorXd& sell_price,
                           const FleetConfig& cfg) {
  return modified_stage_cost_per_agent(state, action, buy_price, sell_price, cfg)
      .sum();
}

double peak_power(const ControlAction& action) {
  return std::max(action.buy().sum(), action.sell().sum());
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t month,
                          std::uint64_t day) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= month * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
  std::uint64_t b = splitmix64(s);
  s ^= day * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL;
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

std::vector<Transition> rollout_day(const PolicyFn& policy,
                                    const PriceSeries& prices,
                                    Eigen::Index day_start_hour,
                                    const FleetConfig& cfg, std::uint64_t seed,
                                    const RolloutOptions& opts) {
  const int n = cfg.n;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  const Eigen::VectorXd delta_std = cfg.delta_var.cwiseSqrt();

  std::vector<Transition> day;
  day.reserve(opts.hours_per_day);

  SocState state{Eigen::VectorXd::Constant(n, opts.soc_reset)};
  for (int h = 0; h < opts.hours_per_day; ++h) {
    const Eigen::Index k = day_start_hour + h;
    Transition tr;
    tr.k = h;
    tr.state = state;
    tr.buy_price = prices.buy_at(k);
    tr.sell_price = prices.sell_at(k);

    tr.policy_action.net = policy(state.soc, k);

    // Exploration and process noise are always drawn, in this order, so the
    // random stream is identical whether or not either is switched off.
    Eigen::VectorXd expl(n), xi(n);
    for (int i = 0; i < n; ++i) {
      expl[i] = unit_normal(rng);
    }
    for (int i = 0; i < n; ++i) {
      xi[i] = unit_normal(rng);
    }
    tr.action.net = (tr.policy_action.net +
                     opts.exploration_scale * cfg.u_max.cwiseProduct(expl))
                        .cwiseMax(-cfg.u_max)
                        .cwiseMin(cfg.u_max);
    tr.noise = cfg.delta_mean + delta_std.cwiseProduct(xi);

    const Eigen::VectorXd raw = step_dynamics(state, tr.action, tr.noise, cfg);
    const CorrectionResult corr = low_level_correct(raw, cfg);
    tr.correction = corr.correction;
    tr.next_state = corr.state;

    const Eigen::VectorXd buy_p = Eigen::VectorXd::Constant(n, tr.buy_price);
    const Eigen::VectorXd sell_p = Eigen::VectorXd::Constant(n, tr.sell_price);
    // Corrective energy is traded at the hour's prices; penalties are taken
    // on the post-correction state of this hour.
    const Eigen::VectorXd corr_cost =
        tr.buy_price * tr.correction.cwiseMax(0.0) -
        tr.sell_price * (-tr.correction).cwiseMax(0.0);
    tr.agent_cost = modified_stage_cost_per_agent(tr.next_state, tr.action,
                                                  buy_p, sell_p, cfg) +
                    corr_cost;
    tr.realized_cost = tr.agent_cost.sum();
    tr.peak_planned = peak_power(tr.policy_action);
    tr.peak_executed = peak_power(tr.action);

    state = tr.next_state;
    day.push_back(std::move(tr));
  }
  return day;
}

std::vector<Transition> rollout_month(const PolicyFn& policy,
                                      const PriceSeries& prices,
                                      const FleetConfig& cfg,
                                      std::uint64_t master_seed,
                                      std::uint64_t month,
                                      const RolloutOptions& opts) {
  std::vector<Transition> batch;
  batch.reserve(static_cast<std::size_t>(opts.days_per_month) *
                opts.hours_per_day);
  for (int d = 0; d < opts.days_per_month; ++d) {
    const std::uint64_t seed = derive_seed(master_seed, month, d);
    std::vector<Transition> day = rollout_day(
        policy, prices, Eigen::Index(d) * opts.hours_per_day, cfg, seed, opts);
    for (auto& tr : day) {
      batch.push_back(std::move(tr));
    }
  }
  return batch;
}

void write_transitions_csv(std::ostream& out,
                           const std::vector<Transition>& batch, int n,
                           int hours_per_day) {
  out << "day,hour";
  for (int i = 0; i < n; ++i) out << ",soc_" << i;
  for (int i = 0; i < n; ++i) out << ",action_" << i;
  for (int i = 0; i < n; ++i) out << ",correction_" << i;
  for (int i = 0; i < n; ++i) out << ",noise_" << i;
  out << ",cost,peak\n";
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const Transition& tr = batch[r];
    out << (r / hours_per_day) << ',' << tr.k;
    for (int i = 0; i < n; ++i) out << ',' << fmt_double(tr.state.soc[i]);
    for (int i = 0; i < n; ++i) out << ',' << fmt_double(tr.action.net[i]);
    for (int i = 0; i < n; ++i) out << ',' << fmt_double(tr.correction[i]);
    for (int i = 0; i < n; ++i) out << ',' << fmt_double(tr.noise[i]);
    out << ',' << fmt_double(tr.realized_cost) << ','
        << fmt_double(tr.peak_planned) << '\n';
  }
}

}  // namespace fleetrl
