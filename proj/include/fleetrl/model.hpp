#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fleetrl/prices.hpp"

namespace fleetrl {

/// Physical and economic constants of the n-battery fleet and grid.
struct FleetConfig {
  int n = 3;                    ///< agent count
  Eigen::VectorXd alpha;        ///< battery size scaling per agent
  Eigen::VectorXd delta_mean;   ///< mean of the production-demand noise
  Eigen::VectorXd delta_var;    ///< variance of the production-demand noise
  Eigen::VectorXd u_max;        ///< buy/sell power bound per agent
  double p_max = 1.5;           ///< grid peak bound
  Eigen::VectorXd penalty;      ///< SOC band penalty weight per agent
  double gamma = 0.99;          ///< discount factor, in (0, 1]

  /// Fleet with all per-agent values broadcast from scalars.
  static FleetConfig uniform(int n, double alpha, double delta_mean,
                             double delta_var, double u_max, double p_max,
                             double penalty, double gamma);

  /// Throws std::invalid_argument on hard violations; returns warnings for
  /// soft ones (a vacuous peak bound p_max >= sum(u_max) is a warning, not
  /// an error).
  std::vector<std::string> validate() const;
};

/// State of charge per agent, dimensionless in [0, 1] after correction.
struct SocState {
  Eigen::VectorXd soc;
};

/// Net grid power per agent, a = buy - sell. Buying and selling are never
/// both nonzero, so the split is recovered by sign.
struct ControlAction {
  Eigen::VectorXd net;

  Eigen::VectorXd buy() const { return net.cwiseMax(0.0); }
  Eigen::VectorXd sell() const { return (-net).cwiseMax(0.0); }
};

/// One simulated hour.
struct Transition {
  int k = 0;                      ///< hour index within the day
  SocState state;                 ///< SOC at the start of the hour
  ControlAction policy_action;    ///< policy output before exploration
  ControlAction action;           ///< executed action (exploration applied)
  double buy_price = 0.0;         ///< price pair applied this hour
  double sell_price = 0.0;
  Eigen::VectorXd noise;          ///< realized production-demand draw
  Eigen::VectorXd correction;     ///< low-level corrective power, signed
  SocState next_state;            ///< post-correction SOC at the end of the hour
  Eigen::VectorXd agent_cost;     ///< realized modified cost per agent
  double realized_cost = 0.0;     ///< sum of agent_cost
  double peak_planned = 0.0;      ///< peak power of the policy action
  double peak_executed = 0.0;     ///< peak power of the executed action
};

/// Raw per-agent SOC after one hour, before any clamping:
/// raw[i] = soc[i] + alpha[i] * (noise[i] + a[i]).
Eigen::VectorXd step_dynamics(const SocState& state, const ControlAction& action,
                              const Eigen::VectorXd& noise,
                              const FleetConfig& cfg);

struct CorrectionResult {
  SocState state;               ///< clamped to [0, 1]
  Eigen::VectorXd correction;   ///< power traded to achieve the clamp
};

/// Clamps raw SOC into [0, 1] and reports the corrective power
/// (soc - raw) / alpha the low-level controller had to trade.
CorrectionResult low_level_correct(const Eigen::VectorXd& raw,
                                   const FleetConfig& cfg);

/// Economic stage cost per agent: L[i] = buy_price[i]*b[i] - sell_price[i]*s[i].
Eigen::VectorXd stage_cost(const ControlAction& action,
                           const Eigen::VectorXd& buy_price,
                           const Eigen::VectorXd& sell_price);

/// Per-agent modified stage cost: economic cost plus the SOC band penalties
/// p[i]*max(soc[i]-0.9, 0) + p[i]*max(0.1-soc[i], 0). The SOC argument is the
/// post-correction state of the hour being costed.
Eigen::VectorXd modified_stage_cost_per_agent(const SocState& state,
                                              const ControlAction& action,
                                              const Eigen::VectorXd& buy_price,
                                              const Eigen::VectorXd& sell_price,
                                              const FleetConfig& cfg);

/// Sum of modified_stage_cost_per_agent over agents.
double modified_stage_cost(const SocState& state, const ControlAction& action,
                           const Eigen::VectorXd& buy_price,
                           const Eigen::VectorXd& sell_price,
                           const FleetConfig& cfg);

/// Peak grid power of an action: max(sum of buys, sum of sells).
double peak_power(const ControlAction& action);

/// Policy evaluator: maps (SOC, hour index) to a net action per agent.
/// Hour indices count from the start of the day series the rollout uses.
using PolicyFn =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& soc, Eigen::Index hour)>;

struct RolloutOptions {
  double soc_reset = 0.6;         ///< SOC at hour 0 of every day
  double exploration_scale = 0.05;///< stddev of exploration noise, in units of u_max
  int hours_per_day = 24;
  int days_per_month = 30;
};

/// Deterministic seed for (month, day) derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t month,
                          std::uint64_t day);

/// Simulates one day: at each hour evaluate the policy, add clipped Gaussian
/// exploration, draw the process noise, step the dynamics, apply the
/// low-level correction, and record the realized modified cost (corrective
/// energy is traded at the hour's prices). `day_start_hour` offsets the
/// price series indexing. Deterministic given the seed.
std::vector<Transition> rollout_day(const PolicyFn& policy,
                                    const PriceSeries& prices,
                                    Eigen::Index day_start_hour,
                                    const FleetConfig& cfg, std::uint64_t seed,
                                    const RolloutOptions& opts);

/// Thirty (days_per_month) independent day rollouts with per-day derived
/// seeds, concatenated in day order.
std::vector<Transition> rollout_month(const PolicyFn& policy,
                                      const PriceSeries& prices,
                                      const FleetConfig& cfg,
                                      std::uint64_t master_seed,
                                      std::uint64_t month,
                                      const RolloutOptions& opts);

/// Columnar CSV, one row per hour:
/// day,hour,soc_i...,action_i...,correction_i...,noise_i...,cost,peak
/// `soc_i` is the start-of-hour state, `peak` the planned (policy) peak.
void write_transitions_csv(std::ostream& out,
                           const std::vector<Transition>& batch, int n,
                           int hours_per_day);

}  // namespace fleetrl
