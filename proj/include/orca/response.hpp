#ifndef ORCA_RESPONSE_HPP
#define ORCA_RESPONSE_HPP

#include "orca/core.hpp"
#include "orca/nn.hpp"
#include "orca/synth.hpp"

#include <array>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace orca {

// ---- online ARIMA ----------------------------------------------------------------

/// Per (device, level) online ARIMA(p, d, 0): recursive least squares on the
/// d-times differenced score stream with forgetting factor 1. With
/// `intercept` the regression carries a constant term c, so forecasts revert
/// to the stream mean instead of to zero.
struct OlArimaState {
  std::string device_id;
  BehaviorLevel level = BehaviorLevel::B1;
  int p = 2;
  int d = 0;
  bool intercept = false;
  Vector phi;
  double c = 0.0;
  Matrix P;  // inverse information over [phi; c], starts at p0 * I
  /// Most recent raw observations, oldest first; holds max(p + d + 1, 5).
  std::deque<double> recent;
  std::int64_t n_updates = 0;
  double residual_variance = 0.0;
  Tick last_tick = 0;

  static OlArimaState make(std::string device_id, BehaviorLevel level, int p = 2, int d = 0, bool intercept = false,
                           double p0 = 1e6);
  bool warmed_up() const { return n_updates >= p + d + 5; }
};

/// One recursive-least-squares step. Throws InvalidArgument when obs is
/// outside [0, 1].
void ol_arima_update(OlArimaState& s, double obs, Tick tick);

struct BehaviorForecast {
  std::vector<double> forecast;    // clamped to [0, 1]
  std::vector<double> half_width;  // 95% Gaussian band
};

/// Recursive forecast with undifferencing. Throws NotWarmedUp.
BehaviorForecast predict_behavior(const OlArimaState& s, int horizon);

nlohmann::json to_json(const OlArimaState& s);
OlArimaState ol_arima_from_json(const nlohmann::json& j);

// ---- predictive maintenance --------------------------------------------------------

enum class MaintenanceReason : std::uint8_t { ForecastCrossing, SustainedAlarm };
std::string_view to_string(MaintenanceReason r);

struct MaintenanceItem {
  std::string device_id;
  BehaviorLevel level = BehaviorLevel::B1;
  double current_score = 0.0;
  double predicted_peak = 0.0;
  std::optional<Tick> crossing_tick;  // absolute tick of the first forecast crossing
  int window = 60;
  MaintenanceReason reason = MaintenanceReason::ForecastCrossing;
};

using OlArimaStates = std::map<std::pair<std::string, BehaviorLevel>, OlArimaState>;

struct MaintenanceOptions {
  int window = 60;
  double threshold = kDefaultAlarmThreshold;
  int sustained_ticks = 5;
};

/// One item per outlier device with a warmed-up state: sustained_alarm when
/// its last `sustained_ticks` observations of some level reach the threshold,
/// otherwise forecast_crossing when a forecast reaches it within the window.
/// Sustained items come first, then by crossing tick and by descending peak.
std::vector<MaintenanceItem> build_maintenance_list(const OutlierReport& outliers, const OlArimaStates& states,
                                                    const MaintenanceOptions& options = {});

/// `tick,device_id,reason,current,predicted_peak,crossing_tick` with '-' for
/// a missing crossing.
std::string format_maintenance(Tick tick, const MaintenanceItem& item);

// ---- QoE and allocation ------------------------------------------------------------

struct QoeParams {
  std::array<double, 4> priority_weights{8.0, 4.0, 2.0, 1.0};
  double kappa = 0.7;
  double beta = 0.5;
  double gamma = 0.25;
  double lambda_util = 1.0;

  double weight(int priority) const;
  /// Throws InvalidArgument.
  void validate() const;
};

struct SubsystemState {
  std::string id;
  int priority = 4;
  double demand = 0.0;
  double predicted_usage = 0.0;
  double behavior = 0.0;        // mean behavior score in [0, 1]
  double alarm_fraction = 0.0;  // share of alarming members in [0, 1]
};

struct AllocationState {
  Tick tick = 0;
  double capacity = 1.0;
  std::vector<SubsystemState> subsystems;

  /// Throws InvalidArgument on non-positive capacity or out-of-range inputs.
  void validate() const;
};

/// w(priority) * min(a / demand, 1)^kappa * (1 - beta * behavior) *
/// (1 - gamma * alarm_fraction), with a satisfaction of 1 for zero demand.
/// Throws NegativeInput.
double qoe_score(const SubsystemState& sub, double allocation, const QoeParams& params);

struct AllocationDecision {
  Tick tick = 0;
  std::vector<std::string> subsystems;
  std::vector<double> shares;      // policy output after any exploration
  std::vector<double> proposal;    // stage 1: shares * capacity
  std::vector<double> allocation;  // stage 2: feasible final amounts
  std::vector<double> adjustment() const;
  // learning record
  Vector context;
  Vector noise;  // logit perturbation; zero when not exploring
  bool explored = false;
};

/// Shares times capacity, clipped to demand, with the clipped surplus
/// redistributed in proportion to the shares of unsaturated entries until
/// nothing changes. Sum equals min(capacity, total demand).
std::vector<double> water_fill(std::span<const double> shares, std::span<const double> demands, double capacity);

struct PolicyParams {
  int hidden = 16;
  double lr = 0.05;
  double epsilon = 0.3;
  double epsilon_decay = 0.999;
  double epsilon_floor = 0.02;
  double noise_sigma = 0.5;
  double baseline_decay = 0.95;
};

/// Context-to-shares network with Gaussian logit exploration and a
/// score-function update against a running reward baseline.
class AllocationPolicy {
 public:
  AllocationPolicy(int subsystems, PolicyParams params, std::uint64_t seed);

  int subsystems() const { return subsystems_; }
  const PolicyParams& params() const { return params_; }
  double epsilon() const { return epsilon_; }
  double baseline() const { return baseline_; }
  bool has_baseline() const { return has_baseline_; }
  std::int64_t steps() const { return steps_; }
  const Vector& weights() const { return weights_; }

  /// [demand, predicted usage] over capacity (capped at 4), behavior scores,
  /// alarm fractions, then capacity over total demand (capped at 4).
  static Vector context(const AllocationState& state);
  /// Softmax shares without exploration.
  std::vector<double> shares(const Vector& context) const;

  /// Stage 1 plus feasibility repair. Exploration noise is a pure function
  /// of (seed, steps()).
  AllocationDecision propose(const AllocationState& state) const;
  /// Stage 2 update; advances the step counter and decays epsilon.
  void learn(const AllocationDecision& decision, double reward);

  nlohmann::json to_json() const;
  static AllocationPolicy from_json(const nlohmann::json& j);

 private:
  Vector logits(const Vector& context, nn::Mlp::Tape* tape = nullptr) const;

  int subsystems_;
  PolicyParams params_;
  std::uint64_t seed_;
  nn::Mlp net_;
  Vector weights_;
  double epsilon_;
  double baseline_ = 0.0;
  bool has_baseline_ = false;
  std::int64_t steps_ = 0;
};

AllocationDecision propose_allocation(const AllocationState& state, const AllocationPolicy& policy);
void learn_step(AllocationPolicy& policy, const AllocationDecision& decision, double reward);

/// Sum of QoE plus lambda_util times utilization.
double compute_reward(const AllocationDecision& decision, const AllocationState& state, const QoeParams& params);

/// `tick,subsystem,demand,proposal,final,reward`, one line per subsystem.
std::vector<std::string> format_allocation(const AllocationDecision& decision, const AllocationState& state,
                                           double reward);

}  // namespace orca

#endif  // ORCA_RESPONSE_HPP
