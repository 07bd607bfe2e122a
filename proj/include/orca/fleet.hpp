#ifndef ORCA_FLEET_HPP
#define ORCA_FLEET_HPP

#include "orca/telemetry.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace orca {

enum class Intensity : std::uint8_t { Low, Medium, High };
enum class Regime : std::uint8_t { Normal, Degrading, Faulty, Botnet, Surge };
enum class FaultKind : std::uint8_t { HardwareFault, TrafficAnomaly, ResourceSurge, DegradingDrift };
enum class Label : std::uint8_t { Normal, Anomalous };

std::string_view to_string(Intensity v);
std::string_view to_string(Regime v);
std::string_view to_string(FaultKind v);
std::string_view to_string(Label v);
Intensity parse_intensity(std::string_view text);
Regime parse_regime(std::string_view text);
FaultKind parse_fault_kind(std::string_view text);

/// Regime a fault kind switches a device into.
Regime regime_of(FaultKind kind);
/// Behavior level whose telemetry a fault disturbs.
BehaviorLevel level_of(FaultKind kind);

struct DeviceProfile {
  std::string type_name;
  int priority = 4;  // 1 highest
  Intensity compute_intensity = Intensity::Low;
  Intensity data_intensity = Intensity::Low;
  Intensity latency_sensitivity = Intensity::Low;
  std::vector<FeatureSchema> emits;
  std::string subsystem;
  /// Abstract resource units one device requests per tick.
  double base_demand = 1.0;
};

/// Reference catalog of common edge application classes with their
/// priority and intensity ratings. Ambiguous ratings take the first option.
std::vector<DeviceProfile> reference_profiles();

struct DeviceTypeConfig {
  DeviceProfile profile;
  int count = 0;
};

/// Shape of the synthetic baselines. Every feature has unit marginal
/// variance: a low-rank factor part plus idiosyncratic noise of std `noise`.
struct SimulationParams {
  int factor_rank = 3;
  double noise = 0.5;
  double mean_spread = 2.0;      // feature means drawn from U(-spread, spread)
  int ts_interval = 30;          // ticks between sequence emissions
  double ts_period = 30.0;       // sinusoid period inside a sequence, in steps
  double ts_amplitude = 1.0;
  double ts_phi = 0.6;           // AR(1) coefficient of the sequence noise
  double demand_period = 120.0;  // ticks
  double demand_amplitude = 0.2; // relative swing of subsystem demand
  double demand_noise = 0.03;    // relative per-tick noise
  double burst_probability = 0.3;
  std::uint64_t profile_seed = 0x0CA0;
};

struct FleetConfig {
  std::vector<DeviceTypeConfig> types;
  int locations = 4;
  int batches = 3;
  SimulationParams sim;
};

struct GroupTags {
  std::string subsystem;
  std::string location;
  std::string batch;
};

struct Device {
  std::string id;
  std::size_t type_index = 0;
  GroupTags tags;
  Regime regime = Regime::Normal;
  Tick regime_since = 0;
  double magnitude = 0.0;
};

struct FaultInjection {
  Tick at_tick = 0;
  std::vector<std::string> device_ids;
  FaultKind kind = FaultKind::HardwareFault;
  double magnitude = 1.0;
};

struct ResourceDemand {
  Tick tick = 0;
  std::string subsystem;
  double requested = 0.0;
  Intensity latency_class = Intensity::Low;
};

struct StepOutput {
  std::vector<Sample> telemetry;
  std::vector<ResourceDemand> demands;
};

struct SubsystemInfo {
  std::string id;
  int priority = 4;  // best (lowest) priority among member types
  Intensity latency_class = Intensity::Low;
  std::vector<std::string> members;
};

/// Deterministic simulated fleet. Noise is drawn from counter-based streams
/// keyed by (seed, device, level, tick), so emitted values depend only on the
/// configuration, the seed and the injection history, never on call order.
class Fleet {
 public:
  /// Throws BadConfig on zero devices, duplicate type names or bad profiles.
  static Fleet build(const FleetConfig& config, std::uint64_t seed);

  const FleetConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Device>& devices() const { return devices_; }
  const Device& device(const std::string& id) const;
  const DeviceProfile& profile_of(const Device& d) const { return config_.types[d.type_index].profile; }
  const std::vector<SubsystemInfo>& subsystems() const { return subsystems_; }
  /// Last stepped tick, or -1 before the first step.
  Tick current_tick() const { return current_; }

  /// Emits every vector schema each tick and every sequence schema on ticks
  /// divisible by the sequence interval. Throws NonMonotonicTick.
  StepOutput step(Tick tick);

  /// Telemetry of one device at one tick without advancing the clock.
  std::vector<Sample> emit(const Device& d, Tick tick) const;

  /// Switches the targeted devices' regime from fault.at_tick onward. The
  /// latest injection on a device wins. Throws UnknownDevice.
  void inject(const FaultInjection& fault);

  std::map<std::string, Label> ground_truth(Tick tick) const;

  /// Subsystem demand at `tick` given the current regimes.
  std::vector<ResourceDemand> demands(Tick tick) const;

  /// Canonical text form of devices, tags and regimes.
  std::string serialize() const;
  /// Restores regimes and the clock from serialize() output over a fleet
  /// rebuilt from the same configuration and seed.
  void restore(const std::string& text);

 private:
  struct Baseline {
    Vector mean;
    Matrix loadings;  // dim x rank
    double noise = 0.5;
    Vector phase;     // per-feature sinusoid phase offset for sequences
  };

  const Baseline& baseline(std::size_t type, BehaviorLevel level) const;
  Regime active_regime(const Device& d, Tick tick) const;
  Sample emit_vector(const Device& d, std::size_t index, const FeatureSchema& schema, Tick tick) const;
  Sample emit_sequence(const Device& d, std::size_t index, const FeatureSchema& schema, Tick tick) const;

  FleetConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<Device> devices_;
  std::map<std::string, std::size_t> index_;
  std::vector<SubsystemInfo> subsystems_;
  std::map<std::pair<std::size_t, int>, Baseline> baselines_;
  Tick current_ = -1;
};

/// Feature indices disturbed by faults: every fourth feature.
bool is_designated_feature(int j);

/// Expected telemetry volume from per-sample sizes.
struct IngestRates {
  double nts_kb_per_tick = 0.0;
  double ts_kb_per_interval = 0.0;
  int ts_interval = 30;
};
IngestRates ingest_rates(const Fleet& fleet, double nts_sample_kb, double ts_sample_kb);

// ---- configuration text -------------------------------------------------------

/// Parses the "fleet" part of a configuration (see docs/config.md).
FleetConfig parse_fleet_config(const nlohmann::json& j);
nlohmann::json to_json(const FleetConfig& config);
FeatureSchema parse_schema(const nlohmann::json& j, BehaviorLevel level);

/// Injection entry: explicit "devices" or a deterministic "select"
/// {"type", "count"} picking evenly spaced devices of one type.
FaultInjection parse_injection(const nlohmann::json& j, const Fleet& fleet);
nlohmann::json to_json(const FaultInjection& fault);

}  // namespace orca

#endif  // ORCA_FLEET_HPP
