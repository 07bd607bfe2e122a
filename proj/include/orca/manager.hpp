#ifndef ORCA_MANAGER_HPP
#define ORCA_MANAGER_HPP

#include "orca/fleet.hpp"
#include "orca/models.hpp"
#include "orca/response.hpp"
#include "orca/synth.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace orca {

// ---- configuration -----------------------------------------------------------------

struct TrainingConfig {
  int ticks = 240;          // normal-regime ticks simulated for training
  int max_samples = 1000;   // per (type, level), evenly subsampled
};

/// Everything a manager needs; see docs/config.md for the text form.
struct ManagerConfig {
  FleetConfig fleet;
  /// Explicit model specs per (type, level); targets without one auto-select.
  std::map<std::pair<std::string, BehaviorLevel>, ModelSpec> specs;
  int dim_threshold = kDefaultDimThreshold;
  double alarm_threshold = kDefaultAlarmThreshold;
  double missing_limit = kDefaultMissingLimit;
  double nts_sample_kb = 0.5;
  double ts_sample_kb = 1.0;
  int score_window = 30;
  ClusterOptions cluster;
  InsightOptions insights;
  ForecastSpec forecast;
  int forecast_horizon = 60;
  MaintenanceOptions maintenance;
  int arima_p = 2;
  int arima_d = 0;
  bool arima_intercept = true;
  QoeParams qoe;
  PolicyParams allocator;
  std::optional<double> capacity;  // absolute units; default capacity_fraction of base demand
  double capacity_fraction = 0.8;
  TrainingConfig training;
  std::uint64_t seed = 1;
  std::string state_dir;
  nlohmann::json injections = nlohmann::json::array();
};

/// Throws BadConfig (structure) or UnknownFamily.
ManagerConfig parse_manager_config(const nlohmann::json& j);
nlohmann::json to_json(const ManagerConfig& config);
ManagerConfig load_manager_config(const std::filesystem::path& path);

/// ORCA_SEED from the environment when set, else `fallback`. Throws BadConfig
/// on a malformed value.
std::uint64_t resolve_seed(std::uint64_t fallback);

// ---- registry ----------------------------------------------------------------------

struct RegistryEntry {
  std::string device_type;
  FeatureSchema schema;
  ModelSpec spec;
  std::shared_ptr<const TrainedModel> model;  // empty until trained
};

/// One model per (device type, behavior level), independent of fleet size.
class ModelRegistry {
 public:
  using Key = std::pair<std::string, BehaviorLevel>;

  /// Throws DuplicateEntry.
  void add(RegistryEntry entry);
  const RegistryEntry* find(const std::string& type, BehaviorLevel level) const;
  RegistryEntry& at(const Key& key);
  void set_model(const Key& key, TrainedModel model);

  std::size_t size() const { return entries_.size(); }
  std::size_t type_count() const;
  std::size_t max_levels() const;
  bool all_trained() const;
  const std::map<Key, RegistryEntry>& entries() const { return entries_; }

 private:
  std::map<Key, RegistryEntry> entries_;
};

/// Auto-selects families for targets without an explicit spec. Throws
/// DuplicateEntry when a type lists a level twice.
ModelRegistry register_models(const ManagerConfig& config);

// ---- cycle -------------------------------------------------------------------------

struct CycleReport {
  Tick tick = 0;
  std::size_t samples_scored = 0;
  std::size_t samples_rejected = 0;
  std::size_t alarms = 0;
  std::size_t outlier_count = 0;
  std::size_t maintenance_count = 0;
  std::vector<std::string> subsystems;
  std::vector<double> allocation;
  double capacity = 0.0;
  double reward = 0.0;
  /// Wall seconds of observe, synthesize and respond, in that order.
  std::array<double, 3> phase_seconds{};
};

/// One line; `with_times` adds the phase wall times, which are not reproducible.
std::string format_report(const CycleReport& r, bool with_times = true);

struct TrainSummary {
  struct Item {
    std::string device_type;
    BehaviorLevel level = BehaviorLevel::B1;
    ModelFamily family = ModelFamily::OCSVM;
    std::size_t samples = 0;
    double seconds = 0.0;
  };
  std::vector<Item> items;
};

/// Registry, fleet and response state driving observe, synthesize and
/// respond cycles. The score log is the source synthesis reads from.
class Engine {
 public:
  /// Uses config.seed as given; callers apply resolve_seed. Applies
  /// config.injections to the live fleet.
  explicit Engine(ManagerConfig config);

  const ManagerConfig& config() const { return config_; }
  const ModelRegistry& registry() const { return registry_; }
  ModelRegistry& registry() { return registry_; }
  Fleet& fleet() { return fleet_; }
  const Fleet& fleet() const { return fleet_; }
  double capacity() const { return capacity_; }
  const AllocationPolicy& policy() const { return policy_; }
  const OlArimaStates& arima_states() const { return arima_; }
  /// Score records inside the current synthesis window.
  const std::deque<ScoreRecord>& score_window() const { return window_; }
  const std::vector<MaintenanceItem>& last_maintenance() const { return maintenance_; }
  const OutlierReport& last_outliers() const { return outliers_; }

  /// Simulates `config.training.ticks` normal ticks on a separate fleet with
  /// the same profiles and trains every registry entry.
  TrainSummary train();
  /// Trains every entry from given samples, grouped by device type and level.
  TrainSummary train_from(const std::vector<Sample>& samples);

  /// Applies injections from config text (see parse_injection).
  void inject(const nlohmann::json& injections);

  /// Writes score, insight, maintenance and allocation logs under `dir`
  /// (append-only) from now on.
  void attach_logs(const std::filesystem::path& dir);

  /// Throws UntrainedModel when a sample has no trained registry entry.
  CycleReport run_cycle(Tick tick);
  /// Next tick after the last cycle.
  Tick next_tick() const { return fleet_.current_tick() + 1; }

  /// Scores one raw sample against its registry entry.
  AnomalyScore score_sample(const Sample& raw) const;

  /// Writes config, models, fleet, policy, OL-ARIMA and forecaster state.
  void save(const std::filesystem::path& dir) const;
  /// Throws CorruptStore / VersionMismatch on damaged state.
  static Engine load(const std::filesystem::path& dir);

 private:
  std::string type_of(const std::string& device_id) const;
  std::vector<GroupDefinition> groups() const;

  ManagerConfig config_;
  Fleet fleet_;
  ModelRegistry registry_;
  Registrations registrations_;
  double capacity_ = 1.0;
  AllocationPolicy policy_;
  GroupInsights insights_;
  OlArimaStates arima_;
  std::map<std::string, std::vector<double>> usage_;  // per subsystem demand history
  std::map<std::string, UsageForecaster> forecasters_;
  std::deque<ScoreRecord> window_;
  OutlierReport outliers_;
  std::vector<MaintenanceItem> maintenance_;
  std::shared_ptr<std::ofstream> score_log_, insight_log_, maintenance_log_, allocation_log_;
};

/// `tick,device_id,level,value,raw,alarming`
std::string format_score(const ScoreRecord& r);
ScoreRecord parse_score(std::string_view line);

// ---- cost report -------------------------------------------------------------------

struct CostRow {
  ModelFamily family = ModelFamily::OCSVM;
  std::string target;  // e.g. "camera/B2" or a benchmark shape
  CostProfile cost;
};

/// Cost rows for one trained model per family; throws MissingFamily when a
/// family has no trained entry. Probes come from fresh simulator telemetry.
std::vector<CostRow> report_costs(const Engine& engine, std::size_t probe_samples = 200);

struct BenchmarkOptions {
  int nts_dim = 80;
  int ocsvm_dim = 4;
  int ts_len = 90;
  std::vector<int> layers{64, 32};
  int train_samples = 600;
  int epochs = 5;
  std::size_t probe_samples = 100;
  std::uint64_t seed = 7;
};

/// Trains the four families on the standard benchmark shapes (GAN-ED on
/// wide vectors, OC-SVM on narrow vectors, MARIMA and LSTM-ED on
/// single-variate sequences) and profiles them.
std::vector<CostRow> benchmark_costs(const BenchmarkOptions& options = {});

/// 120-device testbed: 40 cameras and 80 sensors, each emitting one
/// 80-feature NTS stream (B1) and one 90-point single-variate TS stream (B3).
FleetConfig reference_testbed();

/// Cost table plus ingest accounting as printable text.
std::string format_costs(const std::vector<CostRow>& rows, const IngestRates& ingest);

/// Process exit code for an error: 1 usage, 2 data, 3 model or state.
int exit_code(ErrorCode code);

}  // namespace orca

#endif  // ORCA_MANAGER_HPP
