#ifndef ORCA_SYNTH_HPP
#define ORCA_SYNTH_HPP

#include "orca/model_spec.hpp"
#include "orca/nn.hpp"

#include <array>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace orca {

/// One scored sample as it appears in the score log.
struct ScoreRecord {
  Tick tick = 0;
  std::string device_id;
  BehaviorLevel level = BehaviorLevel::B1;
  AnomalyScore score;
};

/// Aggregate of one (device, level) pair over the trailing window. Absent
/// when the pair has no score inside the window.
struct LevelCell {
  bool present = false;
  double current = 0.0;
  double recent_mean = 0.0;
  double recent_max = 0.0;
  std::size_t count = 0;
};

using LevelRow = std::array<std::optional<LevelCell>, kLevelCount>;

/// Per-tick device x level scores. A row holds a cell for exactly the levels
/// registered for the device; unregistered levels stay empty.
struct ScoreMatrix {
  Tick tick = 0;
  int window = 30;
  std::map<std::string, LevelRow> rows;

  std::size_t populated() const;
  /// Devices with at least one present cell.
  std::vector<std::string> populated_devices() const;
};

/// Registered levels per device; devices absent here are taken from the
/// records themselves.
using Registrations = std::map<std::string, std::set<BehaviorLevel>>;

/// Uses records with now - window < tick <= now.
ScoreMatrix build_score_matrix(std::span<const ScoreRecord> records, Tick now, int window = 30,
                               const Registrations& registrations = {});

// ---- clustering --------------------------------------------------------------------

enum class OutlierReason : std::uint8_t { FarPoint, MicroCluster, AlarmingCluster };
std::string_view to_string(OutlierReason r);

struct Outlier {
  std::string device_id;
  double distance = 0.0;
  int nearest_centroid = 0;
  OutlierReason reason = OutlierReason::FarPoint;
};

struct OutlierReport {
  Tick tick = 0;
  std::vector<Outlier> outliers;

  bool contains(const std::string& device_id) const;
};

struct ClusterOptions {
  int k = 0;  // 0 selects k by silhouette
  std::uint64_t seed = 1;
  int restarts = 10;  // capped at 50
  int max_iterations = 300;
  double tolerance = 1e-9;
  int max_auto_k = 8;
  /// Best silhouette below this keeps a single cluster under auto-k.
  double min_silhouette = 0.25;
  double far_sigma = 3.0;
  double micro_fraction = 0.01;
  /// A cluster at most this fraction of the fleet with an alarming centroid
  /// marks all of its members.
  double alarming_fraction = 0.25;
  double alarm_threshold = kDefaultAlarmThreshold;
};

struct Clustering {
  std::vector<std::string> devices;
  Matrix features;  // one row per device
  std::vector<int> assignment;
  Matrix centroids;
  std::vector<double> distances;  // to the assigned (nearest) centroid
  double silhouette = 0.0;
  /// Within-cluster sum of squares after each Lloyd iteration of the kept run.
  std::vector<double> wcss_trace;
  int k() const { return static_cast<int>(centroids.rows()); }
};

/// Row per populated device: [current, recent mean, recent max] for each of
/// the four levels. Missing cells take the column mean of present ones.
Matrix clustering_features(const ScoreMatrix& m, std::vector<std::string>* devices = nullptr);

/// Seeded k-means++ with restarts, keeping the lowest within-cluster sum of
/// squares.
Clustering kmeans(const Matrix& x, int k, const ClusterOptions& options);

/// Mean silhouette; 0 when k < 2.
double mean_silhouette(const Matrix& x, const std::vector<int>& assignment, int k);

/// Outliers: distance above mean + far_sigma * std of all distances
/// (far_point), members of clusters smaller than max(2, micro_fraction * n)
/// (micro_cluster), and members of a small cluster (alarming_fraction) whose
/// centroid reaches the alarm threshold in some level (alarming_cluster). One entry per device, first
/// matching reason in that order. Throws TooFewDevices for n < 2.
std::pair<Clustering, OutlierReport> cluster_and_outliers(const ScoreMatrix& m, const ClusterOptions& options);

// ---- group insights ------------------------------------------------------------------

enum class GroupKind : std::uint8_t { Subsystem, Location, Batch };
std::string_view to_string(GroupKind k);
GroupKind parse_group_kind(std::string_view text);

struct GroupDefinition {
  GroupKind kind = GroupKind::Subsystem;
  std::string id;
  std::vector<std::string> members;
};

struct ScoredDevice {
  std::string device_id;
  double score = 0.0;
};

using Histogram = std::array<std::size_t, 10>;

struct GroupInsight {
  GroupDefinition group;
  Tick tick = 0;
  Histogram histogram{};
  std::vector<ScoredDevice> lowest_k;
  std::vector<ScoredDevice> highest_k;
  std::deque<Histogram> history;  // oldest first, excludes the current one
  double mean = 0.0;
  double stddev = 0.0;
  double fleet_mean = 0.0;
  bool location_flag = false;  // group mean exceeds fleet mean by the margin
  bool batch_flag = false;     // alarming and tightly similar batch
};

struct InsightOptions {
  std::size_t k = 5;
  std::size_t history_depth = 10;
  double location_margin = 0.2;
  double batch_std = 0.05;
  double alarm_threshold = kDefaultAlarmThreshold;
};

/// Bin of a score in [0, 1]: floor(10 s), with 1.0 in the last bin.
std::size_t histogram_bin(double score);

/// Stateful insight builder: keeps a ring of past histograms per group.
class GroupInsights {
 public:
  explicit GroupInsights(InsightOptions options = {}) : options_(options) {}

  /// Histograms count every present (device, level) cell; device ranking
  /// uses the mean of a device's current level scores. Throws UnknownDevice
  /// when a member has no row in the matrix.
  std::vector<GroupInsight> update(const ScoreMatrix& m, std::span<const GroupDefinition> defs);

  const InsightOptions& options() const { return options_; }

 private:
  InsightOptions options_;
  std::map<std::pair<GroupKind, std::string>, std::deque<Histogram>> history_;
};

/// `tick,kind,group_id,mean,std,bin0..bin9,flags` with flags joined by '|'
/// or '-' when none.
std::string format_insight(const GroupInsight& g);

// ---- usage forecasting ---------------------------------------------------------------

struct ForecastSpec {
  int window = 30;
  int hidden = 32;
  int epochs = 60;
  double lr = 0.05;
  int batch = 32;
  int retrain_every = 360;
  /// Retraining uses at most this many trailing points.
  int history_limit = 720;
  double grad_clip = 5.0;
};

struct UsageForecast {
  std::string subsystem;
  int horizon = 0;
  std::vector<double> predicted;
  int model_version = 0;
};

/// Single-layer LSTM regressor over sliding windows of a z-scored series,
/// with a linear read-out of the last hidden state.
class UsageForecaster {
 public:
  explicit UsageForecaster(ForecastSpec spec = {});

  const ForecastSpec& spec() const { return spec_; }
  bool trained() const { return version_ > 0; }
  int version() const { return version_; }
  Tick trained_at() const { return trained_at_; }

  /// Throws InsufficientHistory when history is shorter than 10 windows.
  void fit(std::span<const double> history, std::uint64_t seed, Tick now = 0);
  /// Recursive multi-step forecast from the last `window` points, clamped at 0.
  std::vector<double> forecast(std::span<const double> history, int horizon) const;
  /// Retrains when untrained or when `retrain_every` ticks have passed.
  bool maybe_retrain(std::span<const double> history, std::uint64_t seed, Tick now);

  /// Flat state for checkpoints: [version, trained_at, mean, scale, params...].
  Vector state() const;
  void load_state(const Vector& state);

  /// Mean squared training loss per epoch of the last fit.
  const std::vector<double>& losses() const { return losses_; }

 private:
  double predict_next(const std::vector<double>& window) const;

  ForecastSpec spec_;
  nn::Lstm cell_;
  nn::Mlp readout_;
  Vector params_;
  double mean_ = 0.0;
  double scale_ = 1.0;
  int version_ = 0;
  Tick trained_at_ = 0;
  std::vector<double> losses_;
};

/// One-shot fit and forecast.
UsageForecast forecast_usage(std::span<const double> history, int horizon, const ForecastSpec& spec,
                             std::uint64_t seed, const std::string& subsystem = {});

}  // namespace orca

#endif  // ORCA_SYNTH_HPP
