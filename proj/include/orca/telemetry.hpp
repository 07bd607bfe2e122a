#ifndef ORCA_TELEMETRY_HPP
#define ORCA_TELEMETRY_HPP

#include "orca/core.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace orca {

/// Shape of one behavior target's data. A schema with no feature names
/// cannot be constructed.
class FeatureSchema {
 public:
  static FeatureSchema vectors(BehaviorLevel level, std::vector<std::string> names);
  static FeatureSchema sequences(BehaviorLevel level, std::vector<std::string> names, int seq_len);
  /// Names default to f0..f{dim-1}.
  static FeatureSchema vectors(BehaviorLevel level, int dim);
  static FeatureSchema sequences(BehaviorLevel level, int dim, int seq_len);

  BehaviorLevel level() const { return level_; }
  const std::vector<std::string>& names() const { return names_; }
  int dim() const { return static_cast<int>(names_.size()); }
  bool time_series() const { return time_series_; }
  /// 0 for non-time-series schemas.
  int seq_len() const { return seq_len_; }

  /// FNV-1a over a canonical text rendering; stable across builds.
  std::uint64_t digest() const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  FeatureSchema(BehaviorLevel level, std::vector<std::string> names, bool ts, int seq_len);

  BehaviorLevel level_;
  std::vector<std::string> names_;
  bool time_series_;
  int seq_len_;
};

struct TelemetrySample {
  Tick tick = 0;
  std::string device_id;
  BehaviorLevel level = BehaviorLevel::B1;
  Vector values;
};

/// series is seq_len x dim, one row per time step.
struct SequenceSample {
  Tick tick = 0;
  std::string device_id;
  BehaviorLevel level = BehaviorLevel::B1;
  Matrix series;
};

using Sample = std::variant<TelemetrySample, SequenceSample>;

Tick sample_tick(const Sample& s);
const std::string& sample_device(const Sample& s);
BehaviorLevel sample_level(const Sample& s);

/// Per-feature training statistics. Medians are taken before normalization
/// and feed vector imputation.
struct NormStats {
  Vector mean;
  Vector stddev;
  Vector median;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Sample> samples;
  std::optional<NormStats> norm_stats;
  /// Set once samples live in normalized space.
  bool normalized = false;
};

enum class RejectReason { DimMismatch, TooManyMissing, BadLevel };

std::string_view to_string(RejectReason reason);

struct ValidationResult {
  std::optional<RejectReason> reason;

  bool ok() const { return !reason.has_value(); }
  static ValidationResult accept() { return {}; }
  static ValidationResult reject(RejectReason r) { return {r}; }
};

inline constexpr double kDefaultMissingLimit = 0.2;

ValidationResult validate_sample(const Sample& sample, const FeatureSchema& schema,
                                 double missing_limit = kDefaultMissingLimit);

struct CleanReport {
  std::size_t imputed_cells = 0;
  std::size_t dropped_samples = 0;
};

/// Imputes, then z-scores with ds.norm_stats when present (computing them
/// from the surviving samples otherwise). Already-normalized datasets only
/// pass through validation and imputation.
std::pair<Dataset, CleanReport> clean_dataset(const Dataset& ds,
                                              double missing_limit = kDefaultMissingLimit);

/// Imputes and normalizes a single sample with stored statistics.
/// Returns the number of imputed cells through `imputed` when non-null.
Sample normalize_sample(const Sample& sample, const NormStats& stats,
                        std::size_t* imputed = nullptr);

/// Linear interpolation along time for interior gaps; leading and trailing
/// gaps take the nearest observed value. A column with no finite value is
/// filled with `fallback`.
std::size_t interpolate_column(Eigen::Ref<Vector> column, double fallback = 0.0);

std::vector<SequenceSample> windowize(const Matrix& series, int win, int stride,
                                      Tick tick = 0, const std::string& device_id = {},
                                      BehaviorLevel level = BehaviorLevel::B1);

struct TimeDependency {
  double score = 0.0;
  bool dependent = false;
};

/// Ljung-Box Q over lags 1..max_lag; zero for a constant series.
double ljung_box(std::span<const double> series, int max_lag);

/// 95% chi-square critical value, 1 <= dof <= 20.
double chi_square_95(int dof);

TimeDependency time_dependency_score(const Dataset& ds, int max_lag);

int dimensionality(const FeatureSchema& schema);

// ---- telemetry log ----------------------------------------------------------

/// Returns the schema registered for (device_id, level), if any. Used to tell
/// a vector record from a sequence record.
using SchemaLookup =
    std::function<std::optional<FeatureSchema>(const std::string&, BehaviorLevel)>;

std::string format_sample(const Sample& sample);
Sample parse_sample(std::string_view line, const SchemaLookup& lookup = {});

void write_log(std::ostream& out, std::span<const Sample> samples);
std::vector<Sample> read_log(std::istream& in, const SchemaLookup& lookup = {});

std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace orca

#endif  // ORCA_TELEMETRY_HPP
