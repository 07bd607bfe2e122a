#ifndef ORCA_MODELS_HPP
#define ORCA_MODELS_HPP

#include "orca/model_spec.hpp"
#include "orca/telemetry.hpp"

#include <memory>
#include <span>
#include <utility>

namespace orca {

/// An immutable one-class scorer: family model, the schema and
/// normalization statistics it was trained under, and a sorted table of raw
/// errors on held-out normal data used to map raw errors to [0, 1].
class TrainedModel {
 public:
  TrainedModel(ModelSpec spec, FeatureSchema schema, NormStats norm_stats,
               std::shared_ptr<const FamilyModel> model, std::vector<double> calibration,
               Tick trained_at = 0, int version = 1);

  const ModelSpec& spec() const { return spec_; }
  ModelFamily family() const { return spec_.family(); }
  const FeatureSchema& schema() const { return schema_; }
  const NormStats& norm_stats() const { return norm_; }
  std::span<const double> calibration() const { return calibration_; }
  Tick trained_at() const { return trained_at_; }
  int version() const { return version_; }
  const FamilyModel& model() const { return *model_; }

  Vector parameters() const { return model_->parameters(); }
  std::vector<std::int64_t> structure() const { return model_->structure(); }

  double raw_error(const Sample& normalized) const { return model_->raw_error(normalized); }

  /// Empirical percentile of `raw` in the calibration table, linearly
  /// interpolated between order statistics; 0 below the minimum and 1 above
  /// the maximum.
  double calibrate(double raw) const;

  /// Same model with new training bookkeeping.
  TrainedModel restamped(Tick trained_at, int version) const {
    return TrainedModel(spec_, schema_, norm_, model_, calibration_, trained_at, version);
  }

 private:
  ModelSpec spec_;
  FeatureSchema schema_;
  NormStats norm_;
  std::shared_ptr<const FamilyModel> model_;
  std::vector<double> calibration_;
  Tick trained_at_;
  int version_;
};

/// Percentile calibration of `raw` against an ascending table of n errors.
/// The i-th order statistic (0-based) maps to (i + 1) / (n + 1) with linear
/// interpolation in between; a block of tied entries takes its mid-rank.
double calibrate_percentile(std::span<const double> sorted, double raw);

/// Every fifth sample (index % 5 == 4) is held out for calibration.
inline bool is_calibration_index(std::size_t i) { return i % 5 == 4; }

TrainedModel train_ocsvm(const Dataset& ds, const ModelSpec& spec);
TrainedModel train_marima(const Dataset& ds, const ModelSpec& spec);
std::pair<TrainedModel, TrainingReport> train_gan_ed(const Dataset& ds, const ModelSpec& spec,
                                                     std::uint64_t seed);
std::pair<TrainedModel, TrainingReport> train_lstm_ed(const Dataset& ds, const ModelSpec& spec,
                                                      std::uint64_t seed);

/// Dispatches on spec.family(); OC-SVM and MARIMA return an empty report.
std::pair<TrainedModel, TrainingReport> train_model(const Dataset& ds, const ModelSpec& spec,
                                                    std::uint64_t seed, Tick trained_at = 0,
                                                    int version = 1);

/// Throws SchemaMismatch when the sample does not fit the model's schema.
void check_schema(const TrainedModel& model, const Sample& sample);

/// Scores a sample already cleaned with the model's statistics.
AnomalyScore score(const TrainedModel& model, const Sample& normalized,
                   double alarm_threshold = kDefaultAlarmThreshold);

/// Validates, imputes and normalizes a raw sample with the model's
/// statistics. Throws SchemaMismatch when validation fails.
Sample prepare(const TrainedModel& model, const Sample& raw, double missing_limit = kDefaultMissingLimit);

/// prepare() followed by score(): one complete behavior evaluation.
AnomalyScore evaluate(const TrainedModel& model, const Sample& raw,
                      double alarm_threshold = kDefaultAlarmThreshold,
                      double missing_limit = kDefaultMissingLimit);

struct CostProfile {
  std::size_t serialized_size = 0;  // bytes
  double score_latency = 0.0;       // seconds per sample
  std::size_t peak_working_set = 0; // bytes
};

/// Size from the model store encoding, median latency of evaluate() over
/// at least 100 calls cycling through the raw probe samples, and an analytic
/// working-set estimate.
CostProfile cost_profile(const TrainedModel& model, const Dataset& probe);

}  // namespace orca

#endif  // ORCA_MODELS_HPP
