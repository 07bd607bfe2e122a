#include "orca/models.hpp"

#include "orca/gan_ed.hpp"
#include "orca/lstm_ed.hpp"
#include "orca/marima.hpp"
#include "orca/model_store.hpp"
#include "orca/ocsvm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace orca {

// ---- spec -------------------------------------------------------------------------

std::string_view to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::OCSVM: return "OCSVM";
    case ModelFamily::MARIMA: return "MARIMA";
    case ModelFamily::GANED: return "GANED";
    case ModelFamily::LSTMED: return "LSTMED";
  }
  return "UNKNOWN";
}

ModelFamily parse_family(std::string_view text) {
  for (int i = 0; i < kFamilyCount; ++i) {
    const auto f = static_cast<ModelFamily>(i);
    if (to_string(f) == text) return f;
  }
  throw Error(ErrorCode::UnknownFamily, "unknown model family '" + std::string(text) + "'");
}

ModelSpec ModelSpec::defaults(ModelFamily family) {
  switch (family) {
    case ModelFamily::OCSVM: return {OcsvmHyper{}};
    case ModelFamily::MARIMA: return {MarimaHyper{}};
    case ModelFamily::GANED: return {GanEdHyper{}};
    case ModelFamily::LSTMED: return {LstmEdHyper{}};
  }
  throw Error(ErrorCode::UnknownFamily, "unknown model family");
}

namespace {
void check_layers(const std::vector<int>& layers) {
  if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "layers must be non-empty");
  for (int w : layers)
    if (w < 1) throw Error(ErrorCode::InvalidArgument, "layer widths must be positive");
}
}  // namespace

void ModelSpec::validate() const {
  std::visit(
      [](const auto& h) {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, OcsvmHyper>) {
          if (!(h.nu > 0.0 && h.nu <= 1.0)) throw Error(ErrorCode::InvalidArgument, "OCSVM nu must lie in (0, 1]");
          if (!std::isfinite(h.rbf_gamma)) throw Error(ErrorCode::InvalidArgument, "OCSVM gamma not finite");
        } else if constexpr (std::is_same_v<T, MarimaHyper>) {
          if (h.p < 1) throw Error(ErrorCode::InvalidArgument, "MARIMA p must be >= 1");
          if (h.d != 0 && h.d != 1) throw Error(ErrorCode::InvalidArgument, "MARIMA d must be 0 or 1");
          if (h.q != 0) throw Error(ErrorCode::InvalidArgument, "MARIMA q is fixed to 0");
        } else if constexpr (std::is_same_v<T, GanEdHyper>) {
          check_layers(h.layers);
          if (h.latent_dim < 1 || h.epochs < 1 || h.batch < 1 || !(h.lr > 0.0) || h.lambda_rec < 0.0 ||
              h.alpha < 0.0 || h.alpha > 1.0)
            throw Error(ErrorCode::InvalidArgument, "bad GAN-ED hyperparameters");
        } else {
          check_layers(h.layers);
          if (h.epochs < 1 || h.batch < 1 || !(h.lr > 0.0))
            throw Error(ErrorCode::InvalidArgument, "bad LSTM-ED hyperparameters");
        }
      },
      hyper);
}

ModelFamily select_family(bool time_series, int dim, int dim_threshold) {
  if (dim < 1 || dim_threshold < 1) throw Error(ErrorCode::InvalidArgument, "dim and threshold must be positive");
  const bool high = dim >= dim_threshold;
  if (time_series) return high ? ModelFamily::LSTMED : ModelFamily::MARIMA;
  return high ? ModelFamily::GANED : ModelFamily::OCSVM;
}

// ---- trained model ------------------------------------------------------------------

double calibrate_percentile(std::span<const double> sorted, double raw) {
  // Order statistic i (0-based) sits at (i + 1) / (n + 1), so an exchangeable
  // fresh error lands at or above level t with probability 1 - t.
  const auto n = sorted.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty calibration table");
  if (raw > sorted.back()) return 1.0;
  if (raw < sorted.front()) return 0.0;
  const double denom = static_cast<double>(n) + 1.0;
  const auto lo = std::lower_bound(sorted.begin(), sorted.end(), raw);
  const auto hi = std::upper_bound(sorted.begin(), sorted.end(), raw);
  if (lo != hi) {
    // a block of tied order statistics takes its mid-rank
    const auto first = static_cast<double>(lo - sorted.begin());
    const auto last = static_cast<double>(hi - sorted.begin()) - 1.0;
    return (0.5 * (first + last) + 1.0) / denom;
  }
  const auto i = static_cast<std::size_t>(hi - sorted.begin()) - 1;
  const double frac = (raw - sorted[i]) / (sorted[i + 1] - sorted[i]);
  return (static_cast<double>(i) + frac + 1.0) / denom;
}

TrainedModel::TrainedModel(ModelSpec spec, FeatureSchema schema, NormStats norm_stats,
                           std::shared_ptr<const FamilyModel> model, std::vector<double> calibration,
                           Tick trained_at, int version)
    : spec_(std::move(spec)),
      schema_(std::move(schema)),
      norm_(std::move(norm_stats)),
      model_(std::move(model)),
      calibration_(std::move(calibration)),
      trained_at_(trained_at),
      version_(version) {
  if (!model_) throw Error(ErrorCode::InvalidArgument, "trained model needs a family model");
  if (model_->family() != spec_.family()) throw Error(ErrorCode::InvalidArgument, "family/spec mismatch");
  if (calibration_.empty()) throw Error(ErrorCode::InvalidArgument, "calibration table is empty");
  if (!std::is_sorted(calibration_.begin(), calibration_.end()))
    throw Error(ErrorCode::InvalidArgument, "calibration table must be sorted");
  if (!model_->parameters().allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite parameters");
  const auto d = schema_.dim();
  if (norm_.mean.size() != d || norm_.stddev.size() != d || norm_.median.size() != d)
    throw Error(ErrorCode::InvalidArgument, "normalization statistics do not match schema");
}

double TrainedModel::calibrate(double raw) const { return calibrate_percentile(calibration_, raw); }

// ---- training ---------------------------------------------------------------------

namespace {

void require_clean(const Dataset& ds) {
  if (!ds.normalized || !ds.norm_stats)
    throw Error(ErrorCode::InvalidArgument, "training requires a cleaned dataset");
}

Matrix stack_vectors(const Dataset& ds, bool calibration_split) {
  std::vector<const Vector*> rows;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (is_calibration_index(i) != calibration_split) continue;
    rows.push_back(&std::get<TelemetrySample>(ds.samples[i]).values);
  }
  Matrix out(static_cast<Eigen::Index>(rows.size()), ds.schema.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = rows[r]->transpose();
  return out;
}

std::vector<Matrix> collect_series(const Dataset& ds, bool calibration_split) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (is_calibration_index(i) != calibration_split) continue;
    out.push_back(std::get<SequenceSample>(ds.samples[i]).series);
  }
  return out;
}

void require_kind(const Dataset& ds, bool time_series) {
  if (ds.schema.time_series() != time_series)
    throw Error(ErrorCode::SchemaMismatch, time_series ? "family needs time-series data" : "family needs vector data");
  for (const auto& s : ds.samples) {
    if (std::holds_alternative<SequenceSample>(s) != time_series)
      throw Error(ErrorCode::SchemaMismatch, "dataset holds the wrong sample kind");
  }
}

std::vector<double> calibration_table(const FamilyModel& model, const Dataset& ds) {
  std::vector<double> errors;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (is_calibration_index(i)) errors.push_back(model.raw_error(ds.samples[i]));
  std::sort(errors.begin(), errors.end());
  return errors;
}

template <typename H>
const H& hyper_of(const ModelSpec& spec, ModelFamily expected) {
  if (spec.family() != expected) throw Error(ErrorCode::InvalidArgument, "spec family does not match trainer");
  spec.validate();
  return std::get<H>(spec.hyper);
}

}  // namespace

TrainedModel train_ocsvm(const Dataset& ds, const ModelSpec& spec) {
  const auto& h = hyper_of<OcsvmHyper>(spec, ModelFamily::OCSVM);
  require_clean(ds);
  require_kind(ds, false);
  if (ds.samples.size() < 50)
    throw Error(ErrorCode::InsufficientData, "OC-SVM needs at least 50 samples, have " + std::to_string(ds.samples.size()));
  const double gamma = h.rbf_gamma > 0.0 ? h.rbf_gamma : 1.0 / ds.schema.dim();
  auto model = std::make_shared<OcsvmModel>(solve_ocsvm(stack_vectors(ds, false), h.nu, gamma));
  auto cal = calibration_table(*model, ds);
  return TrainedModel(spec, ds.schema, *ds.norm_stats, std::move(model), std::move(cal));
}

TrainedModel train_marima(const Dataset& ds, const ModelSpec& spec) {
  const auto& h = hyper_of<MarimaHyper>(spec, ModelFamily::MARIMA);
  require_clean(ds);
  require_kind(ds, true);
  const long points = static_cast<long>(ds.samples.size()) * ds.schema.seq_len();
  if (points < 20L * h.p * ds.schema.dim() || ds.samples.size() < 5)
    throw Error(ErrorCode::InsufficientData, "MARIMA needs >= 20*p*dim points and 5 windows");
  auto fit = collect_series(ds, false);
  auto model = std::make_shared<MarimaModel>(h.p, h.d, fit_var(var_design(fit, h.p, h.d)), ds.schema.seq_len());
  auto cal = calibration_table(*model, ds);
  return TrainedModel(spec, ds.schema, *ds.norm_stats, std::move(model), std::move(cal));
}

std::pair<TrainedModel, TrainingReport> train_gan_ed(const Dataset& ds, const ModelSpec& spec, std::uint64_t seed) {
  const auto& h = hyper_of<GanEdHyper>(spec, ModelFamily::GANED);
  require_clean(ds);
  require_kind(ds, false);
  if (ds.samples.size() < 200)
    throw Error(ErrorCode::InsufficientData, "GAN-ED needs at least 200 samples, have " + std::to_string(ds.samples.size()));
  if (ds.schema.dim() < 2) throw Error(ErrorCode::InsufficientData, "GAN-ED needs dim >= 2");
  GanEdNetwork net(ds.schema.dim(), h.layers, h.latent_dim);
  const Matrix train = stack_vectors(ds, false).transpose();
  const Matrix hold = stack_vectors(ds, true).transpose();
  auto fit = fit_gan_ed(net, train, hold, h, seed);
  auto model = std::make_shared<GanEdModel>(std::move(net), std::move(fit.params), h.alpha);
  auto cal = calibration_table(*model, ds);
  return {TrainedModel(spec, ds.schema, *ds.norm_stats, std::move(model), std::move(cal)), std::move(fit.report)};
}

std::pair<TrainedModel, TrainingReport> train_lstm_ed(const Dataset& ds, const ModelSpec& spec, std::uint64_t seed) {
  const auto& h = hyper_of<LstmEdHyper>(spec, ModelFamily::LSTMED);
  require_clean(ds);
  require_kind(ds, true);
  if (ds.samples.size() < 200)
    throw Error(ErrorCode::InsufficientData, "LSTM-ED needs at least 200 windows, have " + std::to_string(ds.samples.size()));
  LstmEdNetwork net(ds.schema.dim(), h.layers);
  auto fit = fit_lstm_ed(net, collect_series(ds, false), collect_series(ds, true), h, seed);
  auto model = std::make_shared<LstmEdModel>(std::move(net), std::move(fit.params), ds.schema.seq_len());
  auto cal = calibration_table(*model, ds);
  return {TrainedModel(spec, ds.schema, *ds.norm_stats, std::move(model), std::move(cal)), std::move(fit.report)};
}

std::pair<TrainedModel, TrainingReport> train_model(const Dataset& ds, const ModelSpec& spec, std::uint64_t seed,
                                                    Tick trained_at, int version) {
  std::pair<TrainedModel, TrainingReport> out = [&]() -> std::pair<TrainedModel, TrainingReport> {
    switch (spec.family()) {
      case ModelFamily::OCSVM: return {train_ocsvm(ds, spec), {}};
      case ModelFamily::MARIMA: return {train_marima(ds, spec), {}};
      case ModelFamily::GANED: return train_gan_ed(ds, spec, seed);
      case ModelFamily::LSTMED: return train_lstm_ed(ds, spec, seed);
    }
    throw Error(ErrorCode::UnknownFamily, "unknown model family");
  }();
  return {out.first.restamped(trained_at, version), std::move(out.second)};
}

// ---- scoring ------------------------------------------------------------------------

void check_schema(const TrainedModel& model, const Sample& sample) {
  const auto& schema = model.schema();
  if (sample_level(sample) != schema.level())
    throw Error(ErrorCode::SchemaMismatch, "sample level does not match model");
  if (const auto* v = std::get_if<TelemetrySample>(&sample)) {
    if (schema.time_series() || v->values.size() != schema.dim())
      throw Error(ErrorCode::SchemaMismatch, "vector sample does not match model schema");
    return;
  }
  const auto& s = std::get<SequenceSample>(sample);
  if (!schema.time_series() || s.series.rows() != schema.seq_len() || s.series.cols() != schema.dim())
    throw Error(ErrorCode::SchemaMismatch, "sequence sample does not match model schema");
}

AnomalyScore score(const TrainedModel& model, const Sample& normalized, double alarm_threshold) {
  check_schema(model, normalized);
  AnomalyScore out;
  out.raw = model.raw_error(normalized);
  out.value = model.calibrate(out.raw);
  out.alarming = out.value >= alarm_threshold;
  return out;
}

Sample prepare(const TrainedModel& model, const Sample& raw, double missing_limit) {
  const auto result = validate_sample(raw, model.schema(), missing_limit);
  if (!result.ok())
    throw Error(ErrorCode::SchemaMismatch, "sample rejected: " + std::string(to_string(*result.reason)));
  return normalize_sample(raw, model.norm_stats());
}

AnomalyScore evaluate(const TrainedModel& model, const Sample& raw, double alarm_threshold, double missing_limit) {
  return score(model, prepare(model, raw, missing_limit), alarm_threshold);
}

CostProfile cost_profile(const TrainedModel& model, const Dataset& probe) {
  if (probe.samples.empty()) throw Error(ErrorCode::InvalidArgument, "cost probe is empty");
  if (!(probe.schema == model.schema())) throw Error(ErrorCode::SchemaMismatch, "probe schema differs from model");
  for (const auto& s : probe.samples) check_schema(model, s);

  CostProfile out;
  out.serialized_size = encode_model(model).size();

  const std::size_t calls = std::max<std::size_t>(100, probe.samples.size());
  std::vector<double> times;
  times.reserve(calls);
  volatile double sink = 0.0;
  for (std::size_t i = 0; i < calls; ++i) {
    const Sample& s = probe.samples[i % probe.samples.size()];
    const auto t0 = std::chrono::steady_clock::now();
    const AnomalyScore a = probe.normalized ? score(model, s) : evaluate(model, s);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + a.raw;
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());
  out.score_latency = times[times.size() / 2];

  const auto n_params = static_cast<std::size_t>(model.parameters().size());
  out.peak_working_set = 8 * (n_params + static_cast<std::size_t>(model.model().activation_footprint()));
  return out;
}

}  // namespace orca
