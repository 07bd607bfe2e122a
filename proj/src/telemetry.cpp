#include "orca/telemetry.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>

namespace orca {

// ---- schema -----------------------------------------------------------------

FeatureSchema::FeatureSchema(BehaviorLevel level, std::vector<std::string> names, bool ts,
                             int seq_len)
    : level_(level), names_(std::move(names)), time_series_(ts), seq_len_(ts ? seq_len : 0) {
  if (names_.empty()) throw Error(ErrorCode::InvalidArgument, "schema needs at least one feature");
  if (ts && seq_len < 2) throw Error(ErrorCode::InvalidArgument, "time-series schema needs seq_len >= 2");
}

FeatureSchema FeatureSchema::vectors(BehaviorLevel level, std::vector<std::string> names) {
  return FeatureSchema(level, std::move(names), false, 0);
}

FeatureSchema FeatureSchema::sequences(BehaviorLevel level, std::vector<std::string> names,
                                       int seq_len) {
  return FeatureSchema(level, std::move(names), true, seq_len);
}

namespace {
std::vector<std::string> default_names(int dim) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "schema dim must be positive");
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) names.push_back("f" + std::to_string(i));
  return names;
}
}  // namespace

FeatureSchema FeatureSchema::vectors(BehaviorLevel level, int dim) {
  return vectors(level, default_names(dim));
}

FeatureSchema FeatureSchema::sequences(BehaviorLevel level, int dim, int seq_len) {
  return sequences(level, default_names(dim), seq_len);
}

std::uint64_t FeatureSchema::digest() const {
  std::string canon = std::string(to_string(level_)) + (time_series_ ? "|ts|" : "|nts|") +
                      std::to_string(seq_len_);
  for (const auto& n : names_) canon += "|" + n;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---- samples ----------------------------------------------------------------

Tick sample_tick(const Sample& s) {
  return std::visit([](const auto& v) { return v.tick; }, s);
}

const std::string& sample_device(const Sample& s) {
  return std::visit([](const auto& v) -> const std::string& { return v.device_id; }, s);
}

BehaviorLevel sample_level(const Sample& s) {
  return std::visit([](const auto& v) { return v.level; }, s);
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::DimMismatch: return "dim_mismatch";
    case RejectReason::TooManyMissing: return "too_many_missing";
    case RejectReason::BadLevel: return "bad_level";
  }
  return "unknown";
}

namespace {

template <typename Derived>
double missing_fraction(const Eigen::DenseBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  Eigen::Index bad = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j))) ++bad;
  return static_cast<double>(bad) / static_cast<double>(m.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

ValidationResult validate_sample(const Sample& sample, const FeatureSchema& schema,
                                 double missing_limit) {
  if (sample_level(sample) != schema.level()) return ValidationResult::reject(RejectReason::BadLevel);
  if (const auto* v = std::get_if<TelemetrySample>(&sample)) {
    if (schema.time_series() || v->values.size() != schema.dim())
      return ValidationResult::reject(RejectReason::DimMismatch);
    if (missing_fraction(v->values) > missing_limit)
      return ValidationResult::reject(RejectReason::TooManyMissing);
    return ValidationResult::accept();
  }
  const auto& s = std::get<SequenceSample>(sample);
  if (!schema.time_series() || s.series.rows() != schema.seq_len() ||
      s.series.cols() != schema.dim())
    return ValidationResult::reject(RejectReason::DimMismatch);
  if (missing_fraction(s.series) > missing_limit)
    return ValidationResult::reject(RejectReason::TooManyMissing);
  return ValidationResult::accept();
}

std::size_t interpolate_column(Eigen::Ref<Vector> column, double fallback) {
  const Eigen::Index n = column.size();
  std::size_t imputed = 0;
  Eigen::Index prev = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(column[i])) continue;
    if (prev + 1 < i) {
      for (Eigen::Index k = prev + 1; k < i; ++k) {
        if (prev < 0) {
          column[k] = column[i];
        } else {
          const double t = static_cast<double>(k - prev) / static_cast<double>(i - prev);
          column[k] = column[prev] + t * (column[i] - column[prev]);
        }
        ++imputed;
      }
    }
    prev = i;
  }
  for (Eigen::Index k = prev + 1; k < n; ++k) {
    column[k] = prev < 0 ? fallback : column[prev];
    ++imputed;
  }
  return imputed;
}

namespace {

std::size_t impute(Sample& sample, const Vector& medians) {
  std::size_t count = 0;
  if (auto* v = std::get_if<TelemetrySample>(&sample)) {
    for (Eigen::Index j = 0; j < v->values.size(); ++j) {
      if (!std::isfinite(v->values[j])) {
        v->values[j] = medians.size() > j ? medians[j] : 0.0;
        ++count;
      }
    }
    return count;
  }
  auto& s = std::get<SequenceSample>(sample);
  for (Eigen::Index j = 0; j < s.series.cols(); ++j) {
    Vector col = s.series.col(j);
    count += interpolate_column(col, medians.size() > j ? medians[j] : 0.0);
    s.series.col(j) = col;
  }
  return count;
}

Vector feature_medians(const std::vector<Sample>& samples, int dim) {
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(dim));
  for (const auto& sample : samples) {
    if (const auto* v = std::get_if<TelemetrySample>(&sample)) {
      for (int j = 0; j < dim; ++j)
        if (std::isfinite(v->values[j])) cols[j].push_back(v->values[j]);
    } else {
      const auto& s = std::get<SequenceSample>(sample);
      for (int j = 0; j < dim; ++j)
        for (Eigen::Index t = 0; t < s.series.rows(); ++t)
          if (std::isfinite(s.series(t, j))) cols[j].push_back(s.series(t, j));
    }
  }
  Vector med(dim);
  for (int j = 0; j < dim; ++j) med[j] = median_of(std::move(cols[j]));
  return med;
}

// Population moments over every observation of every sample.
std::pair<Vector, Vector> feature_moments(const std::vector<Sample>& samples, int dim) {
  Vector sum = Vector::Zero(dim);
  double n = 0.0;
  for (const auto& sample : samples) {
    if (const auto* v = std::get_if<TelemetrySample>(&sample)) {
      sum += v->values;
      n += 1.0;
    } else {
      const auto& s = std::get<SequenceSample>(sample);
      sum += s.series.colwise().sum().transpose();
      n += static_cast<double>(s.series.rows());
    }
  }
  Vector mean = sum / n;
  Vector sq = Vector::Zero(dim);
  for (const auto& sample : samples) {
    if (const auto* v = std::get_if<TelemetrySample>(&sample)) {
      sq += (v->values - mean).array().square().matrix();
    } else {
      const auto& s = std::get<SequenceSample>(sample);
      sq += (s.series.rowwise() - mean.transpose()).array().square().colwise().sum().transpose().matrix();
    }
  }
  return {mean, (sq / n).array().sqrt().matrix()};
}

constexpr double kZeroVariance = 1e-12;

void apply_zscore(Sample& sample, const NormStats& stats) {
  const auto scale = [&](Eigen::Index j, double x) {
    const double sd = stats.stddev[j];
    return sd > kZeroVariance ? (x - stats.mean[j]) / sd : 0.0;
  };
  if (auto* v = std::get_if<TelemetrySample>(&sample)) {
    for (Eigen::Index j = 0; j < v->values.size(); ++j) v->values[j] = scale(j, v->values[j]);
    return;
  }
  auto& s = std::get<SequenceSample>(sample);
  for (Eigen::Index j = 0; j < s.series.cols(); ++j)
    for (Eigen::Index t = 0; t < s.series.rows(); ++t) s.series(t, j) = scale(j, s.series(t, j));
}

}  // namespace

std::pair<Dataset, CleanReport> clean_dataset(const Dataset& ds, double missing_limit) {
  if (ds.samples.empty()) throw Error(ErrorCode::InvalidArgument, "clean_dataset on empty dataset");
  CleanReport report;
  Dataset out{ds.schema, {}, ds.norm_stats, ds.normalized};
  out.samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    if (validate_sample(s, ds.schema, missing_limit).ok()) {
      out.samples.push_back(s);
    } else {
      ++report.dropped_samples;
    }
  }
  if (out.samples.empty())
    throw Error(ErrorCode::EmptyAfterCleaning, "all " + std::to_string(ds.samples.size()) +
                                                   " samples failed validation");

  const int dim = ds.schema.dim();
  const Vector medians = ds.norm_stats ? ds.norm_stats->median : feature_medians(out.samples, dim);
  for (auto& s : out.samples) report.imputed_cells += impute(s, medians);
  if (out.normalized) return {std::move(out), report};

  if (!out.norm_stats) {
    auto [mean, sd] = feature_moments(out.samples, dim);
    out.norm_stats = NormStats{std::move(mean), std::move(sd), medians};
  }
  for (auto& s : out.samples) apply_zscore(s, *out.norm_stats);
  out.normalized = true;
  return {std::move(out), report};
}

Sample normalize_sample(const Sample& sample, const NormStats& stats, std::size_t* imputed) {
  Sample out = sample;
  const std::size_t n = impute(out, stats.median);
  if (imputed) *imputed = n;
  apply_zscore(out, stats);
  return out;
}

std::vector<SequenceSample> windowize(const Matrix& series, int win, int stride, Tick tick,
                                      const std::string& device_id, BehaviorLevel level) {
  if (win < 2 || stride < 1) throw Error(ErrorCode::InvalidArgument, "windowize needs win >= 2, stride >= 1");
  const auto t_len = static_cast<int>(series.rows());
  if (t_len < win)
    throw Error(ErrorCode::SeriesTooShort,
                "series of length " + std::to_string(t_len) + " shorter than window " + std::to_string(win));
  std::vector<SequenceSample> out;
  out.reserve(static_cast<std::size_t>((t_len - win) / stride + 1));
  for (int start = 0; start + win <= t_len; start += stride) {
    out.push_back(SequenceSample{tick + start, device_id, level, series.middleRows(start, win)});
  }
  return out;
}

// ---- time dependency ----------------------------------------------------------

double ljung_box(std::span<const double> series, int max_lag) {
  const auto n = static_cast<int>(series.size());
  if (max_lag < 1 || n <= max_lag) throw Error(ErrorCode::TooFewPoints, "series too short for max_lag");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= n;
  double c0 = 0.0;
  for (double x : series) c0 += (x - mean) * (x - mean);
  if (c0 <= kZeroVariance * n) return 0.0;
  double q = 0.0;
  for (int k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (int t = k; t < n; ++t) ck += (series[t] - mean) * (series[t - k] - mean);
    const double rho = ck / c0;
    q += rho * rho / (n - k);
  }
  return n * (n + 2.0) * q;
}

double chi_square_95(int dof) {
  static constexpr std::array<double, 20> table = {
      3.841459,  5.991465,  7.814728,  9.487729,  11.070498, 12.591587, 14.067140,
      15.507313, 16.918978, 18.307038, 19.675138, 21.026070, 22.362032, 23.684791,
      24.995790, 26.296228, 27.587112, 28.869299, 30.143527, 31.410433};
  if (dof < 1 || dof > 20) throw Error(ErrorCode::InvalidArgument, "chi-square table covers 1..20 dof");
  return table[static_cast<std::size_t>(dof - 1)];
}

TimeDependency time_dependency_score(const Dataset& ds, int max_lag) {
  if (max_lag < 1 || max_lag > 20) throw Error(ErrorCode::InvalidArgument, "max_lag must be in 1..20");
  std::vector<double> series;
  for (const auto& sample : ds.samples) {
    if (const auto* v = std::get_if<TelemetrySample>(&sample)) {
      series.push_back(v->values[0]);
    } else {
      const auto& s = std::get<SequenceSample>(sample);
      for (Eigen::Index t = 0; t < s.series.rows(); ++t) series.push_back(s.series(t, 0));
    }
  }
  if (series.size() < static_cast<std::size_t>(10 * max_lag))
    throw Error(ErrorCode::TooFewPoints, "need at least 10*max_lag points, have " +
                                             std::to_string(series.size()));
  const double q = ljung_box(series, max_lag);
  return {q, q > chi_square_95(max_lag)};
}

int dimensionality(const FeatureSchema& schema) { return schema.dim(); }

// ---- log format ---------------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

double parse_double(std::string_view text) {
  if (text == "NaN" || text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "Inf" || text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-Inf" || text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorCode::InvalidArgument, "bad number '" + std::string(text) + "'");
  return v;
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

long long parse_int(std::string_view text) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorCode::InvalidArgument, "bad integer '" + std::string(text) + "'");
  return v;
}

bool looks_like_sequence(const std::vector<std::string_view>& f) {
  if (f.size() < 6) return false;
  long long rows = 0, cols = 0;
  auto r1 = std::from_chars(f[3].data(), f[3].data() + f[3].size(), rows);
  auto r2 = std::from_chars(f[4].data(), f[4].data() + f[4].size(), cols);
  if (r1.ec != std::errc() || r1.ptr != f[3].data() + f[3].size()) return false;
  if (r2.ec != std::errc() || r2.ptr != f[4].data() + f[4].size()) return false;
  return rows >= 2 && cols >= 1 && static_cast<long long>(f.size()) == 5 + rows * cols;
}

}  // namespace

std::string format_sample(const Sample& sample) {
  std::ostringstream out;
  out << sample_tick(sample) << ',' << sample_device(sample) << ',' << to_string(sample_level(sample));
  if (const auto* v = std::get_if<TelemetrySample>(&sample)) {
    for (Eigen::Index j = 0; j < v->values.size(); ++j) out << ',' << format_double(v->values[j]);
  } else {
    const auto& s = std::get<SequenceSample>(sample);
    out << ',' << s.series.rows() << ',' << s.series.cols() << ',';
    bool first = true;
    for (Eigen::Index t = 0; t < s.series.rows(); ++t)
      for (Eigen::Index j = 0; j < s.series.cols(); ++j) {
        if (!first) out << ',';
        out << format_double(s.series(t, j));
        first = false;
      }
  }
  return out.str();
}

Sample parse_sample(std::string_view line, const SchemaLookup& lookup) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  const auto f = split_csv(line);
  if (f.size() < 4) throw Error(ErrorCode::InvalidArgument, "telemetry record has too few fields");
  const Tick tick = parse_int(f[0]);
  std::string device(f[1]);
  const BehaviorLevel level = parse_level(f[2]);

  bool sequence = false;
  if (lookup) {
    if (auto schema = lookup(device, level)) {
      sequence = schema->time_series();
    } else {
      sequence = looks_like_sequence(f);
    }
  } else {
    sequence = looks_like_sequence(f);
  }

  if (!sequence) {
    Vector values(static_cast<Eigen::Index>(f.size() - 3));
    for (std::size_t i = 3; i < f.size(); ++i) values[static_cast<Eigen::Index>(i - 3)] = parse_double(f[i]);
    return TelemetrySample{tick, std::move(device), level, std::move(values)};
  }
  if (f.size() < 6) throw Error(ErrorCode::InvalidArgument, "sequence record has too few fields");
  const auto rows = parse_int(f[3]);
  const auto cols = parse_int(f[4]);
  if (rows < 1 || cols < 1 || static_cast<long long>(f.size()) != 5 + rows * cols)
    throw Error(ErrorCode::InvalidArgument, "sequence record length does not match seq_len x dim");
  Matrix series(rows, cols);
  std::size_t k = 5;
  for (Eigen::Index t = 0; t < rows; ++t)
    for (Eigen::Index j = 0; j < cols; ++j) series(t, j) = parse_double(f[k++]);
  return SequenceSample{tick, std::move(device), level, std::move(series)};
}

void write_log(std::ostream& out, std::span<const Sample> samples) {
  for (const auto& s : samples) out << format_sample(s) << '\n';
}

std::vector<Sample> read_log(std::istream& in, const SchemaLookup& lookup) {
  std::vector<Sample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_sample(line, lookup));
  }
  return out;
}

}  // namespace orca
