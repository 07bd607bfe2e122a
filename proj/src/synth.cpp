#include "orca/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace orca {

// ---- score matrix --------------------------------------------------------------------

std::size_t ScoreMatrix::populated() const {
  std::size_t n = 0;
  for (const auto& [id, row] : rows)
    for (const auto& cell : row)
      if (cell && cell->present) ++n;
  return n;
}

std::vector<std::string> ScoreMatrix::populated_devices() const {
  std::vector<std::string> out;
  for (const auto& [id, row] : rows)
    if (std::any_of(row.begin(), row.end(), [](const auto& c) { return c && c->present; })) out.push_back(id);
  return out;
}

ScoreMatrix build_score_matrix(std::span<const ScoreRecord> records, Tick now, int window,
                               const Registrations& registrations) {
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "score window must be positive");
  ScoreMatrix m;
  m.tick = now;
  m.window = window;
  for (const auto& [id, levels] : registrations) {
    auto& row = m.rows[id];
    for (BehaviorLevel l : levels) row[static_cast<int>(l)] = LevelCell{};
  }

  struct Acc {
    Tick last = std::numeric_limits<Tick>::min();
    double current = 0.0;
    double sum = 0.0;
    double max = 0.0;
    std::size_t count = 0;
  };
  std::map<std::pair<std::string, int>, Acc> acc;
  for (const auto& r : records) {
    const int level = static_cast<int>(r.level);
    auto reg = registrations.find(r.device_id);
    if (reg != registrations.end() && !reg->second.contains(r.level)) continue;
    auto& row = m.rows[r.device_id];
    if (!row[level]) row[level] = LevelCell{};
    if (r.tick > now || r.tick <= now - window) continue;
    const double v = std::clamp(r.score.value, 0.0, 1.0);
    auto& a = acc[{r.device_id, level}];
    if (r.tick >= a.last) {
      a.last = r.tick;
      a.current = v;
    }
    a.sum += v;
    a.max = a.count == 0 ? v : std::max(a.max, v);
    ++a.count;
  }
  for (const auto& [key, a] : acc) {
    auto& cell = *m.rows[key.first][key.second];
    cell.present = true;
    cell.current = a.current;
    cell.recent_mean = a.sum / static_cast<double>(a.count);
    cell.recent_max = a.max;
    cell.count = a.count;
  }
  return m;
}

// ---- clustering ----------------------------------------------------------------------

std::string_view to_string(OutlierReason r) {
  switch (r) {
    case OutlierReason::FarPoint: return "far_point";
    case OutlierReason::MicroCluster: return "micro_cluster";
    case OutlierReason::AlarmingCluster: return "alarming_cluster";
  }
  return "unknown";
}

bool OutlierReport::contains(const std::string& device_id) const {
  return std::any_of(outliers.begin(), outliers.end(), [&](const Outlier& o) { return o.device_id == device_id; });
}

Matrix clustering_features(const ScoreMatrix& m, std::vector<std::string>* devices) {
  const auto ids = m.populated_devices();
  constexpr int kCols = 3 * kLevelCount;
  Matrix x(static_cast<Eigen::Index>(ids.size()), kCols);
  Eigen::Array<bool, Eigen::Dynamic, kCols> present(x.rows(), kCols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& row = m.rows.at(ids[i]);
    for (int l = 0; l < kLevelCount; ++l) {
      const bool ok = row[l] && row[l]->present;
      const auto r = static_cast<Eigen::Index>(i);
      present.row(r).segment<3>(3 * l).setConstant(ok);
      if (ok) x.row(r).segment<3>(3 * l) << row[l]->current, row[l]->recent_mean, row[l]->recent_max;
    }
  }
  for (Eigen::Index j = 0; j < kCols; ++j) {
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (present(i, j)) {
        sum += x(i, j);
        ++n;
      }
    const double fill = n > 0 ? sum / static_cast<double>(n) : 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!present(i, j)) x(i, j) = fill;
  }
  if (devices) *devices = ids;
  return x;
}

namespace {

struct LloydRun {
  Matrix centroids;
  std::vector<int> assignment;
  std::vector<double> trace;
  double wcss = 0.0;
};

// Nearest centroid with ties to the lowest index; returns squared distance.
double nearest(const Matrix& c, const Eigen::Ref<const Eigen::RowVectorXd>& p, int* index) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < c.rows(); ++j) {
    const double d = (c.row(j) - p).squaredNorm();
    if (d < best) {
      best = d;
      *index = static_cast<int>(j);
    }
  }
  return best;
}

Matrix seed_plus_plus(const Matrix& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Matrix c(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  c.row(0) = x.row(pick(rng));
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - c.row(0)).squaredNorm();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total <= 0.0) {
      chosen = pick(rng);
    } else {
      double target = u(rng) * total;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    }
    c.row(j) = x.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - c.row(j)).squaredNorm());
  }
  return c;
}

LloydRun lloyd(const Matrix& x, Matrix centroids, const ClusterOptions& o) {
  const Eigen::Index n = x.rows();
  const auto k = centroids.rows();
  LloydRun run;
  run.assignment.assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < o.max_iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) nearest(centroids, x.row(i), &run.assignment[static_cast<std::size_t>(i)]);
    Matrix next = Matrix::Zero(k, x.cols());
    std::vector<int> size(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = run.assignment[static_cast<std::size_t>(i)];
      next.row(a) += x.row(i);
      ++size[static_cast<std::size_t>(a)];
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      if (size[static_cast<std::size_t>(j)] > 0) next.row(j) /= size[static_cast<std::size_t>(j)];
      else next.row(j) = centroids.row(j);  // empty cluster keeps its centroid
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    double wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      wcss += (x.row(i) - centroids.row(run.assignment[static_cast<std::size_t>(i)])).squaredNorm();
    run.trace.push_back(wcss);
    if (shift < o.tolerance) break;
  }
  run.centroids = std::move(centroids);
  run.wcss = run.trace.back();
  return run;
}

}  // namespace

Clustering kmeans(const Matrix& x, int k, const ClusterOptions& options) {
  const Eigen::Index n = x.rows();
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "k must lie in [1, number of points]");
  if (options.max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be positive");
  const int restarts = std::clamp(options.restarts, 1, 50);
  LloydRun best;
  bool have = false;
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(mix_seed(options.seed, static_cast<std::uint64_t>(r) * 64 + static_cast<std::uint64_t>(k)));
    LloydRun run = lloyd(x, seed_plus_plus(x, k, rng), options);
    if (!have || run.wcss < best.wcss) {
      best = std::move(run);
      have = true;
    }
  }
  Clustering c;
  c.features = x;
  c.centroids = best.centroids;
  c.wcss_trace = best.trace;
  c.assignment.assign(static_cast<std::size_t>(n), 0);
  c.distances.assign(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    c.distances[s] = std::sqrt(nearest(c.centroids, x.row(i), &c.assignment[s]));
  }
  c.silhouette = mean_silhouette(x, c.assignment, k);
  return c;
}

double mean_silhouette(const Matrix& x, const std::vector<int>& assignment, int k) {
  const Eigen::Index n = x.rows();
  if (k < 2 || n < 2) return 0.0;
  std::vector<int> size(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++size[static_cast<std::size_t>(a)];
  double total = 0.0;
  std::vector<double> sum(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum[static_cast<std::size_t>(assignment[static_cast<std::size_t>(j)])] += (x.row(i) - x.row(j)).norm();
    const int own = assignment[static_cast<std::size_t>(i)];
    if (size[static_cast<std::size_t>(own)] <= 1) continue;  // singleton scores 0
    const double a = sum[static_cast<std::size_t>(own)] / (size[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own && size[static_cast<std::size_t>(c)] > 0)
        b = std::min(b, sum[static_cast<std::size_t>(c)] / size[static_cast<std::size_t>(c)]);
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

std::pair<Clustering, OutlierReport> cluster_and_outliers(const ScoreMatrix& m, const ClusterOptions& options) {
  std::vector<std::string> ids;
  const Matrix x = clustering_features(m, &ids);
  const auto n = static_cast<int>(ids.size());
  if (n < 2) throw Error(ErrorCode::TooFewDevices, "clustering needs at least 2 populated devices, got " + std::to_string(n));

  Clustering c;
  if (options.k > 0) {
    c = kmeans(x, std::min(options.k, n), options);
  } else {
    c = kmeans(x, 1, options);
    const int kmax = std::min(options.max_auto_k, n - 1);
    double best = -std::numeric_limits<double>::infinity();
    Clustering chosen;
    for (int k = 2; k <= kmax; ++k) {
      Clustering trial = kmeans(x, k, options);
      if (trial.silhouette > best) {
        best = trial.silhouette;
        chosen = std::move(trial);
      }
    }
    if (kmax >= 2 && best >= options.min_silhouette) c = std::move(chosen);
  }
  c.devices = ids;

  OutlierReport report;
  report.tick = m.tick;
  const Eigen::Map<const Vector> d(c.distances.data(), n);
  const double mu = d.mean();
  const double sigma = std::sqrt((d.array() - mu).square().mean());
  const double far = mu + options.far_sigma * sigma;
  std::vector<int> size(static_cast<std::size_t>(c.k()), 0);
  for (int a : c.assignment) ++size[static_cast<std::size_t>(a)];
  const double micro = std::max(2.0, options.micro_fraction * n);
  std::vector<bool> alarming(static_cast<std::size_t>(c.k()), false);
  for (int j = 0; j < c.k(); ++j) {
    if (size[static_cast<std::size_t>(j)] > options.alarming_fraction * n) continue;
    for (int l = 0; l < kLevelCount; ++l)
      if (std::max(c.centroids(j, 3 * l), c.centroids(j, 3 * l + 1)) >= options.alarm_threshold)
        alarming[static_cast<std::size_t>(j)] = true;
  }
  for (int i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    const int a = c.assignment[s];
    std::optional<OutlierReason> reason;
    if (c.distances[s] > far) reason = OutlierReason::FarPoint;
    else if (size[static_cast<std::size_t>(a)] < micro) reason = OutlierReason::MicroCluster;
    else if (alarming[static_cast<std::size_t>(a)]) reason = OutlierReason::AlarmingCluster;
    if (reason) report.outliers.push_back({ids[s], c.distances[s], a, *reason});
  }
  return {std::move(c), std::move(report)};
}

// ---- group insights ------------------------------------------------------------------

std::string_view to_string(GroupKind k) {
  switch (k) {
    case GroupKind::Subsystem: return "subsystem";
    case GroupKind::Location: return "location";
    case GroupKind::Batch: return "batch";
  }
  return "unknown";
}

GroupKind parse_group_kind(std::string_view text) {
  if (text == "subsystem") return GroupKind::Subsystem;
  if (text == "location") return GroupKind::Location;
  if (text == "batch") return GroupKind::Batch;
  throw Error(ErrorCode::InvalidArgument, "unknown group kind '" + std::string(text) + "'");
}

std::size_t histogram_bin(double score) {
  const double s = std::clamp(score, 0.0, 1.0);
  return std::min<std::size_t>(9, static_cast<std::size_t>(std::floor(s * 10.0)));
}

namespace {

std::optional<double> device_score(const LevelRow& row) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : row)
    if (c && c->present) {
      sum += c->current;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

std::vector<GroupInsight> GroupInsights::update(const ScoreMatrix& m, std::span<const GroupDefinition> defs) {
  double fleet_sum = 0.0;
  std::size_t fleet_n = 0;
  for (const auto& [id, row] : m.rows)
    if (auto s = device_score(row)) {
      fleet_sum += *s;
      ++fleet_n;
    }
  const double fleet_mean = fleet_n ? fleet_sum / static_cast<double>(fleet_n) : 0.0;

  std::vector<GroupInsight> out;
  out.reserve(defs.size());
  for (const auto& def : defs) {
    if (def.members.empty()) throw Error(ErrorCode::InvalidArgument, "group '" + def.id + "' has no members");
    GroupInsight g;
    g.group = def;
    g.tick = m.tick;
    g.fleet_mean = fleet_mean;
    std::vector<ScoredDevice> scored;
    for (const auto& id : def.members) {
      auto it = m.rows.find(id);
      if (it == m.rows.end()) throw Error(ErrorCode::UnknownDevice, "group '" + def.id + "' member '" + id + "'");
      for (const auto& c : it->second)
        if (c && c->present) ++g.histogram[histogram_bin(c->current)];
      if (auto s = device_score(it->second)) scored.push_back({id, *s});
    }
    if (!scored.empty()) {
      double sum = 0.0;
      for (const auto& s : scored) sum += s.score;
      g.mean = sum / static_cast<double>(scored.size());
      double var = 0.0;
      for (const auto& s : scored) var += (s.score - g.mean) * (s.score - g.mean);
      g.stddev = std::sqrt(var / static_cast<double>(scored.size()));
    }
    auto ascending = scored;
    std::stable_sort(ascending.begin(), ascending.end(), [](const auto& a, const auto& b) {
      return a.score != b.score ? a.score < b.score : a.device_id < b.device_id;
    });
    auto descending = scored;
    std::stable_sort(descending.begin(), descending.end(), [](const auto& a, const auto& b) {
      return a.score != b.score ? a.score > b.score : a.device_id < b.device_id;
    });
    const auto k = std::min(options_.k, scored.size());
    g.lowest_k.assign(ascending.begin(), ascending.begin() + static_cast<std::ptrdiff_t>(k));
    g.highest_k.assign(descending.begin(), descending.begin() + static_cast<std::ptrdiff_t>(k));

    if (def.kind == GroupKind::Location) g.location_flag = !scored.empty() && g.mean - fleet_mean > options_.location_margin;
    if (def.kind == GroupKind::Batch)
      g.batch_flag = !scored.empty() && g.mean >= options_.alarm_threshold && g.stddev < options_.batch_std;

    auto& ring = history_[{def.kind, def.id}];
    g.history = ring;
    ring.push_back(g.histogram);
    while (ring.size() > options_.history_depth) ring.pop_front();
    out.push_back(std::move(g));
  }
  return out;
}

std::string format_insight(const GroupInsight& g) {
  std::ostringstream out;
  out << g.tick << ',' << to_string(g.group.kind) << ',' << g.group.id << ',' << format_double(g.mean) << ','
      << format_double(g.stddev);
  for (auto b : g.histogram) out << ',' << b;
  std::string flags;
  if (g.location_flag) flags = "location_high";
  if (g.batch_flag) flags += (flags.empty() ? "" : "|") + std::string("batch_similar");
  out << ',' << (flags.empty() ? "-" : flags);
  return out.str();
}

// ---- usage forecasting ---------------------------------------------------------------

UsageForecaster::UsageForecaster(ForecastSpec spec)
    : spec_(spec),
      cell_(1, spec.hidden),
      readout_({spec.hidden, 1}, nn::Activation::Linear, nn::Activation::Linear) {
  if (spec.window < 1 || spec.hidden < 1 || spec.epochs < 1 || spec.batch < 1 || !(spec.lr > 0.0) ||
      spec.retrain_every < 1 || spec.history_limit < 10 * spec.window)
    throw Error(ErrorCode::InvalidArgument, "invalid forecast spec");
  params_ = Vector::Zero(cell_.parameter_count() + readout_.parameter_count());
}

void UsageForecaster::fit(std::span<const double> history, std::uint64_t seed, Tick now) {
  const auto w = static_cast<std::size_t>(spec_.window);
  if (history.size() < 10 * w)
    throw Error(ErrorCode::InsufficientHistory, "usage history of " + std::to_string(history.size()) +
                                                    " points, need " + std::to_string(10 * w));
  if (history.size() > static_cast<std::size_t>(spec_.history_limit))
    history = history.last(static_cast<std::size_t>(spec_.history_limit));
  const Eigen::Map<const Vector> h(history.data(), static_cast<Eigen::Index>(history.size()));
  if (!h.allFinite()) throw Error(ErrorCode::InvalidArgument, "usage history contains non-finite values");
  const double mean = h.mean();
  const double sd = std::sqrt((h.array() - mean).square().mean());
  const double scale = sd > 1e-9 * std::max(1.0, std::abs(mean)) ? sd : std::max(1.0, std::abs(mean));
  const Vector z = (h.array() - mean) / scale;

  std::mt19937_64 rng(seed);
  const Eigen::Index lp = cell_.parameter_count();
  Vector params(params_.size());
  cell_.init(params.head(lp), rng);
  readout_.init(params.tail(readout_.parameter_count()), rng);

  const std::size_t samples = history.size() - w;
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  nn::SgdMomentum opt(params.size(), spec_.lr);
  Vector grad(params.size());
  const auto batch = static_cast<std::size_t>(spec_.batch);
  const auto hid = spec_.hidden;
  losses_.clear();
  for (int epoch = 0; epoch < spec_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < samples; start += batch) {
      const auto b = static_cast<Eigen::Index>(std::min(batch, samples - start));
      std::vector<Matrix> inputs(w, Matrix(1, b));
      Matrix target(1, b);
      for (Eigen::Index c = 0; c < b; ++c) {
        const auto s = order[start + static_cast<std::size_t>(c)];
        for (std::size_t t = 0; t < w; ++t) inputs[t](0, c) = z[static_cast<Eigen::Index>(s + t)];
        target(0, c) = z[static_cast<Eigen::Index>(s + w)];
      }
      const Matrix zero = Matrix::Zero(hid, b);
      nn::Lstm::Tape tape;
      const auto hs = cell_.forward(params.head(lp), inputs, spec_.window, zero, zero, &tape);
      nn::Mlp::Tape rtape;
      const Matrix y = readout_.forward(params.tail(readout_.parameter_count()), hs.back(), &rtape);
      const Matrix err = y - target;
      sum += err.squaredNorm();
      grad.setZero();
      const Matrix g_h = readout_.backward(params.tail(readout_.parameter_count()), rtape,
                                           2.0 * err / static_cast<double>(b), grad.tail(readout_.parameter_count()));
      cell_.backward(params.head(lp), tape, {}, g_h, Matrix::Zero(hid, b), grad.head(lp));
      nn::clip_norm(grad, spec_.grad_clip);
      opt.step(params, grad);
    }
    losses_.push_back(sum / static_cast<double>(samples));
    if (!std::isfinite(losses_.back()) || !params.allFinite())
      throw Error(ErrorCode::DivergedTraining, "usage forecaster diverged at epoch " + std::to_string(epoch));
  }
  params_ = std::move(params);
  mean_ = mean;
  scale_ = scale;
  trained_at_ = now;
  ++version_;
}

double UsageForecaster::predict_next(const std::vector<double>& window) const {
  std::vector<Matrix> inputs;
  inputs.reserve(window.size());
  for (double v : window) inputs.push_back(Matrix::Constant(1, 1, (v - mean_) / scale_));
  const Eigen::Index lp = cell_.parameter_count();
  const Matrix zero = Matrix::Zero(spec_.hidden, 1);
  const auto hs = cell_.forward(params_.head(lp), inputs, static_cast<int>(window.size()), zero, zero);
  const Matrix y = readout_.forward(params_.tail(readout_.parameter_count()), hs.back());
  return y(0, 0) * scale_ + mean_;
}

std::vector<double> UsageForecaster::forecast(std::span<const double> history, int horizon) const {
  if (!trained()) throw Error(ErrorCode::UntrainedModel, "usage forecaster has not been trained");
  if (horizon < 0) throw Error(ErrorCode::InvalidArgument, "negative forecast horizon");
  const auto w = static_cast<std::size_t>(spec_.window);
  if (history.size() < w)
    throw Error(ErrorCode::InsufficientHistory, "forecast needs the last " + std::to_string(w) + " points");
  std::vector<double> window(history.end() - static_cast<std::ptrdiff_t>(w), history.end());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    const double next = std::max(0.0, predict_next(window));
    out.push_back(next);
    window.erase(window.begin());
    window.push_back(next);
  }
  return out;
}

bool UsageForecaster::maybe_retrain(std::span<const double> history, std::uint64_t seed, Tick now) {
  if (trained() && now - trained_at_ < spec_.retrain_every) return false;
  if (history.size() < 10 * static_cast<std::size_t>(spec_.window)) return false;
  fit(history, mix_seed(seed, static_cast<std::uint64_t>(version_)), now);
  return true;
}

Vector UsageForecaster::state() const {
  Vector s(4 + params_.size());
  s << static_cast<double>(version_), static_cast<double>(trained_at_), mean_, scale_, params_;
  return s;
}

void UsageForecaster::load_state(const Vector& state) {
  if (state.size() != 4 + params_.size())
    throw Error(ErrorCode::CorruptStore, "usage forecaster state has " + std::to_string(state.size()) + " values, expected " +
                                             std::to_string(4 + params_.size()));
  version_ = static_cast<int>(state[0]);
  trained_at_ = static_cast<Tick>(state[1]);
  mean_ = state[2];
  scale_ = state[3];
  params_ = state.tail(params_.size());
}

UsageForecast forecast_usage(std::span<const double> history, int horizon, const ForecastSpec& spec,
                             std::uint64_t seed, const std::string& subsystem) {
  UsageForecaster f(spec);
  f.fit(history, seed);
  return {subsystem, horizon, f.forecast(history, horizon), f.version()};
}

}  // namespace orca
