#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle_values.hpp"
#include "orca/telemetry.hpp"
#include "test_util.hpp"

#include <limits>
#include <sstream>

using namespace orca;
using orca::testing::SplitMix64;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

TelemetrySample vec_sample(Tick tick, std::vector<double> v, BehaviorLevel level = BehaviorLevel::B1) {
  TelemetrySample s;
  s.tick = tick;
  s.device_id = "dev-" + std::to_string(tick % 3);
  s.level = level;
  s.values = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  return s;
}

Dataset random_vectors(std::uint64_t seed, int n, int dim) {
  SplitMix64 r(seed);
  Dataset ds{FeatureSchema::vectors(BehaviorLevel::B2, dim), {}, {}, false};
  for (int i = 0; i < n; ++i) {
    TelemetrySample s;
    s.tick = i;
    s.device_id = "d";
    s.level = BehaviorLevel::B2;
    s.values = Vector(dim);
    for (int j = 0; j < dim; ++j) s.values[j] = 3.0 * j + (j + 1) * r.gaussian();
    ds.samples.push_back(s);
  }
  return ds;
}

Dataset series_dataset(const std::vector<double>& x) {
  Matrix m(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = x[i];
  SequenceSample s;
  s.series = m;
  return Dataset{FeatureSchema::sequences(BehaviorLevel::B1, 1, static_cast<int>(x.size())), {s}, {}, false};
}

}  // namespace

TEST_CASE("behavior levels round-trip through text in a stable order") {
  for (int i = 0; i < kLevelCount; ++i) {
    const auto level = static_cast<BehaviorLevel>(i);
    CHECK(parse_level(to_string(level)) == level);
  }
  CHECK(BehaviorLevel::B1 < BehaviorLevel::B4);
  CHECK_THROWS_AS(parse_level("B5"), Error);
}

TEST_CASE("schema invariants") {
  CHECK_THROWS_AS(FeatureSchema::vectors(BehaviorLevel::B1, 0), Error);
  CHECK_THROWS_AS(FeatureSchema::sequences(BehaviorLevel::B1, 1, 1), Error);
  const auto s = FeatureSchema::sequences(BehaviorLevel::B3, 2, 90);
  CHECK(s.dim() == 2);
  CHECK(s.seq_len() == 90);
  CHECK(s.time_series());
  CHECK(dimensionality(FeatureSchema::vectors(BehaviorLevel::B1, 80)) == 80);
  CHECK(dimensionality(FeatureSchema::vectors(BehaviorLevel::B1, 1)) == 1);
  CHECK(s.digest() == FeatureSchema::sequences(BehaviorLevel::B3, 2, 90).digest());
  CHECK(s.digest() != FeatureSchema::sequences(BehaviorLevel::B3, 2, 91).digest());
}

TEST_CASE("validate_sample") {
  const auto schema = FeatureSchema::vectors(BehaviorLevel::B1, 80);
  CHECK(validate_sample(vec_sample(0, std::vector<double>(80, 1.0)), schema).ok());
  CHECK(validate_sample(vec_sample(0, std::vector<double>(79, 1.0)), schema).reason == RejectReason::DimMismatch);
  std::vector<double> holes(80, 1.0);
  for (int i = 0; i < 24; ++i) holes[static_cast<std::size_t>(i)] = kNaN;
  CHECK(validate_sample(vec_sample(0, holes), schema, 0.2).reason == RejectReason::TooManyMissing);
  CHECK(validate_sample(vec_sample(0, std::vector<double>(80, 1.0), BehaviorLevel::B2), schema).reason ==
        RejectReason::BadLevel);
  CHECK(to_string(RejectReason::DimMismatch) == "dim_mismatch");
}

TEST_CASE("sequence gap is linearly interpolated before normalization") {
  Vector col(3);
  col << 1.0, kNaN, 3.0;
  CHECK(interpolate_column(col) == 1);
  CHECK(col[1] == doctest::Approx(2.0));
  Vector edge(4);
  edge << kNaN, 2.0, kNaN, kNaN;
  interpolate_column(edge);
  CHECK(edge.isApproxToConstant(2.0));
}

TEST_CASE("vector gaps take the feature median and constant features map to zero") {
  Dataset ds{FeatureSchema::vectors(BehaviorLevel::B1, 5), {}, {}, false};
  for (int i = 0; i < 5; ++i) ds.samples.push_back(vec_sample(i, {5.0, double(i), 1.0 * i, 2.0 * i, -1.0 * i}));
  std::get<TelemetrySample>(ds.samples[2]).values[1] = kNaN;
  const auto [clean, report] = clean_dataset(ds);
  CHECK(report.imputed_cells == 1);
  CHECK(report.dropped_samples == 0);
  for (const auto& s : clean.samples) CHECK(std::get<TelemetrySample>(s).values[0] == 0.0);
  // the median of {0,1,3,4} is 2, which is also the mean, so it normalizes to 0
  CHECK(std::get<TelemetrySample>(clean.samples[2]).values[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cleaned datasets are standardized and cleaning is idempotent") {
  const auto ds = random_vectors(7, 400, 6);
  const auto [clean, first] = clean_dataset(ds);
  REQUIRE(clean.norm_stats);
  const int n = static_cast<int>(clean.samples.size());
  Vector sum = Vector::Zero(6), sq = Vector::Zero(6);
  for (const auto& s : clean.samples) {
    const auto& v = std::get<TelemetrySample>(s).values;
    sum += v;
    sq += v.cwiseAbs2();
  }
  const Vector mean = sum / n;
  const Vector sd = (sq / n - mean.cwiseAbs2()).cwiseSqrt();
  CHECK(mean.cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((sd.array() - 1.0).abs().maxCoeff() <= 1e-3);

  const auto [again, second] = clean_dataset(clean);
  CHECK(second.imputed_cells == 0);
  CHECK(second.dropped_samples == 0);
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const auto& a = std::get<TelemetrySample>(clean.samples[i]).values;
    const auto& b = std::get<TelemetrySample>(again.samples[i]).values;
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("stored statistics are reused verbatim on new data") {
  const auto train = random_vectors(1, 200, 3);
  const auto [clean, report] = clean_dataset(train);
  auto batch = random_vectors(2, 50, 3);
  batch.norm_stats = clean.norm_stats;
  const auto [scored, r2] = clean_dataset(batch);
  CHECK(scored.norm_stats->mean == clean.norm_stats->mean);
  const auto& raw = std::get<TelemetrySample>(batch.samples[0]).values;
  const auto& z = std::get<TelemetrySample>(scored.samples[0]).values;
  for (int j = 0; j < 3; ++j)
    CHECK(z[j] == doctest::Approx((raw[j] - clean.norm_stats->mean[j]) / clean.norm_stats->stddev[j]));
}

TEST_CASE("cleaning drops invalid samples and reports them") {
  Dataset ds{FeatureSchema::vectors(BehaviorLevel::B1, 2), {}, {}, false};
  ds.samples.push_back(vec_sample(0, {1.0, 2.0}));
  ds.samples.push_back(vec_sample(1, {1.0}));
  ds.samples.push_back(vec_sample(2, {kNaN, kNaN}));
  ds.samples.push_back(vec_sample(3, {2.0, 3.0}));
  const auto [clean, report] = clean_dataset(ds);
  CHECK(report.dropped_samples == 2);
  CHECK(clean.samples.size() == 2);

  Dataset bad{FeatureSchema::vectors(BehaviorLevel::B1, 2), {vec_sample(0, {kNaN, kNaN})}, {}, false};
  CHECK_THROWS_WITH_AS(clean_dataset(bad), doctest::Contains(""), Error);
  try {
    clean_dataset(bad);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyAfterCleaning);
  }
  Dataset empty{FeatureSchema::vectors(BehaviorLevel::B1, 2), {}, {}, false};
  CHECK_THROWS_AS(clean_dataset(empty), Error);
}

TEST_CASE("windowize counts and positions") {
  Matrix series(10, 1);
  for (int t = 0; t < 10; ++t) series(t, 0) = t;
  const auto w = windowize(series, 4, 2);
  REQUIRE(w.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(w[static_cast<std::size_t>(i)].series(0, 0) == 2.0 * i);
  CHECK(windowize(Matrix::Zero(90, 1), 90, 1).size() == 1);
  try {
    windowize(Matrix::Zero(3, 1), 4, 1);
    FAIL("expected SeriesTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SeriesTooShort);
  }
}

TEST_CASE("windowize count formula over random shapes") {
  SplitMix64 r(99);
  for (int i = 0; i < 300; ++i) {
    const int win = 2 + static_cast<int>(r.next() % 20);
    const int len = win + static_cast<int>(r.next() % 60);
    const int stride = 1 + static_cast<int>(r.next() % 10);
    const auto w = windowize(Matrix::Zero(len, 2), win, stride);
    CHECK(w.size() == static_cast<std::size_t>((len - win) / stride + 1));
  }
}

TEST_CASE("time dependency matches the reference Ljung-Box statistic") {
  const auto white = series_dataset([] {
    SplitMix64 r(101);
    std::vector<double> x(2000);
    for (auto& v : x) v = r.gaussian();
    return x;
  }());
  const auto ar = series_dataset([] {
    SplitMix64 r(102);
    std::vector<double> x{r.gaussian()};
    for (int t = 1; t < 2000; ++t) x.push_back(0.9 * x.back() + r.gaussian());
    return x;
  }());
  const auto w = time_dependency_score(white, 10);
  const auto a = time_dependency_score(ar, 10);
  CHECK(w.score == doctest::Approx(oracle::kLjungBox_white).epsilon(1e-9));
  CHECK(a.score == doctest::Approx(oracle::kLjungBox_ar1).epsilon(1e-9));
  CHECK_FALSE(w.dependent);
  CHECK(a.dependent);

  const auto flat = time_dependency_score(series_dataset(std::vector<double>(200, 4.2)), 10);
  CHECK(flat.score == 0.0);
  CHECK_FALSE(flat.dependent);
  CHECK_THROWS_AS(time_dependency_score(series_dataset(std::vector<double>(50, 1.0)), 10), Error);
  CHECK(chi_square_95(10) == doctest::Approx(18.307038));
}

TEST_CASE("log lines round-trip for vectors and sequences") {
  std::vector<Sample> samples;
  samples.push_back(vec_sample(12, {0.1, -2.5e-7, kNaN}));
  SequenceSample seq;
  seq.tick = 30;
  seq.device_id = "cam-001";
  seq.level = BehaviorLevel::B3;
  seq.series.resize(3, 2);
  seq.series << 1, 2, 3, 4, 5, 6.25;
  samples.push_back(seq);
  std::ostringstream out;
  write_log(out, samples);
  std::istringstream in(out.str());
  const auto back = read_log(in);
  REQUIRE(back.size() == 2);
  const auto& v = std::get<TelemetrySample>(back[0]);
  CHECK(v.tick == 12);
  CHECK(v.values[1] == -2.5e-7);
  CHECK(std::isnan(v.values[2]));
  const auto& s = std::get<SequenceSample>(back[1]);
  CHECK(s.series == seq.series);
  CHECK(s.level == BehaviorLevel::B3);
  CHECK(format_sample(back[1]).rfind("30,cam-001,B3,3,2,", 0) == 0);
}
