#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle_values.hpp"
#include "orca/response.hpp"
#include "test_util.hpp"

#include <numeric>

using namespace orca;
using orca::testing::code_of;
using orca::testing::SplitMix64;

namespace {

std::vector<double> clipped_ar1_scores(std::uint64_t seed, int n, double phi) {
  SplitMix64 g(seed);
  std::vector<double> s;
  double x = g.gaussian();
  s.push_back(std::clamp(0.5 + 0.1 * x, 0.0, 1.0));
  for (int t = 1; t < n; ++t) {
    x = phi * x + g.gaussian();
    s.push_back(std::clamp(0.5 + 0.1 * x, 0.0, 1.0));
  }
  return s;
}

OlArimaState fed(const std::vector<double>& stream, int p, int d, const std::string& id = "dev",
                 bool intercept = false) {
  auto s = OlArimaState::make(id, BehaviorLevel::B1, p, d, intercept);
  for (std::size_t t = 0; t < stream.size(); ++t) ol_arima_update(s, stream[t], static_cast<Tick>(t));
  return s;
}

SubsystemState sub(const std::string& id, int priority, double demand, double behavior = 0.0, double alarms = 0.0) {
  SubsystemState s;
  s.id = id;
  s.priority = priority;
  s.demand = demand;
  s.predicted_usage = demand;
  s.behavior = behavior;
  s.alarm_fraction = alarms;
  return s;
}

AllocationState toy_state() {
  AllocationState st;
  st.capacity = 1.5;
  st.subsystems = {sub("p1", 1, 1.0), sub("p2", 2, 1.0), sub("p4", 4, 1.0)};
  return st;
}

// Best grid allocation (step `step` of capacity) for the given state.
std::vector<double> brute_force(const AllocationState& st, const QoeParams& q, int steps) {
  const auto n = st.subsystems.size();
  std::vector<double> best_a;
  double best = -1.0;
  std::vector<int> k(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i + 1 == n) {
      k[i] = left;
      std::vector<double> a(n);
      double r = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = std::min(st.capacity * k[j] / steps, st.subsystems[j].demand);
        r += qoe_score(st.subsystems[j], a[j], q);
      }
      if (r > best + 1e-12) {
        best = r;
        best_a = a;
      }
      return;
    }
    for (int v = 0; v <= left; ++v) {
      k[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, steps);
  return best_a;
}

}  // namespace

TEST_CASE("recursive least squares matches batch least squares") {
  const auto s = fed(clipped_ar1_scores(106, 500, 0.7), 2, 0);
  CHECK(s.n_updates == 500);
  CHECK(std::abs(s.phi[0] - oracle::kRlsPhi0) <= 1e-3);
  CHECK(std::abs(s.phi[1] - oracle::kRlsPhi1) <= 1e-3);
  CHECK((s.P - s.P.transpose()).norm() == 0.0);
  Eigen::LLT<Matrix> llt(s.P);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("recursive least squares with intercept matches batch least squares") {
  const auto s = fed(clipped_ar1_scores(106, 500, 0.7), 2, 0, "dev", true);
  CHECK(s.P.rows() == 3);
  CHECK(std::abs(s.phi[0] - oracle::kRlsInterceptPhi0) <= 1e-3);
  CHECK(std::abs(s.phi[1] - oracle::kRlsInterceptPhi1) <= 1e-3);
  CHECK(std::abs(s.c - oracle::kRlsInterceptC) <= 1e-3);
  // Forecasts of a mean-reverting stream settle near the stream mean.
  const auto f = predict_behavior(s, 50);
  const double mean = s.c / (1.0 - s.phi.sum());
  CHECK(std::abs(f.forecast.back() - mean) <= 1e-3);
}

TEST_CASE("warm-up gate and constant streams") {
  auto s = OlArimaState::make("dev", BehaviorLevel::B2, 2, 0);
  for (int t = 0; t < 6; ++t) {
    ol_arima_update(s, 0.4, t);
    CHECK(code_of([&] { predict_behavior(s, 3); }) == ErrorCode::NotWarmedUp);
  }
  ol_arima_update(s, 0.4, 6);
  REQUIRE(s.warmed_up());
  for (int t = 7; t < 200; ++t) ol_arima_update(s, 0.4, t);
  const auto f = predict_behavior(s, 5);
  CHECK(f.forecast[0] == doctest::Approx(0.4).epsilon(1e-4));
  CHECK(predict_behavior(s, 0).forecast.empty());
  CHECK(predict_behavior(s, 0).half_width.empty());
  CHECK(code_of([&] { ol_arima_update(s, 1.2, 201); }) == ErrorCode::InvalidArgument);

  auto with_c = OlArimaState::make("dev", BehaviorLevel::B2, 2, 0, true);
  for (int t = 0; t < 200; ++t) ol_arima_update(with_c, 0.4, t);
  CHECK(predict_behavior(with_c, 5).forecast[4] == doctest::Approx(0.4).epsilon(1e-4));
}

TEST_CASE("intercept states persist") {
  const auto s = fed(clipped_ar1_scores(108, 100, 0.5), 2, 0, "dev", true);
  const auto back = ol_arima_from_json(to_json(s));
  CHECK(back.intercept);
  CHECK(back.c == s.c);
  CHECK(back.P == s.P);
  CHECK(predict_behavior(back, 4).forecast == predict_behavior(s, 4).forecast);
}

TEST_CASE("a linear drift is continued with differencing") {
  std::vector<double> stream;
  for (int t = 0; t < 100; ++t) stream.push_back(0.1 + 0.004 * t);
  const auto s = fed(stream, 2, 1);
  const auto f = predict_behavior(s, 10);
  for (int h = 1; h <= 10; ++h) {
    const double slope = (f.forecast[static_cast<std::size_t>(h - 1)] - stream.back()) / h;
    CHECK(std::abs(slope - 0.004) <= 0.1 * 0.004);
  }
}

TEST_CASE("forecast bands widen and respect [0, 1]") {
  const auto s = fed(clipped_ar1_scores(107, 300, 0.8), 2, 0);
  const auto f = predict_behavior(s, 20);
  for (std::size_t h = 0; h < 20; ++h) {
    CHECK(f.forecast[h] >= 0.0);
    CHECK(f.forecast[h] <= 1.0);
    CHECK(f.half_width[h] >= 0.0);
    if (h > 0) CHECK(f.half_width[h] >= f.half_width[h - 1]);
  }
  CHECK(f.half_width[0] > 0.0);
  const auto back = ol_arima_from_json(to_json(s));
  CHECK(back.phi == s.phi);
  CHECK(predict_behavior(back, 20).forecast == f.forecast);
}

TEST_CASE("maintenance list rules") {
  OlArimaStates states;
  std::vector<double> rising;
  for (int t = 0; t < 60; ++t) rising.push_back(0.305 + 0.01 * t);  // ends at 0.895
  std::vector<double> hot(40, 0.95);
  std::vector<double> calm(40, 0.2);
  states.emplace(std::pair{std::string("rise"), BehaviorLevel::B1}, fed(rising, 2, 1, "rise"));
  states.emplace(std::pair{std::string("hot"), BehaviorLevel::B2}, fed(hot, 2, 0, "hot"));
  states.emplace(std::pair{std::string("calm"), BehaviorLevel::B1}, fed(calm, 2, 0, "calm"));
  OutlierReport none;
  CHECK(build_maintenance_list(none, states).empty());

  OutlierReport report;
  for (const char* id : {"calm", "rise", "hot", "unknown"}) report.outliers.push_back({id, 1.0, 0, OutlierReason::FarPoint});
  const auto list = build_maintenance_list(report, states);
  REQUIRE(list.size() == 2);
  CHECK(list[0].device_id == "hot");
  CHECK(list[0].reason == MaintenanceReason::SustainedAlarm);
  CHECK_FALSE(list[0].crossing_tick.has_value());
  CHECK(list[1].device_id == "rise");
  CHECK(list[1].reason == MaintenanceReason::ForecastCrossing);
  // 0.895 + 0.01 h reaches 0.9 at h = 1 from tick 59
  REQUIRE(list[1].crossing_tick.has_value());
  CHECK(*list[1].crossing_tick == 60);
  CHECK(list[1].predicted_peak <= 1.0);
  CHECK(format_maintenance(59, list[1]).starts_with("59,rise,forecast_crossing,0.89"));
  CHECK(format_maintenance(59, list[0]).ends_with(",-"));
}

TEST_CASE("a crossing twelve ticks ahead is reported at that tick") {
  std::vector<double> stream;
  for (int t = 0; t < 50; ++t) stream.push_back(0.35 + 0.005 * t);  // 0.595 at t = 49
  // drift 0.025 per tick over the last few points
  for (int t = 0; t < 10; ++t) stream.push_back(0.595 + 0.025 * (t + 1));  // 0.845 at t = 59
  auto s = fed(stream, 1, 1, "x");
  OlArimaStates states{{{"x", BehaviorLevel::B1}, s}};
  OutlierReport report{0, {{"x", 1.0, 0, OutlierReason::MicroCluster}}};
  MaintenanceOptions o;
  o.threshold = 0.9;
  o.window = 60;
  const auto f = predict_behavior(s, 60).forecast;
  const auto first = std::find_if(f.begin(), f.end(), [](double v) { return v >= 0.9; }) - f.begin();
  const auto list = build_maintenance_list(report, states, o);
  REQUIRE(list.size() == 1);
  CHECK(*list[0].crossing_tick == 59 + 1 + first);
  CHECK(*list[0].crossing_tick - 59 <= 60);
}

TEST_CASE("QoE formula, monotonicity and errors") {
  const QoeParams q;
  CHECK(qoe_score(sub("a", 1, 2.0), 2.0, q) == doctest::Approx(8.0));
  CHECK(qoe_score(sub("a", 1, 2.0), 0.0, q) == 0.0);
  CHECK(qoe_score(sub("a", 4, 1.0, 1.0), 1.0, q) == doctest::Approx(0.5));
  CHECK(qoe_score(sub("a", 3, 0.0), 0.0, q) == doctest::Approx(2.0));
  CHECK(code_of([&] { qoe_score(sub("a", 1, 1.0), -0.1, q); }) == ErrorCode::NegativeInput);
  CHECK(code_of([&] { qoe_score(sub("a", 1, -1.0), 0.5, q); }) == ErrorCode::NegativeInput);
  SplitMix64 g(301);
  for (int i = 0; i < 500; ++i) {
    const auto base = sub("s", 1 + static_cast<int>(g.uniform() * 4), 0.1 + g.uniform(), g.uniform(), g.uniform());
    const double a = g.uniform() * 1.5;
    const double v = qoe_score(base, a, q);
    CHECK(qoe_score(base, a + 0.1 * g.uniform(), q) >= v);
    auto worse = base;
    worse.behavior = std::min(1.0, base.behavior + 0.2 * g.uniform());
    worse.alarm_fraction = std::min(1.0, base.alarm_fraction + 0.2 * g.uniform());
    CHECK(qoe_score(worse, a, q) <= v);
  }
  QoeParams bad;
  bad.priority_weights = {8, 4, 4, 1};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("water filling saturates or exhausts the budget") {
  const std::vector<double> shares{0.7, 0.2, 0.1};
  const std::vector<double> demand{1.0, 2.0, 3.0};
  const auto full = water_fill(shares, demand, 10.0);
  CHECK(full == demand);
  const auto tiny = water_fill(shares, demand, 1e-6);
  CHECK(std::accumulate(tiny.begin(), tiny.end(), 0.0) == doctest::Approx(1e-6));
  const auto mid = water_fill(shares, demand, 3.0);
  CHECK(mid[0] == 1.0);  // clipped, surplus moves to the others in proportion 2:1
  CHECK(mid[1] == doctest::Approx(2.0 * 2.0 / 3.0));
  CHECK(mid[2] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("allocations stay feasible for arbitrary states and policies") {
  SplitMix64 g(302);
  for (int trial = 0; trial < 10000; ++trial) {
    AllocationState st;
    st.capacity = 0.01 + 10.0 * g.uniform();
    const int n = 1 + static_cast<int>(g.uniform() * 5);
    for (int i = 0; i < n; ++i)
      st.subsystems.push_back(sub("s" + std::to_string(i), 1 + static_cast<int>(g.uniform() * 4),
                                  g.uniform() < 0.1 ? 0.0 : 5.0 * g.uniform(), g.uniform(), g.uniform()));
    PolicyParams pp;
    pp.epsilon = g.uniform();
    pp.noise_sigma = 0.1 + 3.0 * g.uniform();
    const AllocationPolicy policy(n, pp, g.next());
    const auto d = propose_allocation(st, policy);
    double total = 0.0;
    for (std::size_t i = 0; i < d.allocation.size(); ++i) {
      CHECK_MESSAGE(d.allocation[i] >= 0.0, "trial " << trial);
      CHECK_MESSAGE(d.allocation[i] <= st.subsystems[i].demand, "trial " << trial);
      total += d.allocation[i];
    }
    CHECK(total <= st.capacity * (1.0 + 1e-12));
  }
}

TEST_CASE("reward arithmetic") {
  const QoeParams q;
  auto st = toy_state();
  st.capacity = 3.0;
  AllocationDecision full;
  full.allocation = {1.0, 1.0, 1.0};
  CHECK(compute_reward(full, st, q) == doctest::Approx(8 + 4 + 1 + 1.0));
  AllocationDecision none;
  none.allocation = {0.0, 0.0, 0.0};
  CHECK(compute_reward(none, st, q) == 0.0);
}

TEST_CASE("brute force optimum never favours a lower priority") {
  const QoeParams q;
  for (double cap : {0.5, 1.0, 1.5, 2.0, 2.5}) {
    AllocationState st;
    st.capacity = cap;
    st.subsystems = {sub("a", 1, 1.0), sub("b", 2, 1.0), sub("c", 3, 1.0), sub("d", 4, 1.0)};
    const auto a = brute_force(st, q, 40);
    for (std::size_t i = 0; i + 1 < a.size(); ++i) CHECK(a[i] >= a[i + 1]);
  }
}

TEST_CASE("the better behaved of two identical subsystems gets at least as much") {
  const QoeParams q;
  for (double cap : {0.4, 1.0, 1.6}) {
    AllocationState st;
    st.capacity = cap;
    st.subsystems = {sub("clean", 2, 1.0, 0.0), sub("dirty", 2, 1.0, 1.0)};
    const auto a = brute_force(st, q, 100);
    CHECK(a[0] >= a[1]);
  }
}

TEST_CASE("the learner approaches the toy optimum") {
  const QoeParams q;
  const auto st = toy_state();
  AllocationPolicy policy(3, {}, 2024);
  const double initial = compute_reward(propose_allocation(st, AllocationPolicy(3, {.epsilon = 0.0}, 2024)), st, q);
  CHECK(initial < 0.95 * oracle::kToyOptimum);
  std::deque<double> recent;
  double best_running = 0.0;
  int reached_at = -1;
  for (int step = 1; step <= 2000; ++step) {
    const auto d = propose_allocation(st, policy);
    const double r = compute_reward(d, st, q);
    learn_step(policy, d, r);
    recent.push_back(r);
    if (recent.size() > 100) recent.pop_front();
    if (recent.size() == 100) {
      const double mean = std::accumulate(recent.begin(), recent.end(), 0.0) / 100.0;
      best_running = std::max(best_running, mean);
      if (reached_at < 0 && mean >= 0.95 * oracle::kToyOptimum) reached_at = step;
    }
  }
  MESSAGE("initial reward " << initial << ", best running mean " << best_running << " of optimum " << oracle::kToyOptimum << ", reached at " << reached_at);
  CHECK(reached_at > 0);
  const auto final = propose_allocation(st, policy).allocation;
  CHECK(final[0] >= final[2]);
}

TEST_CASE("exploration decays and zero rewards leave weights untouched") {
  PolicyParams pp;
  pp.epsilon = 0.3;
  AllocationPolicy policy(3, pp, 5);
  const Vector w0 = policy.weights();
  const auto st = toy_state();
  for (int i = 0; i < 1000; ++i) learn_step(policy, propose_allocation(st, policy), 0.0);
  CHECK(policy.epsilon() == doctest::Approx(0.3 * std::pow(0.999, 1000)));
  CHECK(policy.epsilon() == doctest::Approx(0.11).epsilon(0.02));
  CHECK(policy.weights() == w0);
  CHECK(policy.baseline() == 0.0);
  for (int i = 0; i < 5000; ++i) learn_step(policy, propose_allocation(st, policy), 0.0);
  CHECK(policy.epsilon() == 0.02);
}

TEST_CASE("policy trajectories are reproducible and persist") {
  const QoeParams q;
  const auto st = toy_state();
  auto run = [&](AllocationPolicy p, int steps) {
    for (int i = 0; i < steps; ++i) {
      const auto d = propose_allocation(st, p);
      learn_step(p, d, compute_reward(d, st, q));
    }
    return p;
  };
  const auto a = run(AllocationPolicy(3, {}, 77), 300);
  const auto b = run(AllocationPolicy(3, {}, 77), 300);
  CHECK(a.weights() == b.weights());
  const auto restored = AllocationPolicy::from_json(nlohmann::json::parse(a.to_json().dump()));
  CHECK(restored.weights() == a.weights());
  CHECK(run(restored, 50).weights() == run(a, 50).weights());
  const auto d = propose_allocation(st, a);
  const auto lines = format_allocation(d, st, 3.5);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].starts_with("0,p1,1,"));
  CHECK(lines[0].ends_with(",3.5"));
}
