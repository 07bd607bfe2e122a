#include "orca/response.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace orca {

namespace {

constexpr double kZ95 = 1.959963984540054;

// Differences `v` d times.
std::vector<double> difference(std::vector<double> v, int d) {
  for (int k = 0; k < d; ++k) {
    for (std::size_t i = v.size() - 1; i > 0; --i) v[i] -= v[i - 1];
    v.erase(v.begin());
  }
  return v;
}

std::size_t buffer_size(const OlArimaState& s) { return static_cast<std::size_t>(std::max(s.p + s.d + 1, 5)); }

}  // namespace

// ---- online ARIMA ----------------------------------------------------------------

OlArimaState OlArimaState::make(std::string device_id, BehaviorLevel level, int p, int d, bool intercept, double p0) {
  if (p < 1 || d < 0 || d > 2 || !(p0 > 0.0))
    throw Error(ErrorCode::InvalidArgument, "OL-ARIMA needs p >= 1, 0 <= d <= 2 and a positive P0");
  OlArimaState s;
  s.device_id = std::move(device_id);
  s.level = level;
  s.p = p;
  s.d = d;
  s.intercept = intercept;
  s.phi = Vector::Zero(p);
  const int k = p + (intercept ? 1 : 0);
  s.P = p0 * Matrix::Identity(k, k);
  return s;
}

void ol_arima_update(OlArimaState& s, double obs, Tick tick) {
  if (!std::isfinite(obs) || obs < 0.0 || obs > 1.0)
    throw Error(ErrorCode::InvalidArgument, "OL-ARIMA observation outside [0, 1]");
  s.recent.push_back(obs);
  while (s.recent.size() > buffer_size(s)) s.recent.pop_front();
  ++s.n_updates;
  s.last_tick = tick;
  const auto need = static_cast<std::size_t>(s.p + s.d + 1);
  if (s.recent.size() < need) return;

  const std::vector<double> w = difference(std::vector<double>(s.recent.end() - static_cast<std::ptrdiff_t>(need), s.recent.end()), s.d);
  const Eigen::Index n = s.P.rows();
  Vector x(n), theta(n);
  for (int i = 0; i < s.p; ++i) x[i] = w[static_cast<std::size_t>(s.p - 1 - i)];
  theta.head(s.p) = s.phi;
  if (s.intercept) {
    x[s.p] = 1.0;
    theta[s.p] = s.c;
  }
  const double target = w.back();
  const Vector px = s.P * x;
  const Vector k = px / (1.0 + x.dot(px));
  theta += k * (target - theta.dot(x));
  s.P -= k * px.transpose();
  s.P = 0.5 * (s.P + s.P.transpose());
  s.phi = theta.head(s.p);
  if (s.intercept) s.c = theta[s.p];
  const double e = target - theta.dot(x);
  const double fitted = static_cast<double>(s.n_updates - s.p - s.d);
  const double alpha = std::max(1.0 / fitted, 0.02);
  s.residual_variance = (1.0 - alpha) * s.residual_variance + alpha * e * e;
}

BehaviorForecast predict_behavior(const OlArimaState& s, int horizon) {
  if (!s.warmed_up())
    throw Error(ErrorCode::NotWarmedUp, "OL-ARIMA for '" + s.device_id + "' has " + std::to_string(s.n_updates) +
                                            " updates, needs " + std::to_string(s.p + s.d + 5));
  if (horizon < 0) throw Error(ErrorCode::InvalidArgument, "negative forecast horizon");
  BehaviorForecast out;
  if (horizon == 0) return out;

  const std::vector<double> raw(s.recent.begin(), s.recent.end());
  std::vector<double> w = difference(raw, s.d);
  // levels[k] = k-th difference at the latest tick
  std::vector<double> levels;
  for (int k = 0; k < s.d; ++k) levels.push_back(difference(raw, k).back());

  // psi weights of the combined autoregression (1 - sum phi B^i)(1 - B)^d
  std::vector<double> poly{1.0};
  for (int i = 0; i < s.p; ++i) poly.push_back(-s.phi[i]);
  for (int k = 0; k < s.d; ++k) {
    std::vector<double> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i];
      next[i + 1] -= poly[i];
    }
    poly = std::move(next);
  }
  std::vector<double> psi{1.0};
  double cumulative = 0.0;
  const double sigma2 = std::max(s.residual_variance, 0.0);

  for (int h = 0; h < horizon; ++h) {
    double next = s.intercept ? s.c : 0.0;
    for (int i = 0; i < s.p; ++i) next += s.phi[i] * w[w.size() - 1 - static_cast<std::size_t>(i)];
    w.push_back(next);
    double y = next;
    if (s.d > 0) {
      levels[static_cast<std::size_t>(s.d - 1)] += next;
      for (int k = s.d - 2; k >= 0; --k) levels[static_cast<std::size_t>(k)] += levels[static_cast<std::size_t>(k + 1)];
      y = levels[0];
    }
    out.forecast.push_back(std::clamp(y, 0.0, 1.0));

    cumulative += psi.back() * psi.back();
    out.half_width.push_back(kZ95 * std::sqrt(sigma2 * cumulative));
    double next_psi = 0.0;
    const auto j = psi.size();
    for (std::size_t i = 1; i < poly.size() && i <= j; ++i) next_psi -= poly[i] * psi[j - i];
    psi.push_back(next_psi);
  }
  return out;
}

nlohmann::json to_json(const OlArimaState& s) {
  nlohmann::json j;
  j["device_id"] = s.device_id;
  j["level"] = std::string(to_string(s.level));
  j["p"] = s.p;
  j["d"] = s.d;
  j["intercept"] = s.intercept;
  j["phi"] = std::vector<double>(s.phi.begin(), s.phi.end());
  j["c"] = s.c;
  j["P"] = std::vector<double>(s.P.data(), s.P.data() + s.P.size());
  j["recent"] = std::vector<double>(s.recent.begin(), s.recent.end());
  j["n_updates"] = s.n_updates;
  j["residual_variance"] = s.residual_variance;
  j["last_tick"] = s.last_tick;
  return j;
}

OlArimaState ol_arima_from_json(const nlohmann::json& j) {
  try {
    auto s = OlArimaState::make(j.at("device_id").get<std::string>(), parse_level(j.at("level").get<std::string>()),
                                j.at("p").get<int>(), j.at("d").get<int>(), j.at("intercept").get<bool>());
    const auto phi = j.at("phi").get<std::vector<double>>();
    const auto P = j.at("P").get<std::vector<double>>();
    const auto n = s.P.rows();
    if (phi.size() != static_cast<std::size_t>(s.p) || P.size() != static_cast<std::size_t>(n * n))
      throw Error(ErrorCode::CorruptStore, "OL-ARIMA state has inconsistent sizes");
    s.phi = Eigen::Map<const Vector>(phi.data(), s.p);
    s.c = j.at("c").get<double>();
    s.P = Eigen::Map<const Matrix>(P.data(), n, n);
    for (double v : j.at("recent").get<std::vector<double>>()) s.recent.push_back(v);
    s.n_updates = j.at("n_updates").get<std::int64_t>();
    s.residual_variance = j.at("residual_variance").get<double>();
    s.last_tick = j.at("last_tick").get<Tick>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptStore, std::string("OL-ARIMA state: ") + e.what());
  }
}

// ---- predictive maintenance --------------------------------------------------------

std::string_view to_string(MaintenanceReason r) {
  return r == MaintenanceReason::SustainedAlarm ? "sustained_alarm" : "forecast_crossing";
}

namespace {

// Strict ordering used both to pick one item per device and to sort the list.
bool before(const MaintenanceItem& a, const MaintenanceItem& b) {
  const bool sa = a.reason == MaintenanceReason::SustainedAlarm;
  const bool sb = b.reason == MaintenanceReason::SustainedAlarm;
  if (sa != sb) return sa;
  if (!sa && *a.crossing_tick != *b.crossing_tick) return *a.crossing_tick < *b.crossing_tick;
  if (a.predicted_peak != b.predicted_peak) return a.predicted_peak > b.predicted_peak;
  if (a.device_id != b.device_id) return a.device_id < b.device_id;
  return a.level < b.level;
}

}  // namespace

std::vector<MaintenanceItem> build_maintenance_list(const OutlierReport& outliers, const OlArimaStates& states,
                                                    const MaintenanceOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold <= 1.0) || options.window < 1 || options.sustained_ticks < 1)
    throw Error(ErrorCode::InvalidArgument, "maintenance threshold must lie in (0, 1] with a positive window");
  std::vector<MaintenanceItem> list;
  std::set<std::string> seen;
  for (const auto& outlier : outliers.outliers) {
    if (!seen.insert(outlier.device_id).second) continue;
    std::optional<MaintenanceItem> best;
    for (auto it = states.lower_bound({outlier.device_id, BehaviorLevel::B1});
         it != states.end() && it->first.first == outlier.device_id; ++it) {
      const OlArimaState& s = it->second;
      if (!s.warmed_up() || s.recent.empty()) continue;
      MaintenanceItem item;
      item.device_id = s.device_id;
      item.level = s.level;
      item.current_score = s.recent.back();
      item.window = options.window;
      const auto f = predict_behavior(s, options.window).forecast;
      item.predicted_peak = *std::max_element(f.begin(), f.end());
      const auto k = static_cast<std::size_t>(options.sustained_ticks);
      const bool sustained = s.recent.size() >= k &&
                             std::all_of(s.recent.end() - static_cast<std::ptrdiff_t>(k), s.recent.end(),
                                         [&](double v) { return v >= options.threshold; });
      if (sustained) {
        item.reason = MaintenanceReason::SustainedAlarm;
        item.predicted_peak = std::max(item.predicted_peak, item.current_score);
      } else {
        auto hit = std::find_if(f.begin(), f.end(), [&](double v) { return v >= options.threshold; });
        if (hit == f.end()) continue;
        item.reason = MaintenanceReason::ForecastCrossing;
        item.crossing_tick = s.last_tick + 1 + (hit - f.begin());
      }
      if (!best || before(item, *best)) best = item;
    }
    if (best) list.push_back(*best);
  }
  std::sort(list.begin(), list.end(), before);
  return list;
}

std::string format_maintenance(Tick tick, const MaintenanceItem& item) {
  std::ostringstream out;
  out << tick << ',' << item.device_id << ',' << to_string(item.reason) << ',' << format_double(item.current_score)
      << ',' << format_double(item.predicted_peak) << ',';
  if (item.crossing_tick) out << *item.crossing_tick;
  else out << '-';
  return out.str();
}

// ---- QoE and allocation ------------------------------------------------------------

double QoeParams::weight(int priority) const {
  if (priority < 1 || priority > 4) throw Error(ErrorCode::InvalidArgument, "priority must lie in 1..4");
  return priority_weights[static_cast<std::size_t>(priority - 1)];
}

void QoeParams::validate() const {
  for (std::size_t i = 0; i < priority_weights.size(); ++i)
    if (!(priority_weights[i] > 0.0) || (i > 0 && !(priority_weights[i] < priority_weights[i - 1])))
      throw Error(ErrorCode::InvalidArgument, "priority weights must be positive and strictly decreasing");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw Error(ErrorCode::InvalidArgument, "kappa must lie in (0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0) || !(gamma >= 0.0 && gamma <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "beta and gamma must lie in [0, 1]");
  if (!(lambda_util >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda_util must be non-negative");
}

void AllocationState::validate() const {
  if (!(capacity > 0.0) || !std::isfinite(capacity)) throw Error(ErrorCode::InvalidArgument, "capacity must be positive");
  if (subsystems.empty()) throw Error(ErrorCode::InvalidArgument, "allocation state has no subsystems");
  for (const auto& s : subsystems) {
    if (s.demand < 0.0 || s.predicted_usage < 0.0 || s.behavior < 0.0 || s.alarm_fraction < 0.0)
      throw Error(ErrorCode::NegativeInput, "subsystem '" + s.id + "' has a negative input");
    if (s.behavior > 1.0 || s.alarm_fraction > 1.0 || !std::isfinite(s.demand) || !std::isfinite(s.predicted_usage))
      throw Error(ErrorCode::InvalidArgument, "subsystem '" + s.id + "' has an out-of-range input");
    if (s.priority < 1 || s.priority > 4) throw Error(ErrorCode::InvalidArgument, "priority must lie in 1..4");
  }
}

double qoe_score(const SubsystemState& sub, double allocation, const QoeParams& params) {
  if (allocation < 0.0 || sub.demand < 0.0 || sub.behavior < 0.0 || sub.alarm_fraction < 0.0)
    throw Error(ErrorCode::NegativeInput, "QoE inputs must be non-negative");
  const double satisfaction = sub.demand == 0.0 ? 1.0 : std::pow(std::min(allocation / sub.demand, 1.0), params.kappa);
  return params.weight(sub.priority) * satisfaction * (1.0 - params.beta * std::min(sub.behavior, 1.0)) *
         (1.0 - params.gamma * std::min(sub.alarm_fraction, 1.0));
}

std::vector<double> AllocationDecision::adjustment() const {
  std::vector<double> out(allocation.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = allocation[i] - proposal[i];
  return out;
}

std::vector<double> water_fill(std::span<const double> shares, std::span<const double> demands, double capacity) {
  const auto n = shares.size();
  if (demands.size() != n) throw Error(ErrorCode::InvalidArgument, "shares and demands differ in length");
  std::vector<double> a(n, 0.0);
  std::vector<bool> fixed(n, false);
  double budget = std::max(capacity, 0.0);
  for (;;) {
    double weight = 0.0;
    std::size_t open = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed[i]) {
        weight += std::max(shares[i], 0.0);
        ++open;
      }
    if (open == 0) break;
    bool clipped = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) continue;
      const double part = weight > 0.0 ? std::max(shares[i], 0.0) / weight : 1.0 / static_cast<double>(open);
      a[i] = budget * part;
      if (a[i] >= demands[i]) {
        a[i] = demands[i];
        fixed[i] = true;
        clipped = true;
      }
    }
    if (!clipped) break;
    budget = std::max(capacity, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (fixed[i]) budget -= a[i];
    budget = std::max(budget, 0.0);
  }
  return a;
}

AllocationPolicy::AllocationPolicy(int subsystems, PolicyParams params, std::uint64_t seed)
    : subsystems_(subsystems),
      params_(params),
      seed_(seed),
      net_({4 * subsystems + 1, params.hidden, subsystems}, nn::Activation::Tanh, nn::Activation::Linear),
      epsilon_(params.epsilon) {
  if (subsystems < 1 || params.hidden < 1 || !(params.lr > 0.0) || !(params.noise_sigma > 0.0) ||
      !(params.epsilon >= 0.0 && params.epsilon <= 1.0) || !(params.epsilon_decay > 0.0 && params.epsilon_decay <= 1.0) ||
      !(params.baseline_decay >= 0.0 && params.baseline_decay < 1.0))
    throw Error(ErrorCode::InvalidArgument, "invalid allocation policy parameters");
  weights_ = Vector::Zero(net_.parameter_count());
  std::mt19937_64 rng(mix_seed(seed, 0xA110C));
  net_.init(weights_, rng);
}

Vector AllocationPolicy::context(const AllocationState& state) {
  const auto n = static_cast<Eigen::Index>(state.subsystems.size());
  Vector c(4 * n + 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = state.subsystems[static_cast<std::size_t>(i)];
    c[i] = std::min(s.demand / state.capacity, 4.0);
    c[n + i] = std::min(s.predicted_usage / state.capacity, 4.0);
    c[2 * n + i] = s.behavior;
    c[3 * n + i] = s.alarm_fraction;
    total += s.demand;
  }
  c[4 * n] = total > 0.0 ? std::min(state.capacity / total, 4.0) : 4.0;
  return c;
}

Vector AllocationPolicy::logits(const Vector& context, nn::Mlp::Tape* tape) const {
  if (context.size() != net_.input_size())
    throw Error(ErrorCode::InvalidArgument, "policy expects " + std::to_string(subsystems_) + " subsystems");
  return net_.forward(weights_, context, tape).col(0);
}

namespace {

std::vector<double> softmax(const Vector& z) {
  const Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  const Eigen::ArrayXd s = e / e.sum();
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<double> AllocationPolicy::shares(const Vector& context) const { return softmax(logits(context)); }

AllocationDecision AllocationPolicy::propose(const AllocationState& state) const {
  state.validate();
  AllocationDecision d;
  d.tick = state.tick;
  d.context = context(state);
  Vector z = logits(d.context);
  d.noise = Vector::Zero(z.size());
  std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(steps_) + 1));
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon_) {
    std::normal_distribution<double> gauss(0.0, params_.noise_sigma);
    for (Eigen::Index i = 0; i < z.size(); ++i) d.noise[i] = gauss(rng);
    d.explored = true;
  }
  d.shares = softmax(z + d.noise);
  std::vector<double> demands;
  for (const auto& s : state.subsystems) {
    d.subsystems.push_back(s.id);
    demands.push_back(s.demand);
  }
  for (double s : d.shares) d.proposal.push_back(s * state.capacity);
  d.allocation = water_fill(d.shares, demands, state.capacity);
  return d;
}

void AllocationPolicy::learn(const AllocationDecision& decision, double reward) {
  if (!std::isfinite(reward)) throw Error(ErrorCode::InvalidArgument, "reward must be finite");
  if (decision.noise.size() != subsystems_) throw Error(ErrorCode::InvalidArgument, "decision does not match the policy");
  if (!has_baseline_) {
    baseline_ = reward;
    has_baseline_ = true;
  }
  const double advantage = reward - baseline_;
  if (decision.explored && advantage != 0.0) {
    nn::Mlp::Tape tape;
    logits(decision.context, &tape);
    const double sigma2 = params_.noise_sigma * params_.noise_sigma;
    // descent direction of -advantage * log density of the perturbed logits
    const Matrix grad_out = -advantage * decision.noise / sigma2;
    Vector grad = Vector::Zero(weights_.size());
    net_.backward(weights_, tape, grad_out, grad);
    weights_ -= params_.lr * grad;
  }
  baseline_ = params_.baseline_decay * baseline_ + (1.0 - params_.baseline_decay) * reward;
  epsilon_ = std::max(params_.epsilon_floor, epsilon_ * params_.epsilon_decay);
  ++steps_;
}

nlohmann::json AllocationPolicy::to_json() const {
  return {{"subsystems", subsystems_},
          {"hidden", params_.hidden},
          {"lr", params_.lr},
          {"epsilon0", params_.epsilon},
          {"epsilon_decay", params_.epsilon_decay},
          {"epsilon_floor", params_.epsilon_floor},
          {"noise_sigma", params_.noise_sigma},
          {"baseline_decay", params_.baseline_decay},
          {"seed", seed_},
          {"weights", std::vector<double>(weights_.begin(), weights_.end())},
          {"epsilon", epsilon_},
          {"baseline", baseline_},
          {"has_baseline", has_baseline_},
          {"steps", steps_}};
}

AllocationPolicy AllocationPolicy::from_json(const nlohmann::json& j) {
  try {
    PolicyParams p;
    p.hidden = j.at("hidden").get<int>();
    p.lr = j.at("lr").get<double>();
    p.epsilon = j.at("epsilon0").get<double>();
    p.epsilon_decay = j.at("epsilon_decay").get<double>();
    p.epsilon_floor = j.at("epsilon_floor").get<double>();
    p.noise_sigma = j.at("noise_sigma").get<double>();
    p.baseline_decay = j.at("baseline_decay").get<double>();
    AllocationPolicy policy(j.at("subsystems").get<int>(), p, j.at("seed").get<std::uint64_t>());
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != policy.weights_.size())
      throw Error(ErrorCode::CorruptStore, "policy weights have the wrong length");
    policy.weights_ = Eigen::Map<const Vector>(w.data(), policy.weights_.size());
    policy.epsilon_ = j.at("epsilon").get<double>();
    policy.baseline_ = j.at("baseline").get<double>();
    policy.has_baseline_ = j.at("has_baseline").get<bool>();
    policy.steps_ = j.at("steps").get<std::int64_t>();
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptStore, std::string("policy state: ") + e.what());
  }
}

AllocationDecision propose_allocation(const AllocationState& state, const AllocationPolicy& policy) {
  return policy.propose(state);
}

void learn_step(AllocationPolicy& policy, const AllocationDecision& decision, double reward) {
  policy.learn(decision, reward);
}

double compute_reward(const AllocationDecision& decision, const AllocationState& state, const QoeParams& params) {
  if (decision.allocation.size() != state.subsystems.size())
    throw Error(ErrorCode::InvalidArgument, "decision and state differ in subsystem count");
  double reward = 0.0;
  double used = 0.0;
  for (std::size_t i = 0; i < decision.allocation.size(); ++i) {
    reward += qoe_score(state.subsystems[i], decision.allocation[i], params);
    used += decision.allocation[i];
  }
  return reward + params.lambda_util * used / state.capacity;
}

std::vector<std::string> format_allocation(const AllocationDecision& decision, const AllocationState& state,
                                           double reward) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < decision.allocation.size(); ++i) {
    std::ostringstream out;
    out << decision.tick << ',' << decision.subsystems[i] << ',' << format_double(state.subsystems[i].demand) << ','
        << format_double(decision.proposal[i]) << ',' << format_double(decision.allocation[i]) << ','
        << format_double(reward);
    lines.push_back(out.str());
  }
  return lines;
}

}  // namespace orca
