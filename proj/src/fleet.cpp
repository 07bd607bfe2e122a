#include "orca/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace orca {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return mix_seed(a, b); }

std::uint64_t hash_text(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Independent stream for one (seed, key...) tuple.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : rng_(key) {}
  double gaussian() { return normal_(rng_); }
  double uniform() { return uniform_(rng_); }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

enum Salt : std::uint64_t { kVector = 1, kSequence = 2, kDemand = 3, kBaseline = 4 };

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == text) return static_cast<E>(i);
  throw Error(ErrorCode::BadConfig, std::string("unknown ") + what + " '" + std::string(text) + "'");
}

constexpr std::array<std::string_view, 3> kIntensity{"low", "medium", "high"};
constexpr std::array<std::string_view, 5> kRegime{"normal", "degrading", "faulty", "botnet", "surge"};
constexpr std::array<std::string_view, 4> kFault{"hardware_fault", "traffic_anomaly", "resource_surge",
                                                 "degrading_drift"};

}  // namespace

std::string_view to_string(Intensity v) { return kIntensity[static_cast<std::size_t>(v)]; }
std::string_view to_string(Regime v) { return kRegime[static_cast<std::size_t>(v)]; }
std::string_view to_string(FaultKind v) { return kFault[static_cast<std::size_t>(v)]; }
std::string_view to_string(Label v) { return v == Label::Normal ? "normal" : "anomalous"; }
Intensity parse_intensity(std::string_view t) { return parse_enum<Intensity>(t, kIntensity, "intensity"); }
Regime parse_regime(std::string_view t) { return parse_enum<Regime>(t, kRegime, "regime"); }
FaultKind parse_fault_kind(std::string_view t) { return parse_enum<FaultKind>(t, kFault, "fault kind"); }

Regime regime_of(FaultKind kind) {
  switch (kind) {
    case FaultKind::HardwareFault: return Regime::Faulty;
    case FaultKind::TrafficAnomaly: return Regime::Botnet;
    case FaultKind::ResourceSurge: return Regime::Surge;
    case FaultKind::DegradingDrift: return Regime::Degrading;
  }
  return Regime::Normal;
}

BehaviorLevel level_of(FaultKind kind) {
  switch (kind) {
    case FaultKind::TrafficAnomaly: return BehaviorLevel::B2;
    case FaultKind::ResourceSurge: return BehaviorLevel::B3;
    default: return BehaviorLevel::B1;
  }
}

namespace {
BehaviorLevel level_of(Regime r) {
  switch (r) {
    case Regime::Botnet: return BehaviorLevel::B2;
    case Regime::Surge: return BehaviorLevel::B3;
    default: return BehaviorLevel::B1;
  }
}
}  // namespace

bool is_designated_feature(int j) { return j % 4 == 0; }

std::vector<DeviceProfile> reference_profiles() {
  using I = Intensity;
  struct Row {
    const char* name;
    int priority;
    I compute, data, latency;
  };
  const Row rows[] = {
      {"emergency_response", 1, I::High, I::High, I::High},
      {"vr_ar", 2, I::High, I::High, I::High},
      {"voice_assistant", 2, I::Medium, I::Medium, I::High},
      {"cognitive_assist", 2, I::High, I::High, I::Medium},
      {"face_access", 3, I::Medium, I::Medium, I::Medium},
      {"personal_id", 3, I::Medium, I::Medium, I::Medium},
      {"health_monitor", 2, I::Low, I::Low, I::Low},
      {"smart_home", 4, I::Medium, I::Low, I::Low},
      {"sensor", 4, I::Low, I::Low, I::Low},
  };
  std::vector<DeviceProfile> out;
  for (const auto& r : rows) {
    DeviceProfile p;
    p.type_name = r.name;
    p.priority = r.priority;
    p.compute_intensity = r.compute;
    p.data_intensity = r.data;
    p.latency_sensitivity = r.latency;
    p.subsystem = r.name;
    p.base_demand = r.compute == I::High ? 2.0 : r.compute == I::Medium ? 1.0 : 0.5;
    p.emits = {FeatureSchema::vectors(BehaviorLevel::B1, 8), FeatureSchema::vectors(BehaviorLevel::B2, 8),
               FeatureSchema::sequences(BehaviorLevel::B3, 1, 90)};
    out.push_back(std::move(p));
  }
  return out;
}

// ---- construction -------------------------------------------------------------------

Fleet Fleet::build(const FleetConfig& config, std::uint64_t seed) {
  const auto& sim = config.sim;
  if (config.locations < 1 || config.batches < 1) throw Error(ErrorCode::BadConfig, "locations and batches must be >= 1");
  if (sim.ts_interval < 1 || sim.factor_rank < 0 || !(sim.noise > 0.0 && sim.noise <= 1.0))
    throw Error(ErrorCode::BadConfig, "bad simulation parameters");
  std::set<std::string> names;
  long total = 0;
  for (const auto& t : config.types) {
    const auto& p = t.profile;
    if (p.type_name.empty() || p.type_name.find_first_of(", \t\n") != std::string::npos)
      throw Error(ErrorCode::BadConfig, "device type names must be non-empty without commas or spaces");
    if (!names.insert(p.type_name).second) throw Error(ErrorCode::BadConfig, "duplicate device type " + p.type_name);
    if (p.priority < 1 || p.priority > 4) throw Error(ErrorCode::BadConfig, p.type_name + ": priority must be 1..4");
    if (p.emits.empty()) throw Error(ErrorCode::BadConfig, p.type_name + ": emits no behavior target");
    std::set<BehaviorLevel> levels;
    for (const auto& s : p.emits)
      if (!levels.insert(s.level()).second) throw Error(ErrorCode::BadConfig, p.type_name + ": duplicate level");
    if (t.count < 0 || p.base_demand < 0.0) throw Error(ErrorCode::BadConfig, p.type_name + ": negative count or demand");
    total += t.count;
  }
  if (total == 0) throw Error(ErrorCode::BadConfig, "fleet has zero devices");

  Fleet f;
  f.config_ = config;
  f.seed_ = seed;
  std::size_t g = 0;
  for (std::size_t ti = 0; ti < config.types.size(); ++ti) {
    const auto& t = config.types[ti];
    const int width = std::max<int>(3, static_cast<int>(std::to_string(t.count).size()));
    for (int k = 1; k <= t.count; ++k, ++g) {
      Device d;
      std::string num = std::to_string(k);
      d.id = t.profile.type_name + "-" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
      d.type_index = ti;
      d.tags.subsystem = t.profile.subsystem.empty() ? t.profile.type_name : t.profile.subsystem;
      d.tags.location = "loc-" + std::to_string(g % static_cast<std::size_t>(config.locations) + 1);
      d.tags.batch = "batch-" + std::to_string(g % static_cast<std::size_t>(config.batches) + 1);
      f.index_[d.id] = f.devices_.size();
      f.devices_.push_back(std::move(d));
    }
    // Baselines depend on the type and the profile seed only, not the fleet seed.
    for (const auto& schema : t.profile.emits) {
      Stream s(mix(mix(sim.profile_seed, hash_text(t.profile.type_name)), static_cast<std::uint64_t>(schema.level()) + kBaseline * 16));
      Baseline b;
      const int dim = schema.dim();
      b.mean.resize(dim);
      b.loadings.resize(dim, sim.factor_rank);
      b.phase.resize(dim);
      b.noise = sim.noise;
      const double factor_norm = std::sqrt(std::max(0.0, 1.0 - sim.noise * sim.noise));
      for (int j = 0; j < dim; ++j) {
        b.mean[j] = sim.mean_spread * (2.0 * s.uniform() - 1.0);
        for (int r = 0; r < sim.factor_rank; ++r) b.loadings(j, r) = s.gaussian();
        const double n = b.loadings.row(j).norm();
        if (n > 0.0) b.loadings.row(j) *= factor_norm / n;
        b.phase[j] = 2.0 * std::numbers::pi * s.uniform();
      }
      f.baselines_[{ti, static_cast<int>(schema.level())}] = std::move(b);
    }
  }

  for (const auto& d : f.devices_) {
    auto it = std::find_if(f.subsystems_.begin(), f.subsystems_.end(),
                           [&](const SubsystemInfo& s) { return s.id == d.tags.subsystem; });
    const auto& p = f.profile_of(d);
    if (it == f.subsystems_.end()) {
      f.subsystems_.push_back({d.tags.subsystem, p.priority, p.latency_sensitivity, {}});
      it = std::prev(f.subsystems_.end());
    }
    it->priority = std::min(it->priority, p.priority);
    it->latency_class = std::max(it->latency_class, p.latency_sensitivity);
    it->members.push_back(d.id);
  }
  return f;
}

const Device& Fleet::device(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::UnknownDevice, "unknown device " + id);
  return devices_[it->second];
}

const Fleet::Baseline& Fleet::baseline(std::size_t type, BehaviorLevel level) const {
  return baselines_.at({type, static_cast<int>(level)});
}

Regime Fleet::active_regime(const Device& d, Tick tick) const {
  return d.regime != Regime::Normal && tick >= d.regime_since ? d.regime : Regime::Normal;
}

// ---- emission -----------------------------------------------------------------------

Sample Fleet::emit_vector(const Device& d, std::size_t index, const FeatureSchema& schema, Tick tick) const {
  const Baseline& b = baseline(d.type_index, schema.level());
  Stream s(mix(mix(mix(seed_, index), static_cast<std::uint64_t>(tick)), kVector * 16 + static_cast<std::uint64_t>(schema.level())));
  const int dim = schema.dim();
  Vector f(b.loadings.cols());
  for (auto& v : f) v = s.gaussian();
  Vector z = b.loadings * f;
  for (int j = 0; j < dim; ++j) z[j] += b.noise * s.gaussian();

  const Regime r = active_regime(d, tick);
  const bool hit = r != Regime::Normal && level_of(r) == schema.level();
  const double m = d.magnitude;
  const bool burst = s.uniform() < config_.sim.burst_probability;
  TelemetrySample out;
  out.tick = tick;
  out.device_id = d.id;
  out.level = schema.level();
  out.values = b.mean + z;
  if (hit) {
    for (int j = 0; j < dim; ++j) {
      if (!is_designated_feature(j)) continue;
      switch (r) {
        case Regime::Faulty:
        case Regime::Surge: out.values[j] += m; break;
        case Regime::Degrading: out.values[j] += m * static_cast<double>(tick - d.regime_since); break;
        case Regime::Botnet: out.values[j] = b.mean[j] + (1.0 + m) * z[j] + (burst ? 2.0 * m : 0.0); break;
        case Regime::Normal: break;
      }
    }
  }
  return out;
}

Sample Fleet::emit_sequence(const Device& d, std::size_t index, const FeatureSchema& schema, Tick tick) const {
  const Baseline& b = baseline(d.type_index, schema.level());
  const auto& sim = config_.sim;
  Stream s(mix(mix(mix(seed_, index), static_cast<std::uint64_t>(tick)), kSequence * 16 + static_cast<std::uint64_t>(schema.level())));
  const int len = schema.seq_len(), dim = schema.dim();
  const double window_phase = 2.0 * std::numbers::pi * s.uniform();
  const int burst_at = static_cast<int>(s.uniform() * std::max(1, len - 5));
  const double innov = std::sqrt(1.0 - sim.ts_phi * sim.ts_phi);

  auto draw = [&] {
    Vector f(b.loadings.cols());
    for (auto& v : f) v = s.gaussian();
    Vector u = b.loadings * f;
    for (int j = 0; j < dim; ++j) u[j] += b.noise * s.gaussian();
    return u;
  };
  SequenceSample out;
  out.tick = tick;
  out.device_id = d.id;
  out.level = schema.level();
  out.series.resize(len, dim);
  Vector e = draw();
  const double m = d.magnitude;
  for (int t = 0; t < len; ++t) {
    e = sim.ts_phi * e + innov * draw();
    const Tick at = tick - len + 1 + t;
    const Regime r = active_regime(d, at);
    const bool hit = r != Regime::Normal && level_of(r) == schema.level();
    for (int j = 0; j < dim; ++j) {
      const double wave = sim.ts_amplitude * std::sin(2.0 * std::numbers::pi * t / sim.ts_period + window_phase + b.phase[j]);
      double noise = e[j];
      double shift = 0.0;
      if (hit && is_designated_feature(j)) {
        switch (r) {
          case Regime::Faulty:
          case Regime::Surge: shift = m; break;
          case Regime::Degrading: shift = m * static_cast<double>(at - d.regime_since); break;
          case Regime::Botnet:
            noise *= 1.0 + m;
            if (t >= burst_at && t < burst_at + 5) shift = 2.0 * m;
            break;
          case Regime::Normal: break;
        }
      }
      out.series(t, j) = b.mean[j] + wave + noise + shift;
    }
  }
  return out;
}

std::vector<Sample> Fleet::emit(const Device& d, Tick tick) const {
  const std::size_t index = index_.at(d.id);
  std::vector<Sample> out;
  for (const auto& schema : profile_of(d).emits) {
    if (!schema.time_series())
      out.push_back(emit_vector(d, index, schema, tick));
    else if (tick % config_.sim.ts_interval == 0)
      out.push_back(emit_sequence(d, index, schema, tick));
  }
  return out;
}

StepOutput Fleet::step(Tick tick) {
  if (tick <= current_ || tick < 0)
    throw Error(ErrorCode::NonMonotonicTick,
                "tick " + std::to_string(tick) + " does not follow " + std::to_string(current_));
  current_ = tick;
  StepOutput out;
  for (const auto& d : devices_) {
    auto samples = emit(d, tick);
    std::move(samples.begin(), samples.end(), std::back_inserter(out.telemetry));
  }
  out.demands = demands(tick);
  return out;
}

std::vector<ResourceDemand> Fleet::demands(Tick tick) const {
  const auto& sim = config_.sim;
  std::vector<ResourceDemand> out;
  for (const auto& sub : subsystems_) {
    double base = 0.0;
    for (const auto& id : sub.members) {
      const Device& d = device(id);
      const double surge = active_regime(d, tick) == Regime::Surge ? 1.0 + d.magnitude : 1.0;
      base += profile_of(d).base_demand * surge;
    }
    const std::uint64_t h = hash_text(sub.id);
    Stream s(mix(mix(mix(seed_, h), static_cast<std::uint64_t>(tick)), kDemand));
    const double phase = static_cast<double>(h % 1000) / 1000.0 * 2.0 * std::numbers::pi;
    const double season = 1.0 + sim.demand_amplitude * std::sin(2.0 * std::numbers::pi * tick / sim.demand_period + phase);
    const double requested = std::max(0.0, base * season * (1.0 + sim.demand_noise * s.gaussian()));
    out.push_back({tick, sub.id, requested, sub.latency_class});
  }
  return out;
}

// ---- faults and labels ------------------------------------------------------------------

void Fleet::inject(const FaultInjection& fault) {
  if (fault.device_ids.empty()) throw Error(ErrorCode::InvalidArgument, "injection targets no device");
  if (!(fault.magnitude > 0.0) || !std::isfinite(fault.magnitude))
    throw Error(ErrorCode::InvalidArgument, "injection magnitude must be positive");
  if (fault.at_tick < current_) throw Error(ErrorCode::InvalidArgument, "injection lies in the past");
  for (const auto& id : fault.device_ids) device(id);
  for (const auto& id : fault.device_ids) {
    Device& d = devices_[index_.at(id)];
    d.regime = regime_of(fault.kind);
    d.regime_since = fault.at_tick;
    d.magnitude = fault.magnitude;
  }
}

std::map<std::string, Label> Fleet::ground_truth(Tick tick) const {
  std::map<std::string, Label> out;
  for (const auto& d : devices_) out[d.id] = active_regime(d, tick) == Regime::Normal ? Label::Normal : Label::Anomalous;
  return out;
}

// ---- persistence --------------------------------------------------------------------------

std::string Fleet::serialize() const {
  std::ostringstream out;
  out << "fleet 1 " << seed_ << ' ' << current_ << ' ' << devices_.size() << '\n';
  for (const auto& d : devices_) {
    out << d.id << ',' << config_.types[d.type_index].profile.type_name << ',' << d.tags.subsystem << ','
        << d.tags.location << ',' << d.tags.batch << ',' << to_string(d.regime) << ',' << d.regime_since << ','
        << format_double(d.magnitude) << '\n';
  }
  return out.str();
}

void Fleet::restore(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  std::uint64_t seed = 0;
  Tick tick = 0;
  std::size_t count = 0;
  in >> magic >> version >> seed >> tick >> count;
  if (!in || magic != "fleet" || version != 1) throw Error(ErrorCode::CorruptStore, "bad fleet state header");
  if (seed != seed_ || count != devices_.size()) throw Error(ErrorCode::CorruptStore, "fleet state does not match config");
  std::string line;
  std::getline(in, line);
  std::vector<Device> next = devices_;
  for (auto& d : next) {
    if (!std::getline(in, line)) throw Error(ErrorCode::CorruptStore, "fleet state truncated");
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
    if (f.size() != 8 || f[0] != d.id) throw Error(ErrorCode::CorruptStore, "fleet state device mismatch");
    d.regime = parse_regime(f[5]);
    d.regime_since = std::stoll(f[6]);
    d.magnitude = parse_double(f[7]);
  }
  devices_ = std::move(next);
  current_ = tick;
}

IngestRates ingest_rates(const Fleet& fleet, double nts_sample_kb, double ts_sample_kb) {
  IngestRates r;
  r.ts_interval = fleet.config().sim.ts_interval;
  for (const auto& d : fleet.devices())
    for (const auto& s : fleet.profile_of(d).emits) {
      if (s.time_series())
        r.ts_kb_per_interval += ts_sample_kb;
      else
        r.nts_kb_per_tick += nts_sample_kb;
    }
  return r;
}

// ---- configuration text -------------------------------------------------------------------

FeatureSchema parse_schema(const nlohmann::json& j, BehaviorLevel level) {
  const bool ts = j.value("time_series", false);
  std::vector<std::string> names;
  if (j.contains("names")) {
    names = j.at("names").get<std::vector<std::string>>();
    if (j.contains("dim") && j.at("dim").get<int>() != static_cast<int>(names.size()))
      throw Error(ErrorCode::BadConfig, "dim disagrees with feature names");
  } else {
    const int dim = j.value("dim", 0);
    if (dim < 1) throw Error(ErrorCode::BadConfig, "target needs dim >= 1 or feature names");
    for (int i = 0; i < dim; ++i) names.push_back("f" + std::to_string(i));
  }
  try {
    return ts ? FeatureSchema::sequences(level, std::move(names), j.value("seq_len", 0))
              : FeatureSchema::vectors(level, std::move(names));
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }
}

FleetConfig parse_fleet_config(const nlohmann::json& j) {
  try {
    FleetConfig c;
    c.locations = j.value("locations", c.locations);
    c.batches = j.value("batches", c.batches);
    if (j.contains("simulation")) {
      const auto& s = j.at("simulation");
      auto& p = c.sim;
      p.factor_rank = s.value("factor_rank", p.factor_rank);
      p.noise = s.value("noise", p.noise);
      p.mean_spread = s.value("mean_spread", p.mean_spread);
      p.ts_interval = s.value("ts_interval", p.ts_interval);
      p.ts_period = s.value("ts_period", p.ts_period);
      p.ts_amplitude = s.value("ts_amplitude", p.ts_amplitude);
      p.ts_phi = s.value("ts_phi", p.ts_phi);
      p.demand_period = s.value("demand_period", p.demand_period);
      p.demand_amplitude = s.value("demand_amplitude", p.demand_amplitude);
      p.demand_noise = s.value("demand_noise", p.demand_noise);
      p.burst_probability = s.value("burst_probability", p.burst_probability);
      p.profile_seed = s.value("profile_seed", p.profile_seed);
    }
    for (const auto& t : j.at("device_types")) {
      DeviceTypeConfig tc;
      auto& p = tc.profile;
      p.type_name = t.at("name").get<std::string>();
      tc.count = t.value("count", 0);
      p.priority = t.value("priority", 4);
      p.compute_intensity = parse_intensity(t.value("compute", std::string("low")));
      p.data_intensity = parse_intensity(t.value("data", std::string("low")));
      p.latency_sensitivity = parse_intensity(t.value("latency", std::string("low")));
      p.subsystem = t.value("subsystem", p.type_name);
      p.base_demand = t.value("base_demand", 1.0);
      for (const auto& target : t.at("targets")) {
        const auto level = parse_level(target.at("level").get<std::string>());
        p.emits.push_back(parse_schema(target, level));
      }
      c.types.push_back(std::move(tc));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("fleet config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadConfig) throw;
    throw Error(ErrorCode::BadConfig, e.what());
  }
}

nlohmann::json to_json(const FleetConfig& c) {
  nlohmann::json types = nlohmann::json::array();
  for (const auto& t : c.types) {
    const auto& p = t.profile;
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& s : p.emits) {
      nlohmann::json e{{"level", std::string(to_string(s.level()))}, {"names", s.names()}, {"time_series", s.time_series()}};
      if (s.time_series()) e["seq_len"] = s.seq_len();
      targets.push_back(std::move(e));
    }
    types.push_back({{"name", p.type_name},
                     {"count", t.count},
                     {"priority", p.priority},
                     {"compute", std::string(to_string(p.compute_intensity))},
                     {"data", std::string(to_string(p.data_intensity))},
                     {"latency", std::string(to_string(p.latency_sensitivity))},
                     {"subsystem", p.subsystem},
                     {"base_demand", p.base_demand},
                     {"targets", std::move(targets)}});
  }
  const auto& s = c.sim;
  return {{"locations", c.locations},
          {"batches", c.batches},
          {"simulation",
           {{"factor_rank", s.factor_rank}, {"noise", s.noise}, {"mean_spread", s.mean_spread},
            {"ts_interval", s.ts_interval}, {"ts_period", s.ts_period}, {"ts_amplitude", s.ts_amplitude},
            {"ts_phi", s.ts_phi}, {"demand_period", s.demand_period}, {"demand_amplitude", s.demand_amplitude},
            {"demand_noise", s.demand_noise}, {"burst_probability", s.burst_probability},
            {"profile_seed", s.profile_seed}}},
          {"device_types", std::move(types)}};
}

FaultInjection parse_injection(const nlohmann::json& j, const Fleet& fleet) {
  try {
    FaultInjection f;
    f.at_tick = j.at("at_tick").get<Tick>();
    f.kind = parse_fault_kind(j.at("kind").get<std::string>());
    f.magnitude = j.value("magnitude", 1.0);
    if (j.contains("devices")) {
      f.device_ids = j.at("devices").get<std::vector<std::string>>();
      for (const auto& id : f.device_ids) fleet.device(id);
    } else {
      const auto& sel = j.at("select");
      const auto type = sel.at("type").get<std::string>();
      const int count = sel.at("count").get<int>();
      std::vector<std::string> members;
      for (const auto& d : fleet.devices())
        if (fleet.profile_of(d).type_name == type) members.push_back(d.id);
      if (count < 1 || static_cast<std::size_t>(count) > members.size())
        throw Error(ErrorCode::BadConfig, "select count out of range for type " + type);
      for (int i = 0; i < count; ++i)
        f.device_ids.push_back(members[static_cast<std::size_t>(i) * members.size() / static_cast<std::size_t>(count)]);
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("injection: ") + e.what());
  }
}

nlohmann::json to_json(const FaultInjection& f) {
  return {{"at_tick", f.at_tick}, {"kind", std::string(to_string(f.kind))}, {"magnitude", f.magnitude}, {"devices", f.device_ids}};
}

}  // namespace orca
