#include "orca/manager.hpp"

#include "orca/model_store.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace orca {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kStateFormatVersion = 1;

std::uint64_t hash_text(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

json parse_json_file(const fs::path& path, ErrorCode on_error) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(on_error, path.filename().string() + ": " + e.what());
  }
}

ModelFamily parse_family_name(std::string text) {
  std::string norm;
  for (char c : text)
    if (c != '-' && c != '_') norm.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return parse_family(norm);
}

ModelSpec parse_spec(ModelFamily family, const json& h) {
  ModelSpec spec = ModelSpec::defaults(family);
  std::visit(
      [&](auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, OcsvmHyper>) {
          v.nu = h.value("nu", v.nu);
          v.rbf_gamma = h.value("gamma", v.rbf_gamma);
        } else if constexpr (std::is_same_v<T, MarimaHyper>) {
          v.p = h.value("p", v.p);
          v.d = h.value("d", v.d);
          v.q = h.value("q", v.q);
        } else if constexpr (std::is_same_v<T, GanEdHyper>) {
          v.layers = h.value("layers", v.layers);
          v.latent_dim = h.value("latent_dim", v.latent_dim);
          v.epochs = h.value("epochs", v.epochs);
          v.lr = h.value("lr", v.lr);
          v.batch = h.value("batch", v.batch);
          v.lambda_rec = h.value("lambda_rec", v.lambda_rec);
          v.alpha = h.value("alpha", v.alpha);
        } else {
          v.layers = h.value("layers", v.layers);
          v.epochs = h.value("epochs", v.epochs);
          v.lr = h.value("lr", v.lr);
          v.batch = h.value("batch", v.batch);
        }
      },
      spec.hyper);
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }
  return spec;
}

json spec_to_json(const ModelSpec& spec) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, OcsvmHyper>) return {{"nu", v.nu}, {"gamma", v.rbf_gamma}};
        else if constexpr (std::is_same_v<T, MarimaHyper>) return {{"p", v.p}, {"d", v.d}, {"q", v.q}};
        else if constexpr (std::is_same_v<T, GanEdHyper>)
          return {{"layers", v.layers}, {"latent_dim", v.latent_dim}, {"epochs", v.epochs}, {"lr", v.lr},
                  {"batch", v.batch},   {"lambda_rec", v.lambda_rec}, {"alpha", v.alpha}};
        else return {{"layers", v.layers}, {"epochs", v.epochs}, {"lr", v.lr}, {"batch", v.batch}};
      },
      spec.hyper);
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key) && !j.at(key).is_null()) into = j.at(key).get<T>();
}

}  // namespace

// ---- configuration -----------------------------------------------------------------

ManagerConfig parse_manager_config(const json& j) {
  try {
    ManagerConfig c;
    c.fleet = parse_fleet_config(j);
    const json none = json::object();
    const auto& th = j.value("thresholds", none);
    read(th, "alarm", c.alarm_threshold);
    read(th, "dim", c.dim_threshold);
    read(th, "missing_limit", c.missing_limit);
    for (const auto& t : j.at("device_types")) {
      const auto type = t.at("name").get<std::string>();
      for (const auto& target : t.at("targets")) {
        const auto family = target.value("family", std::string("auto"));
        if (family == "auto" && !target.contains("hyper")) continue;
        const auto level = parse_level(target.at("level").get<std::string>());
        const auto schema = parse_schema(target, level);
        const auto chosen = family == "auto"
                                ? select_family(schema.time_series(), dimensionality(schema), c.dim_threshold)
                                : parse_family_name(family);
        c.specs[{type, level}] = parse_spec(chosen, target.value("hyper", json::object()));
      }
    }
    const auto& kb = j.value("sample_kb", none);
    read(kb, "nts", c.nts_sample_kb);
    read(kb, "ts", c.ts_sample_kb);

    const auto& sy = j.value("synthesis", none);
    read(sy, "window", c.score_window);
    read(sy, "k", c.cluster.k);
    read(sy, "restarts", c.cluster.restarts);
    read(sy, "max_k", c.cluster.max_auto_k);
    read(sy, "min_silhouette", c.cluster.min_silhouette);
    read(sy, "far_sigma", c.cluster.far_sigma);
    read(sy, "micro_fraction", c.cluster.micro_fraction);
    read(sy, "alarming_fraction", c.cluster.alarming_fraction);
    read(sy, "top_k", c.insights.k);
    read(sy, "history_depth", c.insights.history_depth);
    read(sy, "location_margin", c.insights.location_margin);
    read(sy, "batch_std", c.insights.batch_std);

    const auto& fc = j.value("forecast", none);
    read(fc, "window", c.forecast.window);
    read(fc, "hidden", c.forecast.hidden);
    read(fc, "epochs", c.forecast.epochs);
    read(fc, "lr", c.forecast.lr);
    read(fc, "batch", c.forecast.batch);
    read(fc, "retrain_every", c.forecast.retrain_every);
    read(fc, "history_limit", c.forecast.history_limit);
    read(fc, "horizon", c.forecast_horizon);

    const auto& mt = j.value("maintenance", none);
    read(mt, "window", c.maintenance.window);
    read(mt, "sustained_ticks", c.maintenance.sustained_ticks);
    read(mt, "p", c.arima_p);
    read(mt, "d", c.arima_d);
    read(mt, "intercept", c.arima_intercept);

    const auto& q = j.value("qoe", none);
    if (q.contains("weights")) {
      const auto w = q.at("weights").get<std::vector<double>>();
      if (w.size() != 4) throw Error(ErrorCode::BadConfig, "qoe weights need four entries");
      std::copy(w.begin(), w.end(), c.qoe.priority_weights.begin());
    }
    read(q, "kappa", c.qoe.kappa);
    read(q, "beta", c.qoe.beta);
    read(q, "gamma", c.qoe.gamma);
    read(q, "lambda_util", c.qoe.lambda_util);

    const auto& al = j.value("allocator", none);
    if (al.contains("capacity") && !al.at("capacity").is_null()) c.capacity = al.at("capacity").get<double>();
    read(al, "capacity_fraction", c.capacity_fraction);
    read(al, "hidden", c.allocator.hidden);
    read(al, "lr", c.allocator.lr);
    read(al, "epsilon", c.allocator.epsilon);
    read(al, "epsilon_decay", c.allocator.epsilon_decay);
    read(al, "epsilon_floor", c.allocator.epsilon_floor);
    read(al, "noise_sigma", c.allocator.noise_sigma);
    read(al, "baseline_decay", c.allocator.baseline_decay);

    const auto& tr = j.value("training", none);
    read(tr, "ticks", c.training.ticks);
    read(tr, "max_samples", c.training.max_samples);

    read(j, "seed", c.seed);
    read(j, "state_dir", c.state_dir);
    if (j.contains("injections")) c.injections = j.at("injections");

    c.maintenance.threshold = c.alarm_threshold;
    c.cluster.alarm_threshold = c.alarm_threshold;
    c.insights.alarm_threshold = c.alarm_threshold;
    try {
      c.qoe.validate();
      UsageForecaster check(c.forecast);
    } catch (const Error& e) {
      throw Error(ErrorCode::BadConfig, e.what());
    }
    if (!(c.alarm_threshold > 0.0 && c.alarm_threshold <= 1.0) || c.score_window < 1 || c.dim_threshold < 1 ||
        c.training.ticks < 1 || c.training.max_samples < 10 || c.forecast_horizon < 1 || !(c.capacity_fraction > 0.0) ||
        (c.capacity && !(*c.capacity > 0.0)) || !c.injections.is_array())
      throw Error(ErrorCode::BadConfig, "configuration value out of range");
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("config: ") + e.what());
  }
}

json to_json(const ManagerConfig& c) {
  json j = to_json(c.fleet);
  for (auto& t : j.at("device_types"))
    for (auto& target : t.at("targets")) {
      const auto key = std::pair{t.at("name").get<std::string>(), parse_level(target.at("level").get<std::string>())};
      auto it = c.specs.find(key);
      if (it == c.specs.end()) {
        target["family"] = "auto";
      } else {
        target["family"] = std::string(to_string(it->second.family()));
        target["hyper"] = spec_to_json(it->second);
      }
    }
  j["thresholds"] = {{"alarm", c.alarm_threshold}, {"dim", c.dim_threshold}, {"missing_limit", c.missing_limit}};
  j["sample_kb"] = {{"nts", c.nts_sample_kb}, {"ts", c.ts_sample_kb}};
  j["synthesis"] = {{"window", c.score_window},
                    {"k", c.cluster.k},
                    {"restarts", c.cluster.restarts},
                    {"max_k", c.cluster.max_auto_k},
                    {"min_silhouette", c.cluster.min_silhouette},
                    {"far_sigma", c.cluster.far_sigma},
                    {"micro_fraction", c.cluster.micro_fraction},
                    {"alarming_fraction", c.cluster.alarming_fraction},
                    {"top_k", c.insights.k},
                    {"history_depth", c.insights.history_depth},
                    {"location_margin", c.insights.location_margin},
                    {"batch_std", c.insights.batch_std}};
  j["forecast"] = {{"window", c.forecast.window},   {"hidden", c.forecast.hidden},
                   {"epochs", c.forecast.epochs},   {"lr", c.forecast.lr},
                   {"batch", c.forecast.batch},     {"retrain_every", c.forecast.retrain_every},
                   {"history_limit", c.forecast.history_limit}, {"horizon", c.forecast_horizon}};
  j["maintenance"] = {{"window", c.maintenance.window},
                      {"sustained_ticks", c.maintenance.sustained_ticks},
                      {"p", c.arima_p},
                      {"d", c.arima_d},
                      {"intercept", c.arima_intercept}};
  j["qoe"] = {{"weights", c.qoe.priority_weights}, {"kappa", c.qoe.kappa}, {"beta", c.qoe.beta},
              {"gamma", c.qoe.gamma}, {"lambda_util", c.qoe.lambda_util}};
  j["allocator"] = {{"capacity", c.capacity ? json(*c.capacity) : json(nullptr)},
                    {"capacity_fraction", c.capacity_fraction},
                    {"hidden", c.allocator.hidden},
                    {"lr", c.allocator.lr},
                    {"epsilon", c.allocator.epsilon},
                    {"epsilon_decay", c.allocator.epsilon_decay},
                    {"epsilon_floor", c.allocator.epsilon_floor},
                    {"noise_sigma", c.allocator.noise_sigma},
                    {"baseline_decay", c.allocator.baseline_decay}};
  j["training"] = {{"ticks", c.training.ticks}, {"max_samples", c.training.max_samples}};
  j["seed"] = c.seed;
  j["state_dir"] = c.state_dir;
  j["injections"] = c.injections;
  return j;
}

ManagerConfig load_manager_config(const fs::path& path) {
  return parse_manager_config(parse_json_file(path, ErrorCode::BadConfig));
}

std::uint64_t resolve_seed(std::uint64_t fallback) {
  const char* env = std::getenv("ORCA_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  const std::string_view text(env);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size())
    throw Error(ErrorCode::BadConfig, "ORCA_SEED must be a non-negative integer, got '" + std::string(text) + "'");
  return v;
}

// ---- registry ----------------------------------------------------------------------

void ModelRegistry::add(RegistryEntry entry) {
  Key key{entry.device_type, entry.schema.level()};
  if (entries_.contains(key))
    throw Error(ErrorCode::DuplicateEntry,
                "(" + entry.device_type + ", " + std::string(to_string(key.second)) + ") is already registered");
  entries_.emplace(std::move(key), std::move(entry));
}

const RegistryEntry* ModelRegistry::find(const std::string& type, BehaviorLevel level) const {
  auto it = entries_.find({type, level});
  return it == entries_.end() ? nullptr : &it->second;
}

RegistryEntry& ModelRegistry::at(const Key& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(ErrorCode::UntrainedModel, "no registry entry for " + key.first);
  return it->second;
}

void ModelRegistry::set_model(const Key& key, TrainedModel model) {
  auto& e = at(key);
  if (!(model.schema() == e.schema))
    throw Error(ErrorCode::SchemaMismatch, "model schema differs from the registered target of " + key.first);
  e.model = std::make_shared<const TrainedModel>(std::move(model));
}

std::size_t ModelRegistry::type_count() const {
  std::set<std::string> types;
  for (const auto& [key, e] : entries_) types.insert(key.first);
  return types.size();
}

std::size_t ModelRegistry::max_levels() const {
  std::map<std::string, std::size_t> per_type;
  for (const auto& [key, e] : entries_) ++per_type[key.first];
  std::size_t m = 0;
  for (const auto& [t, n] : per_type) m = std::max(m, n);
  return m;
}

bool ModelRegistry::all_trained() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const auto& kv) { return kv.second.model != nullptr; });
}

ModelRegistry register_models(const ManagerConfig& config) {
  ModelRegistry r;
  for (const auto& t : config.fleet.types)
    for (const auto& schema : t.profile.emits) {
      auto it = config.specs.find({t.profile.type_name, schema.level()});
      ModelSpec spec = it != config.specs.end()
                           ? it->second
                           : ModelSpec::defaults(select_family(schema.time_series(), dimensionality(schema),
                                                               config.dim_threshold));
      r.add({t.profile.type_name, schema, std::move(spec), nullptr});
    }
  return r;
}

// ---- cycle -------------------------------------------------------------------------

std::string format_report(const CycleReport& r, bool with_times) {
  std::ostringstream out;
  out << "tick=" << r.tick << " scored=" << r.samples_scored << " rejected=" << r.samples_rejected
      << " alarms=" << r.alarms << " outliers=" << r.outlier_count << " maintenance=" << r.maintenance_count
      << " reward=" << std::fixed << std::setprecision(4) << r.reward << " allocation=";
  for (std::size_t i = 0; i < r.subsystems.size(); ++i)
    out << (i ? "," : "") << r.subsystems[i] << ':' << std::setprecision(3) << r.allocation[i];
  out << "/" << std::setprecision(3) << r.capacity;
  if (with_times)
    out << std::setprecision(2) << " observe_ms=" << 1e3 * r.phase_seconds[0]
        << " synthesize_ms=" << 1e3 * r.phase_seconds[1] << " respond_ms=" << 1e3 * r.phase_seconds[2];
  return out.str();
}

std::string format_score(const ScoreRecord& r) {
  std::ostringstream out;
  out << r.tick << ',' << r.device_id << ',' << to_string(r.level) << ',' << format_double(r.score.value) << ','
      << format_double(r.score.raw) << ',' << (r.score.alarming ? 1 : 0);
  return out.str();
}

ScoreRecord parse_score(std::string_view line) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      f.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  f.push_back(std::move(cur));
  if (f.size() != 6) throw Error(ErrorCode::CorruptStore, "score log line has " + std::to_string(f.size()) + " fields");
  ScoreRecord r;
  try {
    r.tick = std::stoll(f[0]);
    r.device_id = f[1];
    r.level = parse_level(f[2]);
    r.score.value = parse_double(f[3]);
    r.score.raw = parse_double(f[4]);
    r.score.alarming = f[5] == "1";
  } catch (const std::exception& e) {
    throw Error(ErrorCode::CorruptStore, std::string("score log: ") + e.what());
  }
  return r;
}

namespace {

double initial_capacity(const ManagerConfig& c) {
  if (c.capacity) return *c.capacity;
  double total = 0.0;
  for (const auto& t : c.fleet.types) total += t.count * t.profile.base_demand;
  return std::max(c.capacity_fraction * total, 1e-9);
}

std::size_t subsystem_count(const ManagerConfig& c) {
  std::set<std::string> s;
  for (const auto& t : c.fleet.types) s.insert(t.profile.subsystem);
  return s.size();
}

std::shared_ptr<std::ofstream> open_log(const fs::path& path, const char* header) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  auto out = std::make_shared<std::ofstream>(path, std::ios::binary | std::ios::app);
  if (!*out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  if (fresh) *out << header << '\n';
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Engine::Engine(ManagerConfig config)
    : config_(std::move(config)),
      fleet_(Fleet::build(config_.fleet, config_.seed)),
      registry_(register_models(config_)),
      capacity_(initial_capacity(config_)),
      policy_(static_cast<int>(subsystem_count(config_)), config_.allocator, mix_seed(config_.seed, 0xA1)),
      insights_(config_.insights) {
  for (const auto& d : fleet_.devices())
    for (const auto& schema : fleet_.profile_of(d).emits) registrations_[d.id].insert(schema.level());
  for (const auto& s : fleet_.subsystems()) forecasters_.emplace(s.id, UsageForecaster(config_.forecast));
  if (!config_.injections.empty()) inject(config_.injections);
}

std::string Engine::type_of(const std::string& device_id) const {
  return fleet_.profile_of(fleet_.device(device_id)).type_name;
}

TrainSummary Engine::train() {
  Fleet source = Fleet::build(config_.fleet, mix_seed(config_.seed, 0x7EA1));
  std::vector<Sample> samples;
  for (Tick t = 0; t < config_.training.ticks; ++t) {
    auto out = source.step(t);
    std::move(out.telemetry.begin(), out.telemetry.end(), std::back_inserter(samples));
  }
  return train_from(samples);
}

TrainSummary Engine::train_from(const std::vector<Sample>& samples) {
  std::map<ModelRegistry::Key, std::vector<const Sample*>> grouped;
  for (const auto& s : samples) grouped[{type_of(sample_device(s)), sample_level(s)}].push_back(&s);
  TrainSummary summary;
  for (auto& [key, entry] : registry_.entries()) {
    const auto& pool = grouped[key];
    if (pool.empty())
      throw Error(ErrorCode::InsufficientData, "no training data for (" + key.first + ", " + std::string(to_string(key.second)) + ")");
    Dataset ds{entry.schema, {}, std::nullopt, false};
    const auto cap = static_cast<std::size_t>(config_.training.max_samples);
    const std::size_t n = std::min(pool.size(), cap);
    for (std::size_t i = 0; i < n; ++i) ds.samples.push_back(*pool[i * pool.size() / n]);
    const auto t0 = std::chrono::steady_clock::now();
    auto cleaned = clean_dataset(ds, config_.missing_limit).first;
    const int version = entry.model ? entry.model->version() + 1 : 1;
    const auto seed = mix_seed(config_.seed, hash_text(key.first) + static_cast<std::uint64_t>(key.second));
    auto model = train_model(cleaned, entry.spec, seed, std::max<Tick>(fleet_.current_tick(), 0), version).first;
    summary.items.push_back({key.first, key.second, model.family(), cleaned.samples.size(), seconds_since(t0)});
    registry_.set_model(key, std::move(model));
  }
  return summary;
}

void Engine::inject(const json& injections) {
  const json list = injections.is_array() ? injections : json::array({injections});
  for (const auto& j : list) fleet_.inject(parse_injection(j, fleet_));
}

void Engine::attach_logs(const fs::path& dir) {
  fs::create_directories(dir);
  score_log_ = open_log(dir / "score_log.csv", "tick,device_id,level,value,raw,alarming");
  insight_log_ = open_log(dir / "insights.csv", "tick,kind,group_id,mean,std,bin0,bin1,bin2,bin3,bin4,bin5,bin6,bin7,bin8,bin9,flags");
  maintenance_log_ = open_log(dir / "maintenance.csv", "tick,device_id,reason,current,predicted_peak,crossing_tick");
  allocation_log_ = open_log(dir / "allocation.csv", "tick,subsystem,demand,proposal,final,reward");
}

AnomalyScore Engine::score_sample(const Sample& raw) const {
  const auto& id = sample_device(raw);
  const auto type = type_of(id);
  const RegistryEntry* e = registry_.find(type, sample_level(raw));
  if (e == nullptr || !e->model)
    throw Error(ErrorCode::UntrainedModel,
                "no trained model for (" + type + ", " + std::string(to_string(sample_level(raw))) + ")");
  return evaluate(*e->model, raw, config_.alarm_threshold, config_.missing_limit);
}

std::vector<GroupDefinition> Engine::groups() const {
  std::vector<GroupDefinition> out;
  for (const auto& s : fleet_.subsystems()) out.push_back({GroupKind::Subsystem, s.id, s.members});
  std::map<std::string, std::vector<std::string>> loc, batch;
  for (const auto& d : fleet_.devices()) {
    loc[d.tags.location].push_back(d.id);
    batch[d.tags.batch].push_back(d.id);
  }
  for (auto& [id, m] : loc) out.push_back({GroupKind::Location, id, std::move(m)});
  for (auto& [id, m] : batch) out.push_back({GroupKind::Batch, id, std::move(m)});
  return out;
}

CycleReport Engine::run_cycle(Tick tick) {
  CycleReport report;
  report.tick = tick;
  report.capacity = capacity_;

  // observe
  auto t0 = std::chrono::steady_clock::now();
  const StepOutput out = fleet_.step(tick);
  std::vector<ScoreRecord> scored;
  scored.reserve(out.telemetry.size());
  for (const auto& s : out.telemetry) {
    try {
      scored.push_back({tick, sample_device(s), sample_level(s), score_sample(s)});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SchemaMismatch) throw;
      ++report.samples_rejected;
    }
  }
  report.samples_scored = scored.size();
  for (const auto& r : scored) report.alarms += r.score.alarming;
  if (score_log_) {
    for (const auto& r : scored) *score_log_ << format_score(r) << '\n';
    score_log_->flush();
  }
  window_.insert(window_.end(), scored.begin(), scored.end());
  report.phase_seconds[0] = seconds_since(t0);

  // synthesize: reads only the score window
  t0 = std::chrono::steady_clock::now();
  while (!window_.empty() && window_.front().tick <= tick - config_.score_window) window_.pop_front();
  const std::vector<ScoreRecord> snapshot(window_.begin(), window_.end());
  const ScoreMatrix matrix = build_score_matrix(snapshot, tick, config_.score_window, registrations_);
  outliers_ = OutlierReport{tick, {}};
  if (matrix.populated_devices().size() >= 2) {
    ClusterOptions co = config_.cluster;
    co.seed = mix_seed(config_.seed, static_cast<std::uint64_t>(tick));
    outliers_ = cluster_and_outliers(matrix, co).second;
  }
  const auto insight = insights_.update(matrix, groups());
  std::map<std::string, double> demand, predicted;
  for (const auto& d : out.demands) {
    demand[d.subsystem] = d.requested;
    auto& history = usage_[d.subsystem];
    history.push_back(d.requested);
    const auto limit = static_cast<std::size_t>(config_.forecast.history_limit);
    if (history.size() > limit) history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(limit));
    auto& f = forecasters_.at(d.subsystem);
    f.maybe_retrain(history, mix_seed(config_.seed, hash_text(d.subsystem)), tick);
    if (f.trained()) {
      const auto ahead = f.forecast(history, config_.forecast_horizon);
      predicted[d.subsystem] = std::accumulate(ahead.begin(), ahead.end(), 0.0) / static_cast<double>(ahead.size());
    } else {
      predicted[d.subsystem] = d.requested;
    }
  }
  report.outlier_count = outliers_.outliers.size();
  report.phase_seconds[1] = seconds_since(t0);

  // respond
  t0 = std::chrono::steady_clock::now();
  for (const auto& r : scored) {
    const ModelRegistry::Key key{r.device_id, r.level};
    auto it = arima_.find(key);
    if (it == arima_.end())
      it = arima_.emplace(key, OlArimaState::make(r.device_id, r.level, config_.arima_p, config_.arima_d, config_.arima_intercept)).first;
    ol_arima_update(it->second, std::clamp(r.score.value, 0.0, 1.0), tick);
  }
  maintenance_ = build_maintenance_list(outliers_, arima_, config_.maintenance);
  report.maintenance_count = maintenance_.size();

  AllocationState state;
  state.tick = tick;
  state.capacity = capacity_;
  for (const auto& s : fleet_.subsystems()) {
    SubsystemState ss;
    ss.id = s.id;
    ss.priority = s.priority;
    ss.demand = demand[s.id];
    ss.predicted_usage = std::max(predicted[s.id], 0.0);
    double sum = 0.0;
    std::size_t scored_members = 0, alarming = 0;
    for (const auto& m : s.members) {
      const auto& row = matrix.rows.at(m);
      double dev = 0.0;
      int cells = 0;
      bool alarm = false;
      for (const auto& c : row)
        if (c && c->present) {
          dev += c->current;
          ++cells;
          alarm = alarm || c->current >= config_.alarm_threshold;
        }
      if (cells > 0) {
        sum += dev / cells;
        ++scored_members;
      }
      alarming += alarm;
    }
    ss.behavior = scored_members ? std::clamp(sum / static_cast<double>(scored_members), 0.0, 1.0) : 0.0;
    ss.alarm_fraction = s.members.empty() ? 0.0 : static_cast<double>(alarming) / static_cast<double>(s.members.size());
    state.subsystems.push_back(ss);
  }
  const auto decision = policy_.propose(state);
  report.reward = compute_reward(decision, state, config_.qoe);
  policy_.learn(decision, report.reward);
  report.subsystems = decision.subsystems;
  report.allocation = decision.allocation;

  if (insight_log_) {
    for (const auto& g : insight) *insight_log_ << format_insight(g) << '\n';
    insight_log_->flush();
  }
  if (maintenance_log_) {
    for (const auto& m : maintenance_) *maintenance_log_ << format_maintenance(tick, m) << '\n';
    maintenance_log_->flush();
  }
  if (allocation_log_) {
    for (const auto& line : format_allocation(decision, state, report.reward)) *allocation_log_ << line << '\n';
    allocation_log_->flush();
  }
  report.phase_seconds[2] = seconds_since(t0);
  return report;
}

void Engine::save(const fs::path& dir) const {
  fs::create_directories(dir / "models");
  write_file(dir / "config.json", to_json(config_).dump(2) + "\n");
  for (const auto& [key, e] : registry_.entries())
    if (e.model) save_model(*e.model, dir / "models" / model_file_name(key.first, key.second));
  write_file(dir / "fleet.txt", fleet_.serialize());
  write_file(dir / "policy.json", policy_.to_json().dump() + "\n");
  json states = json::array();
  for (const auto& [key, s] : arima_) states.push_back(to_json(s));
  write_file(dir / "olarima.json", states.dump() + "\n");
  json usage = json::object(), forecasters = json::object();
  for (const auto& [id, h] : usage_) usage[id] = h;
  for (const auto& [id, f] : forecasters_) {
    const Vector s = f.state();
    forecasters[id] = std::vector<double>(s.begin(), s.end());
  }
  write_file(dir / "engine.json",
             json{{"format_version", kStateFormatVersion}, {"usage", usage}, {"forecasters", forecasters}}.dump() + "\n");
}

Engine Engine::load(const fs::path& dir) {
  if (!fs::exists(dir / "config.json")) throw Error(ErrorCode::Io, "no state in " + dir.string());
  Engine e(load_manager_config(dir / "config.json"));
  for (auto& [key, entry] : e.registry_.entries()) {
    const auto path = dir / "models" / model_file_name(key.first, key.second);
    if (!fs::exists(path)) continue;
    auto model = load_model(path);
    if (!(model.schema() == entry.schema))
      throw Error(ErrorCode::CorruptStore, path.filename().string() + " does not match the configured schema");
    e.registry_.set_model(key, std::move(model));
  }
  if (fs::exists(dir / "engine.json")) {
    const json j = parse_json_file(dir / "engine.json", ErrorCode::CorruptStore);
    const int version = j.value("format_version", 0);
    if (version > kStateFormatVersion)
      throw Error(ErrorCode::VersionMismatch, "state format " + std::to_string(version) + " is newer than " +
                                                  std::to_string(kStateFormatVersion));
    if (version < 1) throw Error(ErrorCode::CorruptStore, "engine state lacks a format version");
    try {
      for (const auto& [id, h] : j.at("usage").items()) e.usage_[id] = h.get<std::vector<double>>();
      for (const auto& [id, s] : j.at("forecasters").items()) {
        auto it = e.forecasters_.find(id);
        if (it == e.forecasters_.end()) throw Error(ErrorCode::CorruptStore, "unknown subsystem " + id);
        const auto v = s.get<std::vector<double>>();
        it->second.load_state(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
      }
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::CorruptStore, std::string("engine state: ") + ex.what());
    }
  }
  if (fs::exists(dir / "fleet.txt")) e.fleet_.restore(read_file(dir / "fleet.txt"));
  if (fs::exists(dir / "policy.json")) {
    auto p = AllocationPolicy::from_json(parse_json_file(dir / "policy.json", ErrorCode::CorruptStore));
    if (p.subsystems() != e.policy_.subsystems()) throw Error(ErrorCode::CorruptStore, "policy subsystem count differs");
    e.policy_ = std::move(p);
  }
  if (fs::exists(dir / "olarima.json")) {
    const json states = parse_json_file(dir / "olarima.json", ErrorCode::CorruptStore);
    for (const auto& s : states) {
      auto st = ol_arima_from_json(s);
      const ModelRegistry::Key key{st.device_id, st.level};
      e.arima_.insert_or_assign(key, std::move(st));
    }
  }
  if (fs::exists(dir / "score_log.csv")) {
    std::ifstream in(dir / "score_log.csv");
    std::string line;
    std::getline(in, line);  // header
    const Tick now = e.fleet_.current_tick();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto r = parse_score(line);
      if (r.tick > now - e.config_.score_window && r.tick <= now) e.window_.push_back(std::move(r));
    }
  }
  return e;
}

// ---- cost report -------------------------------------------------------------------

std::vector<CostRow> report_costs(const Engine& engine, std::size_t probe_samples) {
  std::vector<CostRow> rows;
  const Fleet probe_fleet = Fleet::build(engine.config().fleet, mix_seed(engine.config().seed, 0xC057));
  for (int f = 0; f < kFamilyCount; ++f) {
    const auto family = static_cast<ModelFamily>(f);
    const RegistryEntry* chosen = nullptr;
    for (const auto& [key, e] : engine.registry().entries())
      if (e.model && e.model->family() == family) {
        chosen = &e;
        break;
      }
    if (chosen == nullptr)
      throw Error(ErrorCode::MissingFamily, "no trained " + std::string(to_string(family)) + " model in the registry");
    Dataset probe{chosen->schema, {}, std::nullopt, false};
    std::vector<const Device*> members;
    for (const auto& d : probe_fleet.devices())
      if (probe_fleet.profile_of(d).type_name == chosen->device_type) members.push_back(&d);
    for (Tick t = 0; probe.samples.size() < probe_samples && t < 100000; ++t)
      for (const Device* d : members) {
        for (auto& s : probe_fleet.emit(*d, t))
          if (sample_level(s) == chosen->schema.level() && probe.samples.size() < probe_samples)
            probe.samples.push_back(std::move(s));
      }
    rows.push_back({family, chosen->device_type + "/" + std::string(to_string(chosen->schema.level())),
                    cost_profile(*chosen->model, probe)});
  }
  return rows;
}

namespace {

Dataset gaussian_vectors(std::mt19937_64& rng, const FeatureSchema& schema, int n, const Matrix& loadings) {
  std::normal_distribution<double> g;
  Dataset ds{schema, {}, std::nullopt, false};
  for (int i = 0; i < n; ++i) {
    Vector f(loadings.cols());
    for (auto& v : f) v = g(rng);
    Vector x = loadings * f;
    for (auto& v : x) v += 0.5 * g(rng);
    ds.samples.push_back(TelemetrySample{i, "bench", schema.level(), std::move(x)});
  }
  return ds;
}

Dataset periodic_sequences(std::mt19937_64& rng, const FeatureSchema& schema, int n) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.141592653589793);
  Dataset ds{schema, {}, std::nullopt, false};
  for (int i = 0; i < n; ++i) {
    Matrix s(schema.seq_len(), 1);
    const double p = phase(rng);
    double noise = 0.0;
    for (int t = 0; t < schema.seq_len(); ++t) {
      noise = 0.6 * noise + 0.3 * g(rng);
      s(t, 0) = std::sin(2.0 * 3.141592653589793 * t / 30.0 + p) + noise;
    }
    ds.samples.push_back(SequenceSample{i, "bench", schema.level(), std::move(s)});
  }
  return ds;
}

}  // namespace

std::vector<CostRow> benchmark_costs(const BenchmarkOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> g;
  std::vector<CostRow> rows;
  auto profile = [&](ModelFamily family, const std::string& target, const Dataset& train, const Dataset& probe,
                     const ModelSpec& spec) {
    auto cleaned = clean_dataset(train).first;
    const auto model = train_model(cleaned, spec, mix_seed(o.seed, static_cast<std::uint64_t>(family))).first;
    rows.push_back({family, target, cost_profile(model, probe)});
  };

  const auto narrow = FeatureSchema::vectors(BehaviorLevel::B1, o.ocsvm_dim);
  Matrix ln(o.ocsvm_dim, 2);
  for (auto& v : ln.reshaped()) v = g(rng) / std::sqrt(2.0);
  profile(ModelFamily::OCSVM, "NTS dim " + std::to_string(o.ocsvm_dim), gaussian_vectors(rng, narrow, o.train_samples, ln),
          gaussian_vectors(rng, narrow, static_cast<int>(o.probe_samples), ln), ModelSpec::defaults(ModelFamily::OCSVM));

  const auto series = FeatureSchema::sequences(BehaviorLevel::B3, 1, o.ts_len);
  const int ts_train = std::max(50, o.train_samples / 3);
  profile(ModelFamily::MARIMA, "TS " + std::to_string(o.ts_len) + "x1", periodic_sequences(rng, series, ts_train),
          periodic_sequences(rng, series, static_cast<int>(o.probe_samples)), ModelSpec::defaults(ModelFamily::MARIMA));

  const auto wide = FeatureSchema::vectors(BehaviorLevel::B2, o.nts_dim);
  Matrix lw(o.nts_dim, 3);
  for (auto& v : lw.reshaped()) v = g(rng) / std::sqrt(3.0);
  GanEdHyper gh;
  gh.layers = o.layers;
  gh.epochs = o.epochs;
  profile(ModelFamily::GANED, "NTS dim " + std::to_string(o.nts_dim), gaussian_vectors(rng, wide, o.train_samples, lw),
          gaussian_vectors(rng, wide, static_cast<int>(o.probe_samples), lw), ModelSpec{gh});

  LstmEdHyper lh;
  lh.layers = o.layers;
  lh.epochs = o.epochs;
  profile(ModelFamily::LSTMED, "TS " + std::to_string(o.ts_len) + "x1", periodic_sequences(rng, series, ts_train),
          periodic_sequences(rng, series, static_cast<int>(o.probe_samples)), ModelSpec{lh});
  return rows;
}

FleetConfig reference_testbed() {
  FleetConfig c;
  for (auto [name, count] : {std::pair{"camera", 40}, std::pair{"sensor", 80}}) {
    DeviceTypeConfig t;
    t.profile.type_name = name;
    t.profile.subsystem = name;
    t.profile.emits = {FeatureSchema::vectors(BehaviorLevel::B1, 80), FeatureSchema::sequences(BehaviorLevel::B3, 1, 90)};
    t.count = count;
    c.types.push_back(std::move(t));
  }
  return c;
}

std::string format_costs(const std::vector<CostRow>& rows, const IngestRates& ingest) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "family" << std::setw(16) << "target" << std::right << std::setw(14)
      << "size_kb" << std::setw(16) << "latency_ms" << std::setw(16) << "working_set_kb" << '\n';
  out << std::fixed;
  for (const auto& r : rows)
    out << std::left << std::setw(8) << to_string(r.family) << std::setw(16) << r.target << std::right
        << std::setprecision(2) << std::setw(14) << r.cost.serialized_size / 1024.0 << std::setprecision(4)
        << std::setw(16) << 1e3 * r.cost.score_latency << std::setprecision(2) << std::setw(16)
        << r.cost.peak_working_set / 1024.0 << '\n';
  out << std::setprecision(1) << "ingest: NTS " << ingest.nts_kb_per_tick << " KB per tick (1 tick = 1 min), TS "
      << ingest.ts_kb_per_interval << " KB per " << ingest.ts_interval << " ticks\n";
  out << "note: these rates follow the per-sample sizes (NTS 0.5 KB per minute, TS 1 KB per 30 minutes per device); "
         "the published description of this 120-device testbed quotes the same two figures with the NTS and TS "
         "labels swapped.\n";
  return out.str();
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return 1;
    case ErrorCode::BadConfig:
    case ErrorCode::EmptyAfterCleaning:
    case ErrorCode::SeriesTooShort:
    case ErrorCode::TooFewPoints:
    case ErrorCode::NonMonotonicTick:
    case ErrorCode::UnknownDevice:
    case ErrorCode::InsufficientData:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::TooFewDevices:
    case ErrorCode::InsufficientHistory:
    case ErrorCode::NegativeInput:
    case ErrorCode::Io: return 2;
    case ErrorCode::NonConvergence:
    case ErrorCode::SingularDesign:
    case ErrorCode::DivergedTraining:
    case ErrorCode::NotWarmedUp:
    case ErrorCode::DuplicateEntry:
    case ErrorCode::UnknownFamily:
    case ErrorCode::UntrainedModel:
    case ErrorCode::MissingFamily:
    case ErrorCode::CorruptStore:
    case ErrorCode::VersionMismatch: return 3;
  }
  return 3;
}

}  // namespace orca
