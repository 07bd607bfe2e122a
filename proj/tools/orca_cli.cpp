// Command-line front end: init, simulate, train, run, inject, report.

#include "orca/manager.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw orca::Error(orca::ErrorCode::Io, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw orca::Error(orca::ErrorCode::BadConfig, path + ": " + e.what());
  }
}

// A scenario is a full configuration, or {"config": base path relative to
// the scenario file, "injections": [...]}.
orca::ManagerConfig config_from(const std::string& path) {
  json j = read_json(path);
  if (j.is_object() && j.contains("config") && j.at("config").is_string()) {
    json base = read_json((fs::path(path).parent_path() / j.at("config").get<std::string>()).string());
    for (const auto& [key, value] : j.items())
      if (key != "config") base[key] = value;
    j = std::move(base);
  }
  auto c = orca::parse_manager_config(j);
  c.seed = orca::resolve_seed(c.seed);
  return c;
}

// Telemetry from a simulate output directory (or a bare log file). Samples
// labelled anomalous in labels.csv are left out of training.
std::vector<orca::Sample> training_samples(const std::string& data, const orca::SchemaLookup& lookup) {
  const fs::path root(data);
  const fs::path log_path = fs::is_directory(root) ? root / "telemetry.log" : root;
  std::ifstream in(log_path);
  if (!in) throw orca::Error(orca::ErrorCode::Io, "cannot read " + log_path.string());
  auto samples = orca::read_log(in, lookup);
  const fs::path labels_path = fs::is_directory(root) ? root / "labels.csv" : root.parent_path() / "labels.csv";
  std::ifstream labels(labels_path);
  if (!labels) return samples;
  std::set<std::pair<orca::Tick, std::string>> anomalous;
  std::string line;
  std::getline(labels, line);
  while (std::getline(labels, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw orca::Error(orca::ErrorCode::InvalidArgument, "bad label line: " + line);
    if (line.substr(b + 1) != "normal") anomalous.emplace(std::stoll(line.substr(0, a)), line.substr(a + 1, b - a - 1));
  }
  std::erase_if(samples, [&](const orca::Sample& s) {
    return anomalous.contains({orca::sample_tick(s), orca::sample_device(s)});
  });
  return samples;
}

std::string state_dir(const std::string& given, const orca::ManagerConfig* config) {
  if (!given.empty()) return given;
  if (config != nullptr && !config->state_dir.empty()) return config->state_dir;
  return "orca_state";
}

void print_registry(const orca::Engine& e) {
  std::cout << "registry: " << e.registry().size() << " models for " << e.registry().type_count() << " types, "
            << e.fleet().devices().size() << " devices\n";
  for (const auto& [key, entry] : e.registry().entries()) {
    std::cout << "  " << std::left << std::setw(16) << key.first << orca::to_string(key.second) << "  "
              << std::setw(7) << orca::to_string(entry.spec.family()) << (entry.schema.time_series() ? "TS " : "NTS")
              << " dim " << entry.schema.dim();
    if (entry.schema.time_series()) std::cout << " x " << entry.schema.seq_len();
    std::cout << (entry.model ? "  trained v" + std::to_string(entry.model->version()) : "  untrained") << '\n';
  }
}

orca::SchemaLookup lookup_for(const orca::Engine& e) {
  return [&e](const std::string& id, orca::BehaviorLevel level) -> std::optional<orca::FeatureSchema> {
    try {
      const auto& type = e.fleet().profile_of(e.fleet().device(id)).type_name;
      if (const auto* entry = e.registry().find(type, level)) return entry->schema;
    } catch (const orca::Error&) {
    }
    return std::nullopt;
  };
}

int cmd_init(const std::string& config_path, const std::string& state) {
  const auto config = config_from(config_path);
  orca::Engine e(config);
  const auto dir = state_dir(state, &config);
  e.save(dir);
  print_registry(e);
  std::cout << "state written to " << dir << '\n';
  return 0;
}

int cmd_simulate(const std::string& scenario, int ticks, const std::string& out_dir) {
  const auto config = config_from(scenario);
  orca::Engine e(config);  // applies the scenario injections
  auto& fleet = e.fleet();
  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "telemetry.log");
  std::ofstream labels(fs::path(out_dir) / "labels.csv");
  std::ofstream demands(fs::path(out_dir) / "demands.csv");
  if (!log || !labels || !demands) throw orca::Error(orca::ErrorCode::Io, "cannot write into " + out_dir);
  labels << "tick,device_id,label\n";
  demands << "tick,subsystem,requested\n";
  std::size_t samples = 0;
  for (orca::Tick t = 0; t < ticks; ++t) {
    const auto step = fleet.step(t);
    orca::write_log(log, step.telemetry);
    samples += step.telemetry.size();
    for (const auto& [id, label] : fleet.ground_truth(t)) labels << t << ',' << id << ',' << orca::to_string(label) << '\n';
    for (const auto& d : step.demands) demands << t << ',' << d.subsystem << ',' << orca::format_double(d.requested) << '\n';
  }
  std::cout << "simulated " << ticks << " ticks, " << fleet.devices().size() << " devices, " << samples
            << " samples into " << out_dir << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& state) {
  std::optional<orca::Engine> engine;
  std::string dir;
  if (!config_path.empty()) {
    const auto config = config_from(config_path);
    dir = state_dir(state, &config);
    engine.emplace(config);
  } else {
    dir = state_dir(state, nullptr);
    engine.emplace(orca::Engine::load(dir));
  }
  orca::TrainSummary summary;
  if (data.empty()) {
    summary = engine->train();
  } else {
    summary = engine->train_from(training_samples(data, lookup_for(*engine)));
  }
  for (const auto& item : summary.items)
    std::cout << "trained " << item.device_type << '/' << orca::to_string(item.level) << " "
              << orca::to_string(item.family) << " on " << item.samples << " samples in " << std::fixed
              << std::setprecision(2) << item.seconds << " s\n";
  engine->save(dir);
  std::cout << "state written to " << dir << '\n';
  return 0;
}

int cmd_run(const std::string& state, int ticks, bool quiet) {
  const auto dir = state_dir(state, nullptr);
  auto e = orca::Engine::load(dir);
  e.attach_logs(dir);
  for (int i = 0; i < ticks; ++i) {
    const auto report = e.run_cycle(e.next_tick());
    if (!quiet) std::cout << orca::format_report(report) << '\n';
  }
  if (!e.last_maintenance().empty()) {
    std::cout << "maintenance (tick,device,reason,current,peak,crossing):\n";
    for (const auto& item : e.last_maintenance())
      std::cout << "  " << orca::format_maintenance(e.next_tick() - 1, item) << '\n';
  }
  e.save(dir);
  return 0;
}

int cmd_inject(const std::string& scenario, const std::string& state) {
  const auto dir = state_dir(state, nullptr);
  auto e = orca::Engine::load(dir);
  const json j = read_json(scenario);
  const json list = j.is_object() && j.contains("injections") ? j.at("injections") : j;
  e.inject(list);
  e.save(dir);
  std::cout << "applied " << (list.is_array() ? list.size() : 1) << " injection(s)\n";
  return 0;
}

int cmd_report(const std::string& state, bool costs, bool benchmark) {
  if (benchmark) {
    const auto testbed = orca::Fleet::build(orca::reference_testbed(), 1);
    std::cout << "benchmark shapes, layers 64/32\n"
              << orca::format_costs(orca::benchmark_costs(), orca::ingest_rates(testbed, 0.5, 1.0));
    return 0;
  }
  const auto e = orca::Engine::load(state_dir(state, nullptr));
  const auto ingest = orca::ingest_rates(e.fleet(), e.config().nts_sample_kb, e.config().ts_sample_kb);
  if (costs) {
    std::cout << orca::format_costs(orca::report_costs(e), ingest);
    return 0;
  }
  print_registry(e);
  std::cout << "tick " << e.fleet().current_tick() << ", capacity " << e.capacity() << ", allocator steps "
            << e.policy().steps() << ", epsilon " << e.policy().epsilon() << '\n'
            << orca::format_costs({}, ingest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge device behavior manager"};
  app.require_subcommand(1);

  std::string config, state, data, scenario, out;
  int ticks = 60;
  bool costs = false, benchmark = false, quiet = false;

  auto* init = app.add_subcommand("init", "Create manager state from a configuration");
  init->add_option("--config", config, "Configuration JSON")->required();
  init->add_option("--state", state, "State directory");

  auto* simulate = app.add_subcommand("simulate", "Write simulated telemetry, labels and demands");
  simulate->add_option("--scenario", scenario, "Configuration JSON with injections")->required();
  simulate->add_option("--ticks", ticks, "Ticks to simulate")->check(CLI::PositiveNumber);
  simulate->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train every registry entry");
  train->add_option("--config", config, "Configuration JSON (fresh state)");
  train->add_option("--data", data, "Simulate output directory or telemetry log; simulated normal data when omitted");
  train->add_option("--state", state, "State directory");

  auto* run = app.add_subcommand("run", "Run observe, synthesize and respond cycles");
  run->add_option("--ticks", ticks, "Cycles to run")->check(CLI::PositiveNumber);
  run->add_option("--state", state, "State directory");
  run->add_flag("--quiet", quiet, "Only print the final maintenance list");

  auto* inject = app.add_subcommand("inject", "Schedule fault injections on the live fleet");
  inject->add_option("--scenario", scenario, "Injection JSON")->required();
  inject->add_option("--state", state, "State directory");

  auto* report = app.add_subcommand("report", "Print registry status or model costs");
  report->add_flag("--costs", costs, "Cost table of the trained models");
  report->add_flag("--benchmark", benchmark, "Train and profile the standard benchmark shapes");
  report->add_option("--state", state, "State directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*init) return cmd_init(config, state);
    if (*simulate) return cmd_simulate(scenario, ticks, out);
    if (*train) return cmd_train(config, data, state);
    if (*run) return cmd_run(state, ticks, quiet);
    if (*inject) return cmd_inject(scenario, state);
    if (*report) return cmd_report(state, costs, benchmark);
  } catch (const orca::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return orca::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
