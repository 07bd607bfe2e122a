#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orca/manager.hpp"
#include "orca/model_store.hpp"
#include "test_util.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace orca;
using orca::testing::code_of;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config() {
  return json::parse(R"({
    "seed": 11,
    "locations": 2,
    "batches": 2,
    "device_types": [
      {"name": "camera", "count": 8, "priority": 2, "subsystem": "video", "base_demand": 2.0,
       "targets": [{"level": "B1", "dim": 6},
                   {"level": "B3", "dim": 1, "time_series": true, "seq_len": 30}]},
      {"name": "sensor", "count": 12, "priority": 4, "subsystem": "env",
       "targets": [{"level": "B2", "dim": 4}]}
    ],
    "training": {"ticks": 240, "max_samples": 600}
  })");
}

json scaled_types(int per_type, bool fourth) {
  json types = json::array();
  for (const char* name : {"a", "b", "c"}) {
    json targets = json::array();
    for (const char* level : {"B1", "B2", "B3", "B4"}) targets.push_back({{"level", level}, {"dim", 3}});
    types.push_back({{"name", name}, {"count", per_type}, {"targets", targets}});
  }
  if (fourth)
    types.push_back({{"name", "d"},
                     {"count", per_type},
                     {"targets", json::array({{{"level", "B1"}, {"dim", 30}},
                                              {{"level", "B3"}, {"dim", 1}, {"time_series", true}, {"seq_len", 30}}})}});
  return {{"device_types", types}};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("orca_test_manager_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("registry holds one entry per type and level regardless of fleet size") {
  for (int per_type : {4, 40, 400}) {
    const auto cfg = parse_manager_config(scaled_types(per_type, false));
    const auto reg = register_models(cfg);
    CHECK(reg.size() == 12);
    CHECK(reg.type_count() == 3);
    CHECK(reg.max_levels() == 4);
    CHECK(Fleet::build(cfg.fleet, 1).devices().size() == static_cast<std::size_t>(3 * per_type));
  }
  CHECK(register_models(parse_manager_config(scaled_types(40, true))).size() == 14);
}

TEST_CASE("auto selection routes by dimensionality and data kind") {
  const auto reg = register_models(parse_manager_config(scaled_types(2, true)));
  CHECK(reg.find("a", BehaviorLevel::B1)->spec.family() == ModelFamily::OCSVM);
  CHECK(reg.find("d", BehaviorLevel::B1)->spec.family() == ModelFamily::GANED);
  CHECK(reg.find("d", BehaviorLevel::B3)->spec.family() == ModelFamily::MARIMA);
  CHECK(reg.find("d", BehaviorLevel::B2) == nullptr);
}

TEST_CASE("explicit families and registry errors") {
  auto j = small_config();
  j["device_types"][0]["targets"][0]["family"] = "gan-ed";
  j["device_types"][0]["targets"][0]["hyper"] = {{"layers", {8}}, {"latent_dim", 3}, {"epochs", 2}};
  const auto cfg = parse_manager_config(j);
  const auto reg = register_models(cfg);
  const auto& spec = reg.find("camera", BehaviorLevel::B1)->spec;
  REQUIRE(spec.family() == ModelFamily::GANED);
  CHECK(std::get<GanEdHyper>(spec.hyper).latent_dim == 3);

  j["device_types"][0]["targets"][0]["family"] = "svm";
  CHECK(code_of([&] { parse_manager_config(j); }) == ErrorCode::UnknownFamily);

  ModelRegistry r;
  r.add({"x", FeatureSchema::vectors(BehaviorLevel::B1, 2), ModelSpec::defaults(ModelFamily::OCSVM), nullptr});
  CHECK(code_of([&] {
          r.add({"x", FeatureSchema::vectors(BehaviorLevel::B1, 3), ModelSpec::defaults(ModelFamily::OCSVM), nullptr});
        }) == ErrorCode::DuplicateEntry);

  auto dup = small_config();
  dup["device_types"][1]["targets"].push_back({{"level", "B2"}, {"dim", 2}});
  CHECK(code_of([&] { register_models(parse_manager_config(dup)); }) == ErrorCode::DuplicateEntry);
}

TEST_CASE("config validation and round trip") {
  auto cfg = parse_manager_config(small_config());
  CHECK(cfg.seed == 11);
  CHECK(cfg.training.ticks == 240);
  const auto back = parse_manager_config(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));

  auto bad = small_config();
  bad["thresholds"] = {{"alarm", 1.5}};
  CHECK(code_of([&] { parse_manager_config(bad); }) == ErrorCode::BadConfig);
  bad = small_config();
  bad["qoe"] = {{"weights", {1, 2}}};
  CHECK(code_of([&] { parse_manager_config(bad); }) == ErrorCode::BadConfig);
  bad = small_config();
  bad["synthesis"] = {{"window", "long"}};
  CHECK(code_of([&] { parse_manager_config(bad); }) == ErrorCode::BadConfig);
}

TEST_CASE("seed resolution honours ORCA_SEED") {
  ::unsetenv("ORCA_SEED");
  CHECK(resolve_seed(5) == 5);
  ::setenv("ORCA_SEED", "42", 1);
  CHECK(resolve_seed(5) == 42);
  ::setenv("ORCA_SEED", "4x", 1);
  CHECK(code_of([] { resolve_seed(5); }) == ErrorCode::BadConfig);
  ::unsetenv("ORCA_SEED");
}

TEST_CASE("cycle before training fails with UntrainedModel") {
  Engine e(parse_manager_config(small_config()));
  CHECK(code_of([&] { e.run_cycle(0); }) == ErrorCode::UntrainedModel);
}

TEST_CASE("cycles score every sample and keep the allocation feasible") {
  Engine e(parse_manager_config(small_config()));
  const auto summary = e.train();
  CHECK(summary.items.size() == 3);
  CHECK(e.registry().all_trained());
  for (Tick t = 0; t < 31; ++t) {
    const auto r = e.run_cycle(t);
    const std::size_t expected = 20 + (t % 30 == 0 ? 8 : 0);
    CHECK(r.samples_scored == expected);
    CHECK(r.samples_rejected == 0);
    double used = 0.0;
    for (double a : r.allocation) {
      CHECK(a >= 0.0);
      used += a;
    }
    CHECK(used <= e.capacity() + 1e-9);
  }
  CHECK(e.next_tick() == 31);
  CHECK(code_of([&] { e.run_cycle(30); }) == ErrorCode::NonMonotonicTick);
  // window holds ticks 1..30 of vectors plus the tick-30 sequences
  CHECK(e.score_window().size() == 30 * 20 + 8);
  CHECK(e.arima_states().size() == 8 * 2 + 12);
}

TEST_CASE("score lines round trip") {
  ScoreRecord r{17, "camera-3", BehaviorLevel::B3, AnomalyScore{0.123456789012345, 2.5e-7, false}};
  const auto back = parse_score(format_score(r));
  CHECK(back.tick == 17);
  CHECK(back.device_id == "camera-3");
  CHECK(back.level == BehaviorLevel::B3);
  CHECK(back.score.value == r.score.value);
  CHECK(back.score.raw == r.score.raw);
  CHECK(code_of([] { parse_score("1,x,B1,0.5"); }) == ErrorCode::CorruptStore);
}

TEST_CASE("save and load reproduce scores and continue the run identically") {
  const auto dir = scratch("persist");
  Engine a(parse_manager_config(small_config()));
  a.train();
  a.attach_logs(dir);
  for (Tick t = 0; t < 5; ++t) a.run_cycle(t);
  a.save(dir);

  Engine b = Engine::load(dir);
  CHECK(b.next_tick() == 5);
  CHECK(b.score_window().size() == a.score_window().size());
  const Fleet probe = Fleet::build(a.config().fleet, 99);
  for (const auto& d : probe.devices())
    for (auto& s : probe.emit(d, 60)) {
      CHECK(a.score_sample(s).value == b.score_sample(s).value);
      CHECK(a.score_sample(s).raw == b.score_sample(s).raw);
    }
  for (Tick t = 5; t < 8; ++t) {
    const auto ra = a.run_cycle(t);
    const auto rb = b.run_cycle(t);
    CHECK(format_report(ra, false) == format_report(rb, false));
  }
  fs::remove_all(dir);
}

TEST_CASE("damaged state is reported") {
  const auto dir = scratch("corrupt");
  Engine a(parse_manager_config(small_config()));
  a.train();
  a.save(dir);

  {
    std::ofstream out(dir / "engine.json", std::ios::trunc);
    out << R"({"format_version": 99, "usage": {}, "forecasters": {}})";
  }
  CHECK(code_of([&] { Engine::load(dir); }) == ErrorCode::VersionMismatch);
  {
    std::ofstream out(dir / "engine.json", std::ios::trunc);
    out << "{not json";
  }
  CHECK(code_of([&] { Engine::load(dir); }) == ErrorCode::CorruptStore);
  a.save(dir);
  const auto model = dir / "models" / model_file_name("sensor", BehaviorLevel::B2);
  auto bytes = slurp(model);
  bytes[bytes.size() / 2] ^= 0x5A;
  {
    std::ofstream out(model, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  CHECK(code_of([&] { Engine::load(dir); }) == ErrorCode::CorruptStore);
  CHECK(code_of([] { Engine::load("/nonexistent/orca_state"); }) == ErrorCode::Io);
  fs::remove_all(dir);
}

TEST_CASE("identical seeds give byte-identical score logs") {
  auto run = [](const std::string& name, std::uint64_t seed) {
    auto cfg = parse_manager_config(small_config());
    cfg.seed = seed;
    const auto dir = scratch(name);
    Engine e(cfg);
    e.train();
    e.inject(json::parse(R"({"at_tick": 3, "kind": "hardware_fault", "magnitude": 2.0, "select": {"type": "sensor", "count": 1}})"));
    e.attach_logs(dir);
    for (Tick t = 0; t < 8; ++t) e.run_cycle(t);
    auto text = slurp(dir / "score_log.csv");
    fs::remove_all(dir);
    return text;
  };
  const auto first = run("det_a", 5);
  CHECK(first.size() > 1000);
  CHECK(first == run("det_b", 5));
  CHECK(first != run("det_c", 6));
}

TEST_CASE("ingest accounting for the reference testbed") {
  auto j = json::parse(R"({"device_types": [
      {"name": "camera", "count": 40, "targets": [{"level": "B3", "dim": 1, "time_series": true, "seq_len": 90}]},
      {"name": "sensor", "count": 80, "targets": [{"level": "B1", "dim": 80}]}]})");
  auto cfg = parse_manager_config(j);
  const auto fleet = Fleet::build(cfg.fleet, 1);
  // one NTS and one TS stream per device, as in the 120-device reference setup
  j["device_types"][0]["targets"].push_back({{"level", "B1"}, {"dim", 80}});
  j["device_types"][1]["targets"].push_back({{"level", "B3"}, {"dim", 1}, {"time_series", true}, {"seq_len", 90}});
  cfg = parse_manager_config(j);
  const auto rates = ingest_rates(Fleet::build(cfg.fleet, 1), cfg.nts_sample_kb, cfg.ts_sample_kb);
  CHECK(rates.nts_kb_per_tick == doctest::Approx(60.0));
  CHECK(rates.ts_kb_per_interval == doctest::Approx(120.0));
  CHECK(rates.ts_interval == 30);
  const auto text = format_costs({}, rates);
  CHECK(text.find("NTS 60.0 KB per tick") != std::string::npos);
  CHECK(text.find("TS 120.0 KB per 30 ticks") != std::string::npos);
  CHECK(text.find("swapped") != std::string::npos);
  CHECK(fleet.devices().size() == 120);
}

TEST_CASE("cost report needs every family") {
  Engine e(parse_manager_config(small_config()));
  e.train();
  CHECK(code_of([&] { report_costs(e, 20); }) == ErrorCode::MissingFamily);
}

TEST_CASE("exit codes group errors by kind") {
  CHECK(exit_code(ErrorCode::InvalidArgument) == 1);
  CHECK(exit_code(ErrorCode::BadConfig) == 2);
  CHECK(exit_code(ErrorCode::Io) == 2);
  CHECK(exit_code(ErrorCode::UntrainedModel) == 3);
  CHECK(exit_code(ErrorCode::CorruptStore) == 3);
}
