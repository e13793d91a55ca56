#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "psda/error.hpp"
#include "psda/harness.hpp"

using namespace psda;
namespace fs = std::filesystem;

namespace {

MissionConfig short_config() {
  MissionConfig cfg;
  cfg.max_steps = 40;
  return cfg;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("psda_test_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("batch reports are reproducible") {
  BatchSpec spec;
  spec.mission = short_config();
  spec.modalities = {Modality::kPSDA, Modality::kNaiveDA};
  spec.runs = 3;
  spec.threads = 1;
  const std::string a = to_json(run_batch(spec)).dump();
  spec.threads = 3;
  const BatchReport again = run_batch(spec);
  CHECK(to_json(again).dump() == a);

  const ModalitySummary& s = again.of(Modality::kPSDA);
  std::set<std::uint64_t> seeds;
  for (const auto& r : s.records) seeds.insert(r.seed);
  CHECK(seeds == std::set<std::uint64_t>{7, 8, 9});
  const ModalitySummary recomputed = summarize(Modality::kPSDA, s.records);
  CHECK(recomputed.successes == s.successes);
  CHECK(recomputed.mean_detected == s.mean_detected);
  CHECK(recomputed.mean_success_distance == s.mean_success_distance);
}

TEST_CASE("summary statistics") {
  std::vector<MissionRecord> recs(3);
  recs[0].seed = 2, recs[0].success = true, recs[0].detected_count = 4, recs[0].distance = 100.0;
  recs[1].seed = 1, recs[1].success = false, recs[1].detected_count = 2, recs[1].distance = 250.0;
  recs[2].seed = 3, recs[2].success = true, recs[2].detected_count = 4, recs[2].distance = 140.0;
  const ModalitySummary s = summarize(Modality::kGreedy, recs);
  CHECK(s.runs == 3);
  CHECK(s.successes == 2);
  CHECK(s.mean_detected == doctest::Approx(10.0 / 3.0));
  REQUIRE(s.mean_success_distance.has_value());
  CHECK(*s.mean_success_distance == doctest::Approx(120.0));
  CHECK(s.records.front().seed == 1);
  CHECK_FALSE(summarize(Modality::kGreedy, {recs[1]}).mean_success_distance.has_value());
}

TEST_CASE("a single run passes its record through") {
  BatchSpec spec;
  spec.mission = short_config();
  spec.modalities = {Modality::kGreedy};
  spec.runs = 1;
  spec.base_seed = 12;
  MissionConfig cfg = spec.mission;
  cfg.modality = Modality::kGreedy;
  const BatchReport r = run_batch(spec);
  REQUIRE(r.modalities.size() == 1);
  REQUIRE(r.modalities[0].records.size() == 1);
  CHECK(io::to_json(r.modalities[0].records[0]).dump() == io::to_json(run_mission(cfg, 12)).dump());
}

TEST_CASE("failed runs are recorded, not fatal") {
  BatchSpec spec;
  spec.mission = short_config();
  spec.mission.human.cadence = 0;
  spec.modalities = {Modality::kPSDA};
  spec.runs = 2;
  const BatchReport r = run_batch(spec);
  CHECK(r.of(Modality::kPSDA).successes == 0);
  CHECK(r.of(Modality::kPSDA).records[0].termination.rfind("error: ", 0) == 0);
}

TEST_CASE("plot export") {
  SUBCASE("no records") {
    TempDir dir("empty");
    export_plots({}, dir.path);
    const auto rows = lines_of(dir.path / "runs.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == "modality,seed,success,detected,distance,steps,termination,file");
    CHECK(std::distance(fs::directory_iterator(dir.path), fs::directory_iterator{}) == 1);
  }
  SUBCASE("one row per step") {
    TempDir dir("one");
    MissionConfig cfg = short_config();
    const MissionRecord r = run_mission(cfg, 4);
    export_plots({r}, dir.path);
    CHECK(lines_of(dir.path / "runs.csv").size() == 2);
    const auto rows = lines_of(dir.path / "psda_4.csv");
    CHECK(rows[0] == "k,delta_0,delta_1,delta_2,delta_3,gamma0,observations,detections");
    CHECK(rows.size() == static_cast<std::size_t>(r.steps) + 1);
  }
}

TEST_CASE("delta is recomputable from belief snapshots") {
  TempDir dir("snap");
  BatchSpec spec;
  spec.mission = short_config();
  spec.modalities = {Modality::kPSDA};
  spec.runs = 1;
  spec.base_seed = 5;
  spec.snapshot_dir = dir.path;
  const BatchReport report = run_batch(spec);
  const MissionRecord& rec = report.of(Modality::kPSDA).records[0];
  const auto lines = lines_of(dir.path / "psda_5.jsonl");
  REQUIRE(lines.size() == rec.delta.size());
  for (const auto& line : lines) {
    const io::Json snap = io::parse(line);
    const auto k = snap["k"].get<std::size_t>();
    for (std::size_t i = 0; i < 4; ++i) {
      const bool found = rec.detection_step[i] >= 0 && static_cast<std::size_t>(rec.detection_step[i]) <= k;
      const double expected = found ? 0.0 : (spec.mission.world.targets[i].position - gm_map(io::gm_from_json(snap["beliefs"][i]))).norm();
      CHECK(rec.delta[k][i] == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("false-positive grid") {
  CHECK(classify_fp(0.3, 0.3) == FpClass::kPerfect);
  CHECK(classify_fp(0.1, 0.5) == FpClass::kConservative);
  CHECK(classify_fp(0.5, 0.1) == FpClass::kOptimistic);
  const auto cells = fp_cells({0.1, 0.3, 0.5}, {0.1, 0.3, 0.5});
  CHECK(cells.size() == 9);

  SUBCASE("perfect zero cell equals a plain batch") {
    FpGridSpec grid;
    grid.mission = short_config();
    grid.cells = {{0.0, 0.0}};
    grid.runs = 2;
    const FpGridReport g = fp_grid(grid);
    BatchSpec plain;
    plain.mission = short_config();
    plain.mission.human.rover_fp = plain.mission.human.drone_fp = 0.0;
    plain.modalities = {Modality::kPSDA};
    plain.runs = 2;
    REQUIRE(g.cells.size() == 1);
    CHECK(g.cells[0].successes == run_batch(plain).of(Modality::kPSDA).successes);
    CHECK(g.mean_successes(FpClass::kPerfect).has_value());
    CHECK_FALSE(g.mean_successes(FpClass::kOptimistic).has_value());
  }
}

TEST_CASE("output directory precedence") {
  ::unsetenv("PSDA_OUT_DIR");
  CHECK(output_directory(std::nullopt) == "psda_out");
  ::setenv("PSDA_OUT_DIR", "/tmp/from_env", 1);
  CHECK(output_directory(std::nullopt) == "/tmp/from_env");
  CHECK(output_directory(std::string("mine")) == "mine");
  ::unsetenv("PSDA_OUT_DIR");
}
