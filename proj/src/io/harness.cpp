#include "psda/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "psda/error.hpp"

namespace psda {

namespace {

/// Runs job(i) for i in [0, n) on a small pool; the first non-psda exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

MissionRecord failed_run(const MissionConfig& cfg, std::uint64_t seed, const std::string& why) {
  MissionRecord rec;
  rec.seed = seed;
  rec.modality = cfg.modality;
  rec.termination = "error: " + why;
  rec.detection_step.assign(cfg.world.targets.size(), -1);
  return rec;
}

MissionRecord run_one(const MissionConfig& cfg, std::uint64_t seed, const std::optional<std::filesystem::path>& snapshot_dir) {
  try {
    if (!snapshot_dir) return run_mission(cfg, seed);
    std::filesystem::create_directories(*snapshot_dir);
    const auto path = *snapshot_dir / (to_string(cfg.modality) + "_" + std::to_string(seed) + ".jsonl");
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    Mission m(cfg, seed);
    auto dump = [&] {
      io::Json beliefs = io::Json::array();
      for (const auto& b : m.state().beliefs) beliefs.push_back(io::to_json(b));
      out << io::Json{{"k", m.state().k}, {"beliefs", std::move(beliefs)}}.dump() << '\n';
    };
    dump();
    while (!m.finished()) {
      m.advance();
      dump();
    }
    return m.record();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    return failed_run(cfg, seed, e.what());
  } catch (const std::exception& e) {
    return failed_run(cfg, seed, e.what());
  }
}

io::Json optional_number(const std::optional<double>& v) { return v ? io::Json(*v) : io::Json(nullptr); }

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ";" : "") + parts[i];
  return out;
}

std::string number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace

const ModalitySummary& BatchReport::of(Modality m) const {
  for (const auto& s : modalities) {
    if (s.modality == m) return s;
  }
  fail(ErrorCode::kNotFound, "report has no modality " + to_string(m));
}

ModalitySummary summarize(Modality m, std::vector<MissionRecord> records) {
  std::sort(records.begin(), records.end(), [](const MissionRecord& a, const MissionRecord& b) { return a.seed < b.seed; });
  ModalitySummary s;
  s.modality = m;
  s.runs = static_cast<int>(records.size());
  double detected = 0.0, distance = 0.0;
  for (const auto& r : records) {
    detected += r.detected_count;
    if (r.success) {
      ++s.successes;
      distance += r.distance;
    }
  }
  if (s.runs > 0) s.mean_detected = detected / s.runs;
  if (s.successes > 0) s.mean_success_distance = distance / s.successes;
  s.records = std::move(records);
  return s;
}

BatchReport run_batch(const BatchSpec& spec) {
  if (spec.runs < 1) fail(ErrorCode::kConfig, "batch: run count must be >= 1");
  if (spec.modalities.empty()) fail(ErrorCode::kConfig, "batch: no modalities");
  const std::size_t runs = static_cast<std::size_t>(spec.runs);
  std::vector<MissionRecord> records(spec.modalities.size() * runs);
  parallel_for(records.size(), spec.threads, [&](std::size_t job) {
    MissionConfig cfg = spec.mission;
    cfg.modality = spec.modalities[job / runs];
    records[job] = run_one(cfg, spec.base_seed + job % runs, spec.snapshot_dir);
  });
  BatchReport report;
  report.scenario = spec.scenario;
  report.base_seed = spec.base_seed;
  report.runs = spec.runs;
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    std::vector<MissionRecord> mine(std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(m * runs)),
                                    std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>((m + 1) * runs)));
    report.modalities.push_back(summarize(spec.modalities[m], std::move(mine)));
  }
  return report;
}

io::Json to_json(const BatchReport& report) {
  io::Json mods = io::Json::array();
  for (const auto& s : report.modalities) {
    io::Json runs = io::Json::array();
    for (const auto& r : s.records) {
      runs.push_back({{"seed", r.seed},
                      {"success", r.success},
                      {"detected", r.detected_count},
                      {"distance", r.distance},
                      {"steps", r.steps},
                      {"termination", r.termination}});
    }
    mods.push_back({{"modality", to_string(s.modality)},
                    {"runs", s.runs},
                    {"successes", s.successes},
                    {"mean_detected", s.mean_detected},
                    {"mean_success_distance", optional_number(s.mean_success_distance)},
                    {"records", std::move(runs)}});
  }
  return {{"scenario", report.scenario}, {"base_seed", report.base_seed}, {"runs", report.runs}, {"modalities", std::move(mods)}};
}

std::string to_string(FpClass c) {
  switch (c) {
    case FpClass::kPerfect: return "perfect";
    case FpClass::kConservative: return "conservative";
    case FpClass::kOptimistic: return "optimistic";
  }
  return "perfect";
}

FpClass classify_fp(double true_fp, double assumed_fp) {
  if (assumed_fp == true_fp) return FpClass::kPerfect;
  return assumed_fp > true_fp ? FpClass::kConservative : FpClass::kOptimistic;
}

std::vector<std::pair<double, double>> fp_cells(const std::vector<double>& true_fp, const std::vector<double>& assumed_fp) {
  std::vector<std::pair<double, double>> cells;
  for (double t : true_fp) {
    for (double a : assumed_fp) cells.emplace_back(t, a);
  }
  return cells;
}

std::optional<double> FpGridReport::mean_successes(FpClass c) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& cell : cells) {
    if (cell.cls != c) continue;
    sum += cell.successes;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

FpGridReport fp_grid(const FpGridSpec& spec) {
  if (spec.runs < 1) fail(ErrorCode::kConfig, "fp grid: run count must be >= 1");
  if (spec.cells.empty()) fail(ErrorCode::kConfig, "fp grid: no cells");
  for (const auto& [t, a] : spec.cells) {
    if (!(t >= 0.0 && t <= 1.0 && a >= 0.0 && a <= 1.0)) fail(ErrorCode::kConfig, "fp grid: rates must lie in [0, 1]");
  }
  const std::size_t runs = static_cast<std::size_t>(spec.runs);
  std::vector<MissionRecord> records(spec.cells.size() * runs);
  parallel_for(records.size(), spec.threads, [&](std::size_t job) {
    const auto [t, a] = spec.cells[job / runs];
    MissionConfig cfg = spec.mission;
    cfg.modality = Modality::kPSDA;
    cfg.human.rover_fp = cfg.human.drone_fp = t;
    cfg.human.assumed_rover_fp = cfg.human.assumed_drone_fp = a;
    records[job] = run_one(cfg, spec.base_seed + job % runs, std::nullopt);
  });
  FpGridReport report;
  report.scenario = spec.scenario;
  report.base_seed = spec.base_seed;
  for (std::size_t c = 0; c < spec.cells.size(); ++c) {
    FpCell cell;
    std::tie(cell.true_fp, cell.assumed_fp) = spec.cells[c];
    cell.cls = classify_fp(cell.true_fp, cell.assumed_fp);
    cell.runs = spec.runs;
    for (std::size_t r = 0; r < runs; ++r) cell.successes += records[c * runs + r].success ? 1 : 0;
    report.cells.push_back(cell);
  }
  return report;
}

io::Json to_json(const FpGridReport& report) {
  io::Json cells = io::Json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"true_fp", c.true_fp}, {"assumed_fp", c.assumed_fp}, {"class", to_string(c.cls)}, {"runs", c.runs}, {"successes", c.successes}});
  }
  io::Json means = io::Json::object();
  for (FpClass c : {FpClass::kPerfect, FpClass::kConservative, FpClass::kOptimistic}) means[to_string(c)] = optional_number(report.mean_successes(c));
  return {{"scenario", report.scenario}, {"base_seed", report.base_seed}, {"cells", std::move(cells)}, {"mean_successes", std::move(means)}};
}

void export_plots(const std::vector<MissionRecord>& records, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream index;
  index << "modality,seed,success,detected,distance,steps,termination,file\n";
  for (const auto& rec : records) {
    const std::string name = to_string(rec.modality) + "_" + std::to_string(rec.seed) + ".csv";
    index << to_string(rec.modality) << ',' << rec.seed << ',' << (rec.success ? 1 : 0) << ',' << rec.detected_count << ','
          << number(rec.distance) << ',' << rec.steps << ',' << rec.termination << ',' << name << '\n';

    const std::size_t targets = rec.detection_step.size();
    std::map<int, std::vector<std::string>> gamma0, observations, detections;
    for (const auto& [k, g] : rec.gamma0) gamma0[k].push_back(number(g));
    for (const auto& ev : rec.observations) {
      observations[ev.obs.k].push_back(ev.source + ":" + to_string(ev.obs.polarity) + ":" + to_string(ev.obs.mineral) + ":" + ev.obs.label +
                                       (ev.erroneous ? ":erroneous" : ""));
    }
    for (std::size_t i = 0; i < targets; ++i) {
      if (rec.detection_step[i] >= 0) detections[rec.detection_step[i]].push_back(std::to_string(i));
    }
    std::ostringstream csv;
    csv << 'k';
    for (std::size_t i = 0; i < targets; ++i) csv << ",delta_" << i;
    csv << ",gamma0,observations,detections\n";
    for (int k = 1; k <= rec.steps && static_cast<std::size_t>(k) < rec.delta.size(); ++k) {
      csv << k;
      for (double d : rec.delta[static_cast<std::size_t>(k)]) csv << ',' << number(d);
      csv << ',' << join(gamma0[k]) << ',' << join(observations[k]) << ',' << join(detections[k]) << '\n';
    }
    write_file(dir / name, csv.str());
  }
  write_file(dir / "runs.csv", index.str());
}

std::filesystem::path output_directory(const std::optional<std::string>& explicit_dir) {
  if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
  if (const char* env = std::getenv("PSDA_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "psda_out";
}

}  // namespace psda
