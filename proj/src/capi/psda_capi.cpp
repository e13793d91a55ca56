#include "psda/psda.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "psda/bridge.hpp"
#include "psda/error.hpp"
#include "psda/harness.hpp"
#include "psda/json_io.hpp"
#include "psda/scenario.hpp"

struct psda_scenario {
  psda::Scenario scenario;
};

struct psda_mission {
  std::unique_ptr<psda::Mission> mission;
};

struct psda_server {
  std::unique_ptr<psda::bridge::Server> server;
};

namespace {

thread_local std::string last_error;

psda_status record_error(psda_status s, const std::string& what) {
  last_error = what;
  return s;
}

template <class F>
psda_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return PSDA_OK;
  } catch (const psda::Error& e) {
    return record_error(static_cast<psda_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return record_error(PSDA_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record_error(PSDA_ERR_INTERNAL, e.what());
  } catch (...) {
    return record_error(PSDA_ERR_INTERNAL, "unknown failure");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) psda::fail(psda::ErrorCode::kInvalidArgument, std::string(what) + " must not be null");
}

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void maybe_out(char** dst, const psda::io::Json& j) {
  if (dst != nullptr) *dst = copy_out(j.dump());
}

std::vector<psda::Modality> parse_modalities(const char* list) {
  if (list == nullptr || *list == '\0') return psda::all_modalities();
  std::vector<psda::Modality> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(psda::modality_from_string(item));
    } catch (const psda::Error& e) {
      psda::fail(psda::ErrorCode::kConfig, e.what());
    }
  }
  if (out.empty()) psda::fail(psda::ErrorCode::kConfig, "no modalities given");
  return out;
}

void write_json(const std::filesystem::path& path, const psda::io::Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) psda::fail(psda::ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void make_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) psda::fail(psda::ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

extern "C" {

const char* psda_version(void) { return "1.0.0"; }

const char* psda_last_error(void) { return last_error.c_str(); }

void psda_string_free(char* s) { std::free(s); }

psda_status psda_scenario_load(const char* path, psda_scenario** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new psda_scenario{psda::load_scenario(path)};
  });
}

psda_status psda_scenario_parse(const char* toml_text, psda_scenario** out) {
  return guarded([&] {
    require(toml_text, "toml_text");
    require(out, "out");
    *out = new psda_scenario{psda::parse_scenario(toml_text)};
  });
}

psda_status psda_scenario_builtin(const char* name, psda_scenario** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = new psda_scenario{psda::builtin_scenario(name)};
  });
}

void psda_scenario_free(psda_scenario* s) { delete s; }

psda_status psda_run_batch(const psda_scenario* s, const char* modalities, int runs, uint64_t base_seed, int threads, const char* out_dir,
                           char** report_json) {
  return guarded([&] {
    require(s, "scenario");
    psda::BatchSpec spec;
    spec.scenario = s->scenario.name;
    spec.mission = s->scenario.mission;
    spec.modalities = parse_modalities(modalities);
    spec.runs = runs;
    spec.base_seed = base_seed;
    spec.threads = threads;
    const psda::BatchReport report = psda::run_batch(spec);
    const psda::io::Json j = psda::to_json(report);
    if (out_dir != nullptr) {
      const std::filesystem::path dir(out_dir);
      make_dirs(dir / "records");
      write_json(dir / "report.json", j);
      for (const auto& m : report.modalities) {
        for (const auto& r : m.records) {
          write_json(dir / "records" / (psda::to_string(r.modality) + "_" + std::to_string(r.seed) + ".json"), psda::io::to_json(r));
        }
      }
    }
    maybe_out(report_json, j);
  });
}

psda_status psda_fp_grid(const psda_scenario* s, const double* true_fp, size_t n_true, const double* assumed_fp, size_t n_assumed, int runs,
                         uint64_t base_seed, int threads, const char* out_dir, char** report_json) {
  return guarded([&] {
    require(s, "scenario");
    require(true_fp, "true_fp");
    require(assumed_fp, "assumed_fp");
    psda::FpGridSpec spec;
    spec.scenario = s->scenario.name;
    spec.mission = s->scenario.mission;
    spec.cells = psda::fp_cells(std::vector<double>(true_fp, true_fp + n_true), std::vector<double>(assumed_fp, assumed_fp + n_assumed));
    spec.runs = runs;
    spec.base_seed = base_seed;
    spec.threads = threads;
    const psda::io::Json j = psda::to_json(psda::fp_grid(spec));
    if (out_dir != nullptr) {
      make_dirs(out_dir);
      write_json(std::filesystem::path(out_dir) / "fp_grid.json", j);
    }
    maybe_out(report_json, j);
  });
}

psda_status psda_export_plots(const char* dir) {
  return guarded([&] {
    require(dir, "dir");
    const std::filesystem::path root(dir);
    const auto records_dir = root / "records";
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(records_dir)) {
      for (const auto& entry : std::filesystem::directory_iterator(records_dir)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
      }
    } else if (!std::filesystem::is_directory(root)) {
      psda::fail(psda::ErrorCode::kIo, "no such directory " + root.string());
    }
    std::sort(files.begin(), files.end());
    std::vector<psda::MissionRecord> records;
    for (const auto& f : files) {
      std::ifstream in(f);
      if (!in) psda::fail(psda::ErrorCode::kIo, "cannot read " + f.string());
      std::stringstream text;
      text << in.rdbuf();
      records.push_back(psda::io::record_from_json(psda::io::parse(text.str())));
    }
    psda::export_plots(records, root / "plots");
  });
}

psda_status psda_mission_create(const psda_scenario* s, const char* modality, uint64_t seed, int simulate_human, psda_mission** out) {
  return guarded([&] {
    require(s, "scenario");
    require(out, "out");
    psda::MissionConfig cfg = s->scenario.mission;
    if (modality != nullptr) cfg.modality = psda::modality_from_string(modality);
    cfg.human.enabled = simulate_human != 0;
    *out = new psda_mission{std::make_unique<psda::Mission>(cfg, seed)};
  });
}

psda_status psda_mission_step(psda_mission* m, int n, char** events_json) {
  return guarded([&] {
    require(m, "mission");
    if (n < 0) psda::fail(psda::ErrorCode::kInvalidArgument, "n must be >= 0");
    if (n > 0 && m->mission->finished()) psda::fail(psda::ErrorCode::kState, "mission already finished");
    psda::io::Json events = psda::io::Json::array();
    for (int i = 0; i < n && !m->mission->finished(); ++i) {
      const psda::StepEvents ev = m->mission->advance();
      psda::io::Json obs = psda::io::Json::array();
      for (const auto& o : ev.observations) obs.push_back(psda::io::to_json(o));
      events.push_back({{"k", ev.k}, {"detections", ev.detections}, {"observations", std::move(obs)}, {"replanned", ev.replanned}, {"finished", ev.finished}});
    }
    maybe_out(events_json, events);
  });
}

psda_status psda_mission_observe(psda_mission* m, const char* observation_json, char** event_json) {
  return guarded([&] {
    require(m, "mission");
    require(observation_json, "observation_json");
    const auto obs = psda::io::observation_from_json(psda::io::parse(observation_json));
    maybe_out(event_json, psda::io::to_json(m->mission->inject(obs)));
  });
}

psda_status psda_mission_finished(const psda_mission* m, int* finished) {
  return guarded([&] {
    require(m, "mission");
    require(finished, "finished");
    *finished = m->mission->finished() ? 1 : 0;
  });
}

psda_status psda_mission_record(const psda_mission* m, char** record_json) {
  return guarded([&] {
    require(m, "mission");
    require(record_json, "record_json");
    *record_json = copy_out(psda::io::to_json(m->mission->record()).dump());
  });
}

void psda_mission_free(psda_mission* m) { delete m; }

psda_status psda_gamma(const double* normalizers, size_t n, double false_positive_rate, int dictionary_size, double* gamma_out) {
  return guarded([&] {
    if (n > 0) require(normalizers, "normalizers");
    require(gamma_out, "gamma_out");
    psda::AssociationConfig cfg;
    cfg.false_positive_rate = false_positive_rate;
    const auto g = psda::gamma_multi(std::vector<double>(normalizers, normalizers + n), cfg, dictionary_size);
    std::copy(g.begin(), g.end(), gamma_out);
  });
}

psda_status psda_server_start(const char* address, uint16_t port, int threads, psda_server** out) {
  return guarded([&] {
    require(address, "address");
    require(out, "out");
    auto server = std::make_unique<psda::bridge::Server>(address, port, threads);
    server->start();
    *out = new psda_server{std::move(server)};
  });
}

psda_status psda_server_port(const psda_server* s, uint16_t* port) {
  return guarded([&] {
    require(s, "server");
    require(port, "port");
    *port = s->server->port();
  });
}

psda_status psda_server_wait(psda_server* s) {
  return guarded([&] {
    require(s, "server");
    s->server->wait();
  });
}

psda_status psda_server_stop(psda_server* s) {
  return guarded([&] {
    require(s, "server");
    s->server->stop();
  });
}

void psda_server_free(psda_server* s) { delete s; }

}  // extern "C"
