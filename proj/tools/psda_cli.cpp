// Command-line front end. Talks to the library only through the C API.
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "psda/psda.h"

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;

using Json = nlohmann::json;

struct Failure {
  psda_status status;
  std::string message;
};

void check(psda_status s) {
  if (s != PSDA_OK) throw Failure{s, psda_last_error()};
}

struct ScenarioDeleter {
  void operator()(psda_scenario* s) const { psda_scenario_free(s); }
};
using ScenarioPtr = std::unique_ptr<psda_scenario, ScenarioDeleter>;

/// A path to a TOML file, or the name of a built-in scenario.
ScenarioPtr open_scenario(const std::string& arg) {
  psda_scenario* s = nullptr;
  if (std::filesystem::exists(arg)) {
    check(psda_scenario_load(arg.c_str(), &s));
  } else if (arg == "default" || arg == "challenging") {
    check(psda_scenario_builtin(arg.c_str(), &s));
  } else {
    throw Failure{PSDA_ERR_CONFIG, "scenario '" + arg + "' is neither a file nor a built-in name"};
  }
  return ScenarioPtr(s);
}

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  psda_string_free(s);
  return out;
}

/// Explicit --out, else $PSDA_OUT_DIR, else ./psda_out.
std::string out_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("PSDA_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "psda_out";
}

std::string fmt(const Json& v, const char* spec) {
  if (v.is_null()) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v.get<double>());
  return buf;
}

void print_batch(const Json& report) {
  std::printf("%-14s %9s %16s %26s\n", "modality", "success", "mean detected", "mean distance (success, m)");
  for (const auto& m : report["modalities"]) {
    std::printf("%-14s %5d/%-3d %16s %26s\n", m["modality"].get<std::string>().c_str(), m["successes"].get<int>(), m["runs"].get<int>(),
                fmt(m["mean_detected"], "%.2f").c_str(), fmt(m["mean_success_distance"], "%.2f").c_str());
  }
}

void print_grid(const Json& report) {
  std::printf("%8s %8s %-13s %s\n", "true", "assumed", "class", "successes");
  for (const auto& c : report["cells"]) {
    std::printf("%8.2f %8.2f %-13s %d/%d\n", c["true_fp"].get<double>(), c["assumed_fp"].get<double>(), c["class"].get<std::string>().c_str(),
                c["successes"].get<int>(), c["runs"].get<int>());
  }
  for (const auto& [k, v] : report["mean_successes"].items()) std::printf("mean %-13s %s\n", k.c_str(), fmt(v, "%.2f").c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PSDA survey simulator and session bridge"};
  app.require_subcommand(1);

  std::string scenario = "default";
  std::string modalities;
  int runs = 20;
  std::uint64_t seed = 7;
  int threads = 0;
  std::string out;

  auto* run = app.add_subcommand("run", "Monte Carlo batch over fusion modalities");
  run->add_option("--scenario", scenario, "Scenario TOML file or built-in name (default, challenging)");
  run->add_option("--modalities", modalities, "Comma-separated: psda,naive,greedy,no_da,detector_only (default all)");
  run->add_option("--runs", runs, "Runs per modality")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Base seed; run i uses seed + i");
  run->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out, "Output directory (default $PSDA_OUT_DIR or ./psda_out)");

  std::vector<double> true_fp{0.1, 0.3, 0.5}, assumed_fp{0.1, 0.3, 0.5};
  auto* grid = app.add_subcommand("fp-grid", "PSDA success over true/assumed false-positive rates");
  grid->add_option("--scenario", scenario, "Scenario TOML file or built-in name");
  grid->add_option("--true", true_fp, "True FP rates")->delimiter(',')->check(CLI::Range(0.0, 1.0));
  grid->add_option("--assumed", assumed_fp, "Assumed FP rates")->delimiter(',')->check(CLI::Range(0.0, 1.0));
  grid->add_option("--runs", runs, "Runs per cell")->check(CLI::PositiveNumber);
  grid->add_option("--seed", seed, "Base seed");
  grid->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  grid->add_option("--out", out, "Output directory (default $PSDA_OUT_DIR or ./psda_out)");

  std::string plot_dir;
  auto* plots = app.add_subcommand("export-plots", "Write plot CSVs for the mission records of a run directory");
  plots->add_option("dir", plot_dir, "Directory written by `run`")->required();

  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;
  int server_threads = 2;
  auto* serve = app.add_subcommand("serve", "Interactive session bridge (HTTP + WebSocket)");
  serve->add_option("--address", address, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--threads", server_threads, "I/O threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const ScenarioPtr sc = open_scenario(scenario);
      const std::string dir = out_dir(out);
      char* report = nullptr;
      check(psda_run_batch(sc.get(), modalities.c_str(), runs, seed, threads, dir.c_str(), &report));
      print_batch(Json::parse(take(report)));
      std::printf("wrote %s/report.json\n", dir.c_str());
    } else if (*grid) {
      const ScenarioPtr sc = open_scenario(scenario);
      const std::string dir = out_dir(out);
      char* report = nullptr;
      check(psda_fp_grid(sc.get(), true_fp.data(), true_fp.size(), assumed_fp.data(), assumed_fp.size(), runs, seed, threads, dir.c_str(), &report));
      print_grid(Json::parse(take(report)));
      std::printf("wrote %s/fp_grid.json\n", dir.c_str());
    } else if (*plots) {
      check(psda_export_plots(plot_dir.c_str()));
      std::printf("wrote %s/plots\n", plot_dir.c_str());
    } else if (*serve) {
      // Block the shutdown signals before the server threads start so only sigwait sees them.
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);
      psda_server* server = nullptr;
      check(psda_server_start(address.c_str(), port, server_threads, &server));
      std::uint16_t bound = 0;
      psda_server_port(server, &bound);
      std::printf("listening on http://%s:%u\n", address.c_str(), static_cast<unsigned>(bound));
      std::fflush(stdout);
      int sig = 0;
      sigwait(&signals, &sig);
      psda_server_stop(server);
      psda_server_free(server);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.status == PSDA_ERR_CONFIG || f.status == PSDA_ERR_INVALID_ARGUMENT ? kExitConfig : kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
