#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "psda/json_io.hpp"
#include "psda/survey.hpp"

namespace psda {

struct BatchSpec {
  std::string scenario = "default";
  MissionConfig mission;
  std::vector<Modality> modalities = all_modalities();
  int runs = 20;
  std::uint64_t base_seed = 7;
  /// Worker threads; 0 picks the hardware concurrency.
  int threads = 0;
  /// When set, per-step beliefs of every run are written here as JSON lines.
  std::optional<std::filesystem::path> snapshot_dir;
};

struct ModalitySummary {
  Modality modality = Modality::kPSDA;
  int runs = 0;
  int successes = 0;
  double mean_detected = 0.0;
  /// Unset when no run succeeded.
  std::optional<double> mean_success_distance;
  /// Sorted by seed.
  std::vector<MissionRecord> records;
};

struct BatchReport {
  std::string scenario;
  std::uint64_t base_seed = 7;
  int runs = 0;
  std::vector<ModalitySummary> modalities;

  const ModalitySummary& of(Modality m) const;
};

/// Statistics of one modality; a pure function of the records.
ModalitySummary summarize(Modality m, std::vector<MissionRecord> records);

/// Runs every (modality, run index) with seed = base_seed + index. A run that throws is
/// recorded as a failed mission with termination "error: ..." instead of aborting the batch.
BatchReport run_batch(const BatchSpec& spec);

/// Deterministic report (no timings): identical specs give byte-identical dumps.
io::Json to_json(const BatchReport& report);

enum class FpClass { kPerfect, kConservative, kOptimistic };
std::string to_string(FpClass c);
/// assumed == true is perfect, assumed > true conservative, assumed < true optimistic.
FpClass classify_fp(double true_fp, double assumed_fp);

struct FpGridSpec {
  std::string scenario = "default";
  MissionConfig mission;
  /// (true, assumed) pairs; each value applies to both imagers.
  std::vector<std::pair<double, double>> cells;
  int runs = 20;
  std::uint64_t base_seed = 7;
  int threads = 0;
};

/// Cartesian product of true and assumed rates.
std::vector<std::pair<double, double>> fp_cells(const std::vector<double>& true_fp, const std::vector<double>& assumed_fp);

struct FpCell {
  double true_fp = 0.0;
  double assumed_fp = 0.0;
  FpClass cls = FpClass::kPerfect;
  int runs = 0;
  int successes = 0;
};

struct FpGridReport {
  std::string scenario;
  std::uint64_t base_seed = 7;
  std::vector<FpCell> cells;

  /// Mean success count over the cells of one class; unset when the class is empty.
  std::optional<double> mean_successes(FpClass c) const;
};

/// PSDA runs per cell, with the mission's true and assumed FP rates overridden.
FpGridReport fp_grid(const FpGridSpec& spec);
io::Json to_json(const FpGridReport& report);

/// Writes runs.csv (one row per record) and one CSV per record named
/// <modality>_<seed>.csv with columns k, delta_<i>..., gamma0, observations, detections
/// for k = 1..steps. An empty record list yields a header-only runs.csv.
void export_plots(const std::vector<MissionRecord>& records, const std::filesystem::path& dir);

/// Output directory: explicit value if given, else $PSDA_OUT_DIR, else "psda_out".
std::filesystem::path output_directory(const std::optional<std::string>& explicit_dir);

}  // namespace psda
