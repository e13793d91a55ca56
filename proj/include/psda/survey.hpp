#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psda/association.hpp"
#include "psda/gaussmix.hpp"
#include "psda/planner.hpp"
#include "psda/rng.hpp"
#include "psda/semantics.hpp"

namespace psda {

enum class Modality { kDetectorOnly, kNoDA, kNaiveDA, kGreedy, kPSDA };
std::string to_string(Modality m);
Modality modality_from_string(std::string_view s);
const std::vector<Modality>& all_modalities();

enum class Morphology { kLarge, kRound };
std::string to_string(Morphology m);
Morphology morphology_from_string(std::string_view s);

struct Target {
  int id = 0;
  Mineral mineral = Mineral::kCalcite;
  Morphology morphology = Morphology::kLarge;
  Vec2 position = Vec2::Zero();
};

/// Non-target rock the astronaut may mistake for a specimen.
struct Distractor {
  Mineral mineral = Mineral::kCalcite;
  Vec2 position = Vec2::Zero();
};

struct WorldConfig {
  double extent = 50.0;
  std::vector<Target> targets;
  std::vector<Distractor> distractors;
  std::vector<Landmark> landmarks;
  std::uint64_t seed = 1;
};

/// Reference world: four specimens (large/round x calcite/pyroxene), the given
/// number of distractors and six oriented landmarks, all placed from `seed`.
WorldConfig default_world(std::uint64_t seed = 2019, double extent = 50.0, int distractors = 6);

struct HumanModel {
  double rover_fp = 0.10;
  double drone_fp = 0.20;
  int cadence = 8;
  double fire_probability = 0.80;
  /// FP rates the estimator assumes; unset means "equal to the true rate".
  std::optional<double> assumed_rover_fp;
  std::optional<double> assumed_drone_fp;
  /// Share of erroneous data that are phantom reports rather than label noise.
  double phantom_fraction = 0.5;
  /// Drone data use the nearest landmark within this range as frame of reference.
  double landmark_range = 15.0;
  bool enabled = true;

  double assumed_fp_rover() const { return assumed_rover_fp.value_or(rover_fp); }
  double assumed_fp_drone() const { return assumed_drone_fp.value_or(drone_fp); }
};

/// kClustered: a few candidate sites per target, one of them near the truth.
/// kRandom: components scattered over the whole site.
/// kChallenging: every candidate site lies away from the truth.
enum class PriorLayout { kClustered, kRandom, kChallenging };
std::string to_string(PriorLayout l);
PriorLayout prior_layout_from_string(std::string_view s);

struct PriorConfig {
  int components = 25;
  PriorLayout layout = PriorLayout::kClustered;
  int clusters = 25;
  /// Component spread inside a cluster (kClustered, kChallenging) or the site (kRandom).
  double min_sigma = 1.5;
  double max_sigma = 3.0;
  double cluster_radius = 2.0;
  /// Offset of the true site's cluster centre from the target.
  double truth_offset = 2.0;
  /// Minimum distance of decoy clusters from the target.
  double decoy_distance = 10.0;
};

struct MissionConfig {
  WorldConfig world = default_world();
  HumanModel human;
  PriorConfig prior;
  SensorGeometry geometry;
  SpatialModelConfig spatial;
  AssociationConfig association;
  Modality modality = Modality::kPSDA;
  int max_steps = 250;
  double lane_spacing = 5.0;
  double drone_speed = 5.0;
  /// Samples per active component for detector non-detection updates.
  int detector_samples = 500;
  /// Components farther than this many standard deviations from a sensed region are skipped.
  double activity_sigmas = 4.0;
  double detection_variance = 0.01;
};

/// Initial per-target beliefs.
std::vector<GaussianMixture> initial_priors(const WorldConfig& world, const PriorConfig& cfg);

/// Boustrophedon drone path over the site.
std::vector<Vec2> lawnmower_path(double extent, double lane_spacing);

/// Footprint polygon mapped to world coordinates.
Polygon to_world(const Polygon& local, const Pose& pose);

/// ζ_k: target i detected iff it lies inside the detector footprint.
std::vector<int> simulate_detector(const Pose& rover, const std::vector<Target>& targets, const SensorGeometry& geometry);

/// Components whose mass can overlap the region (world polygon).
std::vector<bool> active_components(const GaussianMixture& gm, const Polygon& region, double sigmas);

/// Folds in the knowledge that targets lie inside the site: components whose mass
/// reaches past the boundary are reweighted and reshaped by an inside-site likelihood.
GaussianMixture confine_to_site(const GaussianMixture& gm, double extent, double sharpness, double sigmas, int samples,
                                std::uint64_t seed);

/// Uniform mixture of the given beliefs.
GaussianMixture average_belief(const std::vector<const GaussianMixture*>& beliefs);

/// Average-belief density sampled at cell centres, row-major from y = 0.
std::vector<double> belief_raster(const GaussianMixture& gm, double extent, int resolution);

struct ObservationEvent {
  SemanticObservation obs;
  /// "rover", "drone" or "external".
  std::string source = "external";
  bool erroneous = false;
  /// Filled by fusion.
  std::vector<int> candidates;
  std::vector<double> gamma;
  std::vector<double> normalizers;
  bool discarded = false;
};

struct HumanView {
  Pose rover;
  Pose drone;
  std::vector<bool> detected;
};

/// One astronaut report from the given imager ("rover" or "drone"), drawn with rng.
ObservationEvent simulate_human(const HumanView& view, bool drone_imager, int k, const MissionConfig& cfg, Rng& rng);

struct MissionRecord {
  std::uint64_t seed = 0;
  Modality modality = Modality::kPSDA;
  /// Totals so far for a running mission; success and termination are set when it ends.
  bool success = false;
  int detected_count = 0;
  double distance = 0.0;
  int steps = 0;
  std::string termination;
  /// delta[k][i]: MAP error of target i at the end of step k, after that step's human data.
  std::vector<std::vector<double>> delta;
  std::vector<int> detection_step;
  /// (k, gamma_0) for every associated positive datum.
  std::vector<std::pair<int, double>> gamma0;
  std::vector<ObservationEvent> observations;
  /// Steps at which the rover replanned.
  std::vector<int> replans;
  std::vector<Vec2> rover_track;
};

struct MissionState {
  int k = 0;
  Pose rover;
  Pose drone;
  std::vector<GaussianMixture> beliefs;
  std::vector<bool> detected;
  std::vector<Cell> path;
  Vec2 goal = Vec2::Zero();
  double distance = 0.0;
  bool finished = false;
  std::string termination;
};

/// What one call to Mission::advance produced.
struct StepEvents {
  int k = 0;
  std::vector<int> detections;
  std::vector<ObservationEvent> observations;
  bool replanned = false;
  bool finished = false;
};

/**
 * Sequential mission state machine. Each step moves the rover one waypoint and
 * the drone along its lawnmower path, fuses detector outcomes, records MAP errors,
 * replans on the triggers, and then applies astronaut data for that step (simulated,
 * replayed, or injected from outside).
 */
class Mission {
 public:
  Mission(MissionConfig cfg, std::uint64_t seed);
  /// Replays logged observations instead of simulating the astronaut.
  Mission(MissionConfig cfg, std::uint64_t seed, std::vector<ObservationEvent> replay);

  const MissionConfig& config() const { return cfg_; }
  const MissionState& state() const { return state_; }
  bool finished() const { return state_.finished; }

  StepEvents advance();
  /// Fuses an external datum at the current step.
  ObservationEvent inject(const SemanticObservation& obs, const std::string& source = "external", bool erroneous = false);

  GaussianMixture average_belief() const;
  FrameContext frame_context() const;
  const MissionRecord& record() const { return record_; }

 private:
  void initialise();
  void move();
  std::vector<int> fuse_detector();
  void record_errors();
  void replan();
  void apply_human(StepEvents& events);
  void fuse_observation(ObservationEvent& ev);
  void finish(const std::string& why);
  void confine(std::size_t target, std::uint64_t seed);

  MissionConfig cfg_;
  std::uint64_t seed_;
  MissionState state_;
  MissionRecord record_;
  Grid grid_;
  std::vector<Vec2> drone_path_;
  double drone_arc_ = 0.0;
  Rng human_rng_;
  bool replaying_ = false;
  std::vector<ObservationEvent> replay_;
  std::size_t replay_cursor_ = 0;
  std::uint64_t observation_count_ = 0;
};

MissionRecord run_mission(const MissionConfig& cfg, std::uint64_t seed);
/// Re-runs a mission from its observation log.
MissionRecord replay_mission(const MissionConfig& cfg, std::uint64_t seed, const std::vector<ObservationEvent>& log);

}  // namespace psda
