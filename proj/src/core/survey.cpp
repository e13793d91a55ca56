#include "psda/survey.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "psda/error.hpp"

namespace psda {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kTagInit = 0x494e4954;
constexpr std::uint64_t kTagHuman = 0x48554d;
constexpr std::uint64_t kTagDetector = 0x444554;
constexpr std::uint64_t kTagObservation = 0x4f4253;
constexpr std::uint64_t kTagPrior = 0x505249;
constexpr std::uint64_t kTagWorld = 0x574c44;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

bool far_from_all(const Vec2& p, const std::vector<Vec2>& others, double gap) {
  return std::all_of(others.begin(), others.end(), [&](const Vec2& o) { return (o - p).norm() >= gap; });
}

Vec2 place(Rng& rng, double lo, double hi, std::vector<Vec2>& taken, double gap) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Vec2 p(uniform(rng, lo, hi), uniform(rng, lo, hi));
    if (far_from_all(p, taken, gap)) {
      taken.push_back(p);
      return p;
    }
  }
  fail(ErrorCode::kConfig, "world: cannot place objects with the requested separation");
}

}  // namespace

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kDetectorOnly: return "detector_only";
    case Modality::kNoDA: return "no_da";
    case Modality::kNaiveDA: return "naive";
    case Modality::kGreedy: return "greedy";
    case Modality::kPSDA: return "psda";
  }
  return "psda";
}

Modality modality_from_string(std::string_view s) {
  for (Modality m : all_modalities()) {
    if (to_string(m) == s) return m;
  }
  if (s == "naive_da") return Modality::kNaiveDA;
  if (s == "greedy_psda") return Modality::kGreedy;
  fail(ErrorCode::kInvalidArgument, "unknown modality '" + std::string(s) + "'");
}

const std::vector<Modality>& all_modalities() {
  static const std::vector<Modality> all = {Modality::kPSDA, Modality::kNaiveDA, Modality::kGreedy, Modality::kNoDA,
                                            Modality::kDetectorOnly};
  return all;
}

std::string to_string(Morphology m) { return m == Morphology::kLarge ? "large" : "round"; }

Morphology morphology_from_string(std::string_view s) {
  if (s == "large") return Morphology::kLarge;
  if (s == "round") return Morphology::kRound;
  fail(ErrorCode::kInvalidArgument, "unknown morphology '" + std::string(s) + "'");
}

WorldConfig default_world(std::uint64_t seed, double extent, int distractors) {
  if (!(extent >= 30.0)) fail(ErrorCode::kConfig, "world: generated layouts need an extent of at least 30 m");
  if (distractors < 0) fail(ErrorCode::kConfig, "world: distractor count must be >= 0");
  WorldConfig w;
  w.seed = seed;
  w.extent = extent;
  Rng rng(derive_seed(seed, {kTagWorld}));
  std::vector<Vec2> taken;
  int id = 0;
  for (Mineral mineral : {Mineral::kCalcite, Mineral::kPyroxene}) {
    for (Morphology morph : {Morphology::kLarge, Morphology::kRound}) {
      w.targets.push_back({id++, mineral, morph, place(rng, 5.0, w.extent - 5.0, taken, 10.0)});
    }
  }
  for (int i = 0; i < distractors; ++i) {
    w.distractors.push_back({i % 2 == 0 ? Mineral::kCalcite : Mineral::kPyroxene, place(rng, 3.0, w.extent - 3.0, taken, 4.0)});
  }
  std::vector<Vec2> marks;
  for (int i = 0; i < 6; ++i) {
    Vec2 p = place(rng, 6.0, w.extent - 6.0, marks, 14.0);
    w.landmarks.push_back({i, Pose(p, uniform(rng, -std::numbers::pi, std::numbers::pi))});
  }
  return w;
}

std::string to_string(PriorLayout l) {
  switch (l) {
    case PriorLayout::kClustered: return "clustered";
    case PriorLayout::kRandom: return "random";
    case PriorLayout::kChallenging: return "challenging";
  }
  return "clustered";
}

PriorLayout prior_layout_from_string(std::string_view s) {
  for (PriorLayout l : {PriorLayout::kClustered, PriorLayout::kRandom, PriorLayout::kChallenging}) {
    if (to_string(l) == s) return l;
  }
  fail(ErrorCode::kConfig, "unknown prior layout '" + std::string(s) + "'");
}

std::vector<GaussianMixture> initial_priors(const WorldConfig& world, const PriorConfig& cfg) {
  if (cfg.components < 1) fail(ErrorCode::kConfig, "prior: components must be >= 1");
  if (cfg.clusters < 1) fail(ErrorCode::kConfig, "prior: clusters must be >= 1");
  if (!(cfg.min_sigma > 0.0) || cfg.max_sigma < cfg.min_sigma) fail(ErrorCode::kConfig, "prior: invalid sigma range");
  const double lo = 2.0, hi = world.extent - 2.0;
  std::vector<GaussianMixture> out;
  for (const auto& t : world.targets) {
    Rng rng(derive_seed(world.seed, {kTagPrior, static_cast<std::uint64_t>(t.id)}));
    std::vector<Vec2> centres;
    if (cfg.layout != PriorLayout::kRandom) {
      if (cfg.layout == PriorLayout::kClustered) {
        const double a = uniform(rng, -std::numbers::pi, std::numbers::pi);
        const double r = cfg.truth_offset * std::sqrt(uniform(rng, 0.0, 1.0));
        centres.push_back((t.position + r * Vec2(std::cos(a), std::sin(a))).cwiseMax(lo).cwiseMin(hi));
      }
      while (static_cast<int>(centres.size()) < cfg.clusters) {
        Vec2 c(uniform(rng, lo, hi), uniform(rng, lo, hi));
        if ((c - t.position).norm() >= cfg.decoy_distance) centres.push_back(c);
      }
    }
    std::vector<double> weights;
    std::vector<Gaussian> comps;
    for (int u = 0; u < cfg.components; ++u) {
      Vec2 mean;
      if (cfg.layout == PriorLayout::kRandom) {
        mean = Vec2(uniform(rng, lo, hi), uniform(rng, lo, hi));
      } else {
        const Vec2& c = centres[static_cast<std::size_t>(u % cfg.clusters)];
        const double r = cfg.cluster_radius * std::sqrt(uniform(rng, 0.0, 1.0));
        const double a = uniform(rng, -std::numbers::pi, std::numbers::pi);
        mean = (c + r * Vec2(std::cos(a), std::sin(a))).cwiseMax(1.0).cwiseMin(world.extent - 1.0);
      }
      const double sx = uniform(rng, cfg.min_sigma, cfg.max_sigma);
      const double sy = uniform(rng, cfg.min_sigma, cfg.max_sigma);
      const Eigen::Matrix2d rot = Pose(Vec2::Zero(), uniform(rng, -std::numbers::pi, std::numbers::pi)).rotation();
      const Eigen::Matrix2d cov = rot * Eigen::Vector2d(sx * sx, sy * sy).asDiagonal() * rot.transpose();
      comps.emplace_back(mean, Mat(cov));
      weights.push_back(uniform(rng, 0.5, 1.5));
    }
    out.push_back(GaussianMixture::normalized(std::move(weights), std::move(comps)));
  }
  return out;
}

std::vector<Vec2> lawnmower_path(double extent, double lane_spacing) {
  if (!(lane_spacing > 0.0) || lane_spacing > extent) fail(ErrorCode::kConfig, "drone: invalid lane spacing");
  std::vector<Vec2> pts;
  const double lo = lane_spacing / 2.0;
  const double hi = extent - lane_spacing / 2.0;
  bool forward = true;
  for (double y = lo; y <= hi + 1e-9; y += lane_spacing) {
    pts.emplace_back(forward ? lo : hi, y);
    pts.emplace_back(forward ? hi : lo, y);
    forward = !forward;
  }
  return pts;
}

Polygon to_world(const Polygon& local, const Pose& pose) {
  Polygon out;
  out.reserve(local.size());
  for (const auto& p : local) out.push_back(pose.to_world(p));
  return out;
}

std::vector<int> simulate_detector(const Pose& rover, const std::vector<Target>& targets, const SensorGeometry& geometry) {
  std::vector<int> z;
  z.reserve(targets.size());
  for (const auto& t : targets) z.push_back(polygon_contains(geometry.detector, rover.to_local(t.position)) ? 1 : 0);
  return z;
}

std::vector<bool> active_components(const GaussianMixture& gm, const Polygon& region, double sigmas) {
  const Vec2 c = polygon_centroid(region);
  double radius = 0.0;
  for (const auto& p : region) radius = std::max(radius, (p - c).norm());
  std::vector<bool> active(gm.size());
  for (std::size_t u = 0; u < gm.size(); ++u) {
    const auto& g = gm.component(u);
    const double spread = std::sqrt(Eigen::SelfAdjointEigenSolver<Mat>(g.covariance(), Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
    active[u] = (g.mean() - c).norm() - radius < sigmas * spread;
  }
  return active;
}

GaussianMixture confine_to_site(const GaussianMixture& gm, double extent, double sharpness, double sigmas, int samples,
                                std::uint64_t seed) {
  std::vector<bool> active(gm.size());
  bool any = false;
  for (std::size_t u = 0; u < gm.size(); ++u) {
    const auto& g = gm.component(u);
    const Vec& m = g.mean();
    const double edge = std::min({m[0], m[1], extent - m[0], extent - m[1]});
    const double spread = std::sqrt(Eigen::SelfAdjointEigenSolver<Mat>(g.covariance(), Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
    active[u] = gm.weight(u) > 0.0 && edge < sigmas * spread;
    any = any || active[u];
  }
  if (!any) return gm;
  static const std::string kIn = "inside", kOut = "outside";
  const Polygon site = {{0.0, 0.0}, {extent, 0.0}, {extent, extent}, {0.0, extent}};
  const SoftmaxModel model = polygon_model(site, sharpness, kIn, kOut);
  return lwis(gm, model, model.label_index(kIn), samples, seed, active).posterior;
}

GaussianMixture average_belief(const std::vector<const GaussianMixture*>& beliefs) {
  if (beliefs.empty()) fail(ErrorCode::kState, "average_belief: no undetected targets");
  std::vector<std::pair<double, const GaussianMixture*>> parts;
  for (const auto* b : beliefs) parts.emplace_back(1.0 / static_cast<double>(beliefs.size()), b);
  return mix(parts);
}

std::vector<double> belief_raster(const GaussianMixture& gm, double extent, int resolution) {
  if (resolution < 1) fail(ErrorCode::kInvalidArgument, "raster: resolution must be >= 1");
  const double cell = extent / resolution;
  Mat pts(2, resolution * resolution);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) pts.col(r * resolution + c) << (c + 0.5) * cell, (r + 0.5) * cell;
  }
  const Vec d = gm_pdf_columns(gm, pts);
  return std::vector<double>(d.data(), d.data() + d.size());
}

namespace {

/// Label (among the spatial labels) that is most probable at p under the frame's model.
std::string describe_label(const Pose& frame, const Vec2& p, const SpatialModelConfig& spatial) {
  const SoftmaxModel model = build_spatial_model(frame, ObservationType::kRangeBearing, spatial);
  const Vec probs = model.label_probabilities(p);
  std::string best;
  double best_p = -1.0;
  for (const auto& name : spatial_labels()) {
    const double q = probs[model.label_index(name)];
    if (q > best_p) {
      best_p = q;
      best = name;
    }
  }
  return best;
}

SemanticObservation describe(const HumanView& view, bool drone, const Vec2& p, Mineral mineral, int k, const MissionConfig& cfg) {
  SemanticObservation obs;
  obs.polarity = Polarity::kPositive;
  obs.mineral = mineral;
  obs.k = k;
  if (!drone) {
    obs.frame = {FrameKind::kRover, -1};
    obs.label = describe_label(view.rover, p, cfg.spatial);
    return obs;
  }
  const Landmark* nearest = nullptr;
  double best = cfg.human.landmark_range;
  for (const auto& lm : cfg.world.landmarks) {
    const double d = (lm.pose.position - p).norm();
    if (d <= best) {
      best = d;
      nearest = &lm;
    }
  }
  if (nearest == nullptr) {
    obs.frame = {FrameKind::kDroneFov, -1};
    obs.label = std::string(labels::kInView);
  } else {
    obs.frame = {FrameKind::kLandmark, nearest->id};
    obs.label = describe_label(nearest->pose, p, cfg.spatial);
  }
  return obs;
}

Mineral random_mineral(Rng& rng) { return std::bernoulli_distribution(0.5)(rng) ? Mineral::kCalcite : Mineral::kPyroxene; }

}  // namespace

ObservationEvent simulate_human(const HumanView& view, bool drone_imager, int k, const MissionConfig& cfg, Rng& rng) {
  const Pose& pose = drone_imager ? view.drone : view.rover;
  const Polygon region = to_world(drone_imager ? cfg.geometry.drone_imager : cfg.geometry.nav_camera, pose);
  std::vector<const Target*> seen;
  for (std::size_t i = 0; i < cfg.world.targets.size(); ++i) {
    const bool found = i < view.detected.size() && view.detected[i];
    if (!found && polygon_contains(region, cfg.world.targets[i].position)) seen.push_back(&cfg.world.targets[i]);
  }
  std::vector<const Distractor*> decoys;
  for (const auto& d : cfg.world.distractors) {
    if (polygon_contains(region, d.position)) decoys.push_back(&d);
  }

  ObservationEvent ev;
  ev.source = drone_imager ? "drone" : "rover";
  const double fp = drone_imager ? cfg.human.drone_fp : cfg.human.rover_fp;
  ev.erroneous = std::bernoulli_distribution(fp)(rng);

  if (!ev.erroneous) {
    if (!seen.empty()) {
      const Target* t = seen[std::uniform_int_distribution<std::size_t>(0, seen.size() - 1)(rng)];
      ev.obs = describe(view, drone_imager, t->position, t->mineral, k, cfg);
    } else {
      ev.obs.polarity = Polarity::kNegative;
      ev.obs.mineral = random_mineral(rng);
      ev.obs.label = std::string(labels::kNoneVisible);
      ev.obs.frame = {drone_imager ? FrameKind::kDroneFov : FrameKind::kRover, -1};
      ev.obs.k = k;
    }
    return ev;
  }

  const bool phantom = seen.empty() || std::bernoulli_distribution(cfg.human.phantom_fraction)(rng);
  if (!phantom) {
    const Target* t = seen[std::uniform_int_distribution<std::size_t>(0, seen.size() - 1)(rng)];
    ev.obs = describe(view, drone_imager, t->position, t->mineral, k, cfg);
    if (ev.obs.frame.kind != FrameKind::kDroneFov) {
      const auto& names = spatial_labels();
      std::vector<std::string> wrong;
      for (const auto& n : names) {
        if (n != ev.obs.label) wrong.push_back(n);
      }
      ev.obs.label = wrong[std::uniform_int_distribution<std::size_t>(0, wrong.size() - 1)(rng)];
      return ev;
    }
    // An in-view report cannot carry a wrong direction; misreport the mineral instead.
    ev.obs.mineral = t->mineral == Mineral::kCalcite ? Mineral::kPyroxene : Mineral::kCalcite;
    return ev;
  }
  if (!decoys.empty()) {
    const Distractor* d = decoys[std::uniform_int_distribution<std::size_t>(0, decoys.size() - 1)(rng)];
    ev.obs = describe(view, drone_imager, d->position, d->mineral, k, cfg);
    return ev;
  }
  // Nothing to mistake: a report about an empty spot in view.
  const Vec2 lo = region[0].cwiseMin(region[1]).cwiseMin(region[2]).cwiseMin(region[3]);
  const Vec2 hi = region[0].cwiseMax(region[1]).cwiseMax(region[2]).cwiseMax(region[3]);
  Vec2 spot = pose.position;
  for (int attempt = 0; attempt < 100; ++attempt) {
    Vec2 c(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()));
    if (polygon_contains(region, c)) {
      spot = c;
      break;
    }
  }
  ev.obs = describe(view, drone_imager, spot, random_mineral(rng), k, cfg);
  return ev;
}

// ---------------------------------------------------------------------------

Mission::Mission(MissionConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed), human_rng_(derive_seed(seed, {kTagHuman})) {
  initialise();
}

Mission::Mission(MissionConfig cfg, std::uint64_t seed, std::vector<ObservationEvent> replay)
    : cfg_(std::move(cfg)), seed_(seed), human_rng_(derive_seed(seed, {kTagHuman})), replaying_(true), replay_(std::move(replay)) {
  initialise();
}

void Mission::initialise() {
  if (cfg_.max_steps < 0) fail(ErrorCode::kConfig, "mission: max_steps must be >= 0");
  if (cfg_.human.cadence < 1) fail(ErrorCode::kConfig, "human: cadence must be >= 1");
  for (double p : {cfg_.human.rover_fp, cfg_.human.drone_fp, cfg_.human.fire_probability, cfg_.human.phantom_fraction,
                   cfg_.human.assumed_fp_rover(), cfg_.human.assumed_fp_drone()}) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::kConfig, "human: probabilities must lie in [0, 1]");
  }
  const double extent = cfg_.world.extent;
  for (const auto& t : cfg_.world.targets) {
    if ((t.position.array() < 0.0).any() || (t.position.array() > extent).any()) fail(ErrorCode::kConfig, "world: target outside the site");
  }
  grid_.extent = extent;
  drone_path_ = lawnmower_path(extent, cfg_.lane_spacing);

  Rng init(derive_seed(seed_, {kTagInit}));
  const Cell start = grid_.cell_of(Vec2(uniform(init, 5.0, extent - 5.0), uniform(init, 5.0, extent - 5.0)));
  state_.rover = Pose(grid_.center(start), uniform(init, -std::numbers::pi, std::numbers::pi));
  double loop = 0.0;
  for (std::size_t i = 1; i < drone_path_.size(); ++i) loop += (drone_path_[i] - drone_path_[i - 1]).norm();
  drone_arc_ = uniform(init, 0.0, 2.0 * loop);
  state_.drone = Pose(drone_path_.front(), 0.0);

  state_.beliefs = initial_priors(cfg_.world, cfg_.prior);
  state_.detected.assign(cfg_.world.targets.size(), false);
  for (std::size_t i = 0; i < state_.beliefs.size(); ++i) confine(i, derive_seed(seed_, {kTagInit, i}));
  record_.seed = seed_;
  record_.modality = cfg_.modality;
  record_.detection_step.assign(cfg_.world.targets.size(), -1);
  move();  // places the drone; the rover has no path yet
  record_.rover_track.push_back(state_.rover.position);
  if (cfg_.world.targets.empty()) {
    record_errors();
    finish("all_detected");
    return;
  }
  replan();
  StepEvents dummy;
  if (!state_.finished) apply_human(dummy);
  record_errors();
}

void Mission::move() {
  if (!state_.path.empty()) {
    const Vec2 next = grid_.center(state_.path.front());
    const Vec2 d = next - state_.rover.position;
    if (d.norm() > 0.0) state_.rover = Pose(next, std::atan2(d.y(), d.x()));
    state_.distance += d.norm();
    state_.path.erase(state_.path.begin());
  }
  // Drone ping-pongs along the lawnmower path.
  double loop = 0.0;
  for (std::size_t i = 1; i < drone_path_.size(); ++i) loop += (drone_path_[i] - drone_path_[i - 1]).norm();
  if (state_.k > 0) drone_arc_ = std::fmod(drone_arc_ + cfg_.drone_speed, 2.0 * loop);
  double s = drone_arc_;
  const bool back = s > loop;
  if (back) s = 2.0 * loop - s;
  for (std::size_t i = 1; i < drone_path_.size(); ++i) {
    const Vec2 seg = drone_path_[i] - drone_path_[i - 1];
    const double len = seg.norm();
    if (s <= len || i + 1 == drone_path_.size()) {
      const Vec2 dir = seg / len;
      const Vec2 heading = back ? Vec2(-dir) : dir;
      state_.drone = Pose(drone_path_[i - 1] + std::min(s, len) * dir, std::atan2(heading.y(), heading.x()));
      break;
    }
    s -= len;
  }
}

std::vector<int> Mission::fuse_detector() {
  std::vector<int> found;
  const auto z = simulate_detector(state_.rover, cfg_.world.targets, cfg_.geometry);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (state_.detected[i] || z[i] == 0) continue;
    state_.detected[i] = true;
    state_.beliefs[i] = GaussianMixture(Gaussian(cfg_.world.targets[i].position, Mat::Identity(2, 2) * cfg_.detection_variance));
    record_.detection_step[i] = state_.k;
    found.push_back(static_cast<int>(i));
  }
  const SoftmaxModel model = detector_likelihood(state_.rover, cfg_.geometry, cfg_.spatial);
  const int miss = model.label_index(labels::kNoDetection);
  const Polygon footprint = to_world(cfg_.geometry.detector, state_.rover);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (state_.detected[i]) continue;
    const auto active = active_components(state_.beliefs[i], footprint, cfg_.activity_sigmas);
    if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) continue;
    try {
      auto r = lwis(state_.beliefs[i], model, miss, cfg_.detector_samples,
                    derive_seed(seed_, {kTagDetector, static_cast<std::uint64_t>(state_.k), i}), active);
      state_.beliefs[i] = std::move(r.posterior);
      confine(i, derive_seed(seed_, {kTagDetector, static_cast<std::uint64_t>(state_.k), i, 1}));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
    }
  }
  return found;
}

void Mission::record_errors() {
  std::vector<double> row;
  for (std::size_t i = 0; i < cfg_.world.targets.size(); ++i) {
    row.push_back(state_.detected[i] ? 0.0 : (cfg_.world.targets[i].position - gm_map(state_.beliefs[i])).norm());
  }
  record_.delta.push_back(std::move(row));
}

GaussianMixture Mission::average_belief() const {
  std::vector<const GaussianMixture*> open;
  for (std::size_t i = 0; i < state_.beliefs.size(); ++i) {
    if (!state_.detected[i]) open.push_back(&state_.beliefs[i]);
  }
  return psda::average_belief(open);
}

void Mission::replan() {
  const Vec goal = gm_map(average_belief());
  state_.goal = Vec2(goal[0], goal[1]).cwiseMax(0.0).cwiseMin(grid_.extent);
  record_.replans.push_back(state_.k);
  const Cell from = grid_.cell_of(state_.rover.position);
  const Cell to = grid_.cell_of(state_.goal);
  if (from == to) {
    finish("no_goal");
    return;
  }
  auto path = astar(grid_, from, to);
  if (!path) {
    finish("no_goal");
    return;
  }
  state_.path = std::move(*path);
}

FrameContext Mission::frame_context() const {
  return {state_.rover, state_.drone, cfg_.world.landmarks, cfg_.geometry, cfg_.spatial};
}

void Mission::apply_human(StepEvents& events) {
  if (replaying_) {
    while (replay_cursor_ < replay_.size() && replay_[replay_cursor_].obs.k <= state_.k && !state_.finished) {
      const auto& ev = replay_[replay_cursor_++];
      if (ev.obs.k < state_.k) continue;
      events.observations.push_back(inject(ev.obs, ev.source, ev.erroneous));
    }
    return;
  }
  if (!cfg_.human.enabled || state_.k == 0 || state_.k % cfg_.human.cadence != 0) return;
  const HumanView view{state_.rover, state_.drone, state_.detected};
  for (bool drone : {false, true}) {
    if (state_.finished) break;
    if (!std::bernoulli_distribution(cfg_.human.fire_probability)(human_rng_)) continue;
    ObservationEvent ev = simulate_human(view, drone, state_.k, cfg_, human_rng_);
    events.observations.push_back(inject(ev.obs, ev.source, ev.erroneous));
  }
}

ObservationEvent Mission::inject(const SemanticObservation& obs, const std::string& source, bool erroneous) {
  if (state_.finished) fail(ErrorCode::kState, "mission already finished");
  ObservationEvent ev;
  ev.obs = obs;
  ev.obs.k = state_.k;
  ev.source = source;
  ev.erroneous = erroneous;
  validate_observation(ev.obs);
  if (ev.obs.frame.kind == FrameKind::kLandmark &&
      std::none_of(cfg_.world.landmarks.begin(), cfg_.world.landmarks.end(), [&](const Landmark& lm) { return lm.id == ev.obs.frame.landmark_id; })) {
    fail(ErrorCode::kInvalidArgument, "observation: unknown landmark " + std::to_string(ev.obs.frame.landmark_id));
  }
  fuse_observation(ev);
  record_.observations.push_back(ev);
  if (!ev.discarded) replan();
  // Data arriving after the step closed (bridge injections) still count towards delta_k.
  if (record_.delta.size() == static_cast<std::size_t>(state_.k) + 1) {
    record_.delta.pop_back();
    record_errors();
  }
  return ev;
}

void Mission::fuse_observation(ObservationEvent& ev) {
  const std::uint64_t seed = derive_seed(seed_, {kTagObservation, observation_count_++});
  if (cfg_.modality == Modality::kDetectorOnly) {
    ev.discarded = true;
    return;
  }
  const ObservationLikelihood lik = observation_likelihood(ev.obs, frame_context());
  std::vector<TargetInfo> info;
  for (std::size_t i = 0; i < cfg_.world.targets.size(); ++i) {
    info.push_back({static_cast<int>(i), cfg_.world.targets[i].mineral, static_cast<bool>(state_.detected[i])});
  }
  ev.candidates = resolve_candidates(ev.obs, info);

  if (ev.obs.polarity == Polarity::kNegative) {
    // Negative data carve the sensed view out of every matching belief; no association.
    const bool drone = ev.obs.frame.kind == FrameKind::kDroneFov;
    const Polygon region = to_world(drone ? cfg_.geometry.drone_imager : cfg_.geometry.nav_camera, drone ? state_.drone : state_.rover);
    for (int id : ev.candidates) {
      auto& belief = state_.beliefs[static_cast<std::size_t>(id)];
      const auto active = active_components(belief, region, cfg_.activity_sigmas);
      try {
        auto r = lwis(belief, lik.model, lik.label, cfg_.association.fusion.samples_per_component,
                      derive_seed(seed, {static_cast<std::uint64_t>(id)}), active);
        ev.normalizers.push_back(r.normalizer);
        belief = std::move(r.posterior);
        confine(static_cast<std::size_t>(id), derive_seed(seed, {static_cast<std::uint64_t>(id), 1}));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric) throw;
        ev.normalizers.push_back(0.0);
      }
    }
    return;
  }

  if (ev.candidates.empty()) {
    ev.discarded = true;
    ev.gamma = {1.0};
    return;
  }
  std::vector<const GaussianMixture*> priors;
  for (int id : ev.candidates) priors.push_back(&state_.beliefs[static_cast<std::size_t>(id)]);
  AssociationConfig acfg = cfg_.association;
  acfg.false_positive_rate = ev.obs.frame.kind == FrameKind::kRover ? cfg_.human.assumed_fp_rover() : cfg_.human.assumed_fp_drone();
  std::vector<GaussianMixture> updated;
  try {
    switch (cfg_.modality) {
      case Modality::kPSDA:
      case Modality::kGreedy: {
        AssociationResult r = cfg_.modality == Modality::kPSDA ? psda_multi(priors, lik.model, lik.label, acfg, seed)
                                                               : greedy_psda(priors, lik.model, lik.label, acfg, seed);
        ev.gamma = r.gamma;
        ev.normalizers = r.normalizers;
        updated = std::move(r.posteriors);
        record_.gamma0.emplace_back(state_.k, r.gamma[0]);
        break;
      }
      case Modality::kNaiveDA:
        updated = naive_da(priors, lik.model, lik.label, Polarity::kPositive, acfg, seed);
        break;
      case Modality::kNoDA:
        updated = no_da(priors, lik.model, lik.label, acfg, seed);
        break;
      case Modality::kDetectorOnly:
        break;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    ev.discarded = true;
    return;
  }
  for (std::size_t c = 0; c < ev.candidates.size() && c < updated.size(); ++c) {
    const auto id = static_cast<std::size_t>(ev.candidates[c]);
    state_.beliefs[id] = std::move(updated[c]);
    confine(id, derive_seed(seed, {id, 1}));
  }
}

void Mission::confine(std::size_t target, std::uint64_t seed) {
  try {
    state_.beliefs[target] = confine_to_site(state_.beliefs[target], cfg_.world.extent, cfg_.spatial.fov_sharpness, cfg_.activity_sigmas,
                                             cfg_.detector_samples, seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
  }
}

void Mission::finish(const std::string& why) {
  state_.finished = true;
  state_.termination = why;
  record_.termination = why;
  record_.steps = state_.k;
  record_.distance = state_.distance;
  record_.detected_count = static_cast<int>(std::count(state_.detected.begin(), state_.detected.end(), true));
  record_.success = record_.detected_count == static_cast<int>(state_.detected.size());
}

StepEvents Mission::advance() {
  if (state_.finished) fail(ErrorCode::kState, "mission already finished");
  StepEvents events;
  ++state_.k;
  events.k = state_.k;
  const bool arrived_before = state_.path.empty();
  move();
  record_.rover_track.push_back(state_.rover.position);
  events.detections = fuse_detector();
  if (std::all_of(state_.detected.begin(), state_.detected.end(), [](bool d) { return d; })) {
    finish("all_detected");
  } else if (state_.k >= cfg_.max_steps) {
    finish("max_steps");
  } else {
    if (!events.detections.empty() || state_.path.empty() || arrived_before) {
      replan();
      events.replanned = true;
    }
    if (!state_.finished) apply_human(events);
    if (!events.observations.empty()) events.replanned = true;
  }
  record_errors();  // after the step's human data, so delta matches the end-of-step belief
  record_.steps = state_.k;
  record_.distance = state_.distance;
  record_.detected_count = static_cast<int>(std::count(state_.detected.begin(), state_.detected.end(), true));
  events.finished = state_.finished;
  return events;
}

MissionRecord run_mission(const MissionConfig& cfg, std::uint64_t seed) {
  Mission m(cfg, seed);
  while (!m.finished()) m.advance();
  return m.record();
}

MissionRecord replay_mission(const MissionConfig& cfg, std::uint64_t seed, const std::vector<ObservationEvent>& log) {
  Mission m(cfg, seed, log);
  while (!m.finished()) m.advance();
  return m.record();
}

}  // namespace psda
