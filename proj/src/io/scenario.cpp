#include "psda/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "psda/error.hpp"

namespace psda {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) { fail(ErrorCode::kConfig, "scenario " + where + ": " + what); }

/// Typed access to one table that remembers which keys were read.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool present() const { return table_ != nullptr; }
  const std::string& name() const { return name_; }

  template <class T>
  void read(const char* key, T& out) {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!n->is_boolean()) bad(path(key), "expected a boolean");
      out = n->as_boolean()->get();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!n->is_string()) bad(path(key), "expected a string");
      out = n->as_string()->get();
    } else if constexpr (std::is_integral_v<T>) {
      if (!n->is_integer()) bad(path(key), "expected an integer");
      const std::int64_t v = n->as_integer()->get();
      if (std::is_unsigned_v<T> && v < 0) bad(path(key), "expected a nonnegative integer");
      out = static_cast<T>(v);
    } else {
      if (!n->is_number()) bad(path(key), "expected a number");
      out = n->value<double>().value();
    }
  }

  void read(const char* key, std::optional<double>& out) {
    if (find(key) == nullptr) return;
    double v = 0.0;
    read(key, v);
    out = v;
  }

  void read(const char* key, Vec2& out) {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    out = point(*n, path(key));
  }

  void read(const char* key, Polygon& out) {
    const toml::node* n = find(key);
    if (n == nullptr) return;
    const toml::array* arr = n->as_array();
    if (arr == nullptr || arr->size() < 3) bad(path(key), "expected an array of at least three [x, y] points");
    out.clear();
    for (const auto& p : *arr) out.push_back(point(p, path(key)));
  }

  const toml::array* array(const char* key) {
    const toml::node* n = find(key);
    if (n == nullptr) return nullptr;
    if (!n->is_array()) bad(path(key), "expected an array");
    return n->as_array();
  }

  Section sub(const char* key) {
    const toml::node* n = find(key);
    if (n != nullptr && !n->is_table()) bad(path(key), "expected a table");
    return Section(n == nullptr ? nullptr : n->as_table(), path(key));
  }

  /// Rejects keys that were never read.
  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (!used_.count(key)) bad(path(key.c_str()), "unknown key");
    }
  }

  static Vec2 point(const toml::node& n, const std::string& where) {
    const toml::array* a = n.as_array();
    if (a == nullptr || a->size() != 2 || !(*a)[0].is_number() || !(*a)[1].is_number()) bad(where, "expected [x, y]");
    return Vec2((*a)[0].value<double>().value(), (*a)[1].value<double>().value());
  }

 private:
  const toml::node* find(const char* key) {
    used_.insert(key);
    return table_ == nullptr ? nullptr : table_->get(key);
  }
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

template <class F>
void each_table(Section& parent, const char* key, F&& f) {
  const toml::array* arr = parent.array(key);
  if (arr == nullptr) return;
  std::size_t i = 0;
  for (const auto& n : *arr) {
    if (!n.is_table()) bad(parent.name() + "." + key, "expected an array of tables");
    Section s(n.as_table(), parent.name() + "." + key + "[" + std::to_string(i++) + "]");
    f(s);
    s.finish();
  }
}

Mineral mineral_of(const std::string& s, const std::string& where) {
  try {
    return mineral_from_string(s);
  } catch (const Error&) {
    bad(where, "unknown mineral '" + s + "'");
  }
}

void read_world(Section w, WorldConfig& world) {
  double extent = 50.0;
  std::uint64_t seed = 2019;
  int distractor_count = 6;
  w.read("extent", extent);
  w.read("seed", seed);
  w.read("distractor_count", distractor_count);
  world = default_world(seed, extent, distractor_count);

  std::vector<Target> targets;
  each_table(w, "targets", [&](Section& t) {
    Target tg;
    tg.id = static_cast<int>(targets.size());
    std::string mineral = "calcite", morphology = "large";
    t.read("id", tg.id);
    t.read("mineral", mineral);
    t.read("morphology", morphology);
    t.read("position", tg.position);
    tg.mineral = mineral_of(mineral, t.name());
    try {
      tg.morphology = morphology_from_string(morphology);
    } catch (const Error&) {
      bad(t.name(), "unknown morphology '" + morphology + "'");
    }
    targets.push_back(tg);
  });
  if (w.array("targets") != nullptr) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i].id != static_cast<int>(i)) bad(w.name() + ".targets", "ids must be 0, 1, ... in listing order");
    }
    world.targets = std::move(targets);
  }

  std::vector<Distractor> distractors;
  each_table(w, "distractors", [&](Section& d) {
    Distractor ds;
    std::string mineral = "calcite";
    d.read("mineral", mineral);
    d.read("position", ds.position);
    ds.mineral = mineral_of(mineral, d.name());
    distractors.push_back(ds);
  });
  if (w.array("distractors") != nullptr) world.distractors = std::move(distractors);

  std::vector<Landmark> landmarks;
  each_table(w, "landmarks", [&](Section& l) {
    Landmark lm;
    lm.id = static_cast<int>(landmarks.size());
    Vec2 p = Vec2::Zero();
    double heading = 0.0;
    l.read("id", lm.id);
    l.read("position", p);
    l.read("heading", heading);
    lm.pose = Pose(p, heading);
    landmarks.push_back(lm);
  });
  if (w.array("landmarks") != nullptr) world.landmarks = std::move(landmarks);
  w.finish();

  auto inside = [&](const Vec2& p) { return (p.array() >= 0.0).all() && (p.array() <= world.extent).all(); };
  for (const auto& t : world.targets) {
    if (!inside(t.position)) bad("world.targets", "target " + std::to_string(t.id) + " lies outside the site");
  }
  for (const auto& d : world.distractors) {
    if (!inside(d.position)) bad("world.distractors", "distractor outside the site");
  }
  std::set<int> ids;
  for (const auto& l : world.landmarks) {
    if (!ids.insert(l.id).second) bad("world.landmarks", "duplicate landmark id " + std::to_string(l.id));
  }
}

void check_probability(double p, const std::string& where) {
  if (!(p >= 0.0 && p <= 1.0)) bad(where, "must lie in [0, 1]");
}

Scenario build(const toml::table& root) {
  Scenario sc;
  MissionConfig& m = sc.mission;
  Section top(&root, "");
  top.read("name", sc.name);
  std::string modality = to_string(m.modality);
  top.read("modality", modality);
  try {
    m.modality = modality_from_string(modality);
  } catch (const Error&) {
    bad("modality", "unknown modality '" + modality + "'");
  }
  top.read("max_steps", m.max_steps);
  if (m.max_steps < 0) bad("max_steps", "must be >= 0");

  read_world(top.sub("world"), m.world);

  Section h = top.sub("human");
  h.read("enabled", m.human.enabled);
  h.read("rover_fp", m.human.rover_fp);
  h.read("drone_fp", m.human.drone_fp);
  h.read("cadence", m.human.cadence);
  h.read("fire_probability", m.human.fire_probability);
  h.read("assumed_rover_fp", m.human.assumed_rover_fp);
  h.read("assumed_drone_fp", m.human.assumed_drone_fp);
  h.read("phantom_fraction", m.human.phantom_fraction);
  h.read("landmark_range", m.human.landmark_range);
  h.finish();
  check_probability(m.human.rover_fp, "human.rover_fp");
  check_probability(m.human.drone_fp, "human.drone_fp");
  check_probability(m.human.fire_probability, "human.fire_probability");
  check_probability(m.human.phantom_fraction, "human.phantom_fraction");
  check_probability(m.human.assumed_fp_rover(), "human.assumed_rover_fp");
  check_probability(m.human.assumed_fp_drone(), "human.assumed_drone_fp");
  if (m.human.cadence < 1) bad("human.cadence", "must be >= 1");

  Section p = top.sub("prior");
  std::string layout = to_string(m.prior.layout);
  p.read("layout", layout);
  m.prior.layout = prior_layout_from_string(layout);
  p.read("components", m.prior.components);
  p.read("clusters", m.prior.clusters);
  p.read("min_sigma", m.prior.min_sigma);
  p.read("max_sigma", m.prior.max_sigma);
  p.read("cluster_radius", m.prior.cluster_radius);
  p.read("truth_offset", m.prior.truth_offset);
  p.read("decoy_distance", m.prior.decoy_distance);
  p.finish();
  if (m.prior.components < 1) bad("prior.components", "must be >= 1");
  if (m.prior.clusters < 1) bad("prior.clusters", "must be >= 1");
  if (!(m.prior.min_sigma > 0.0) || m.prior.max_sigma < m.prior.min_sigma) bad("prior", "need 0 < min_sigma <= max_sigma");

  Section s = top.sub("sensors");
  s.read("detector", m.geometry.detector);
  s.read("nav_camera", m.geometry.nav_camera);
  s.read("drone_imager", m.geometry.drone_imager);
  s.finish();

  Section sp = top.sub("spatial");
  sp.read("near_gain", m.spatial.near_gain);
  sp.read("far_gain_increment", m.spatial.far_gain_increment);
  sp.read("far_bias", m.spatial.far_bias);
  sp.read("next_to_radius", m.spatial.next_to_radius);
  sp.read("visible_range", m.spatial.visible_range);
  sp.read("fov_sharpness", m.spatial.fov_sharpness);
  sp.finish();
  if (!(m.spatial.near_gain > 0.0) || !(m.spatial.fov_sharpness > 0.0)) bad("spatial", "gains must be positive");

  Section a = top.sub("association");
  a.read("dictionary_size", m.association.dictionary_size);
  a.read("compression_cap", m.association.compression_cap);
  a.finish();
  if (m.association.dictionary_size < 0) bad("association.dictionary_size", "must be >= 0");
  if (m.association.compression_cap < 0) bad("association.compression_cap", "must be >= 0");

  Section f = top.sub("fusion");
  FusionConfig& fc = m.association.fusion;
  f.read("surprise_threshold", fc.surprise_threshold);
  f.read("routing_samples", fc.routing_samples);
  f.read("samples_per_component", fc.samples_per_component);
  f.read("max_vb_iterations", fc.max_vb_iterations);
  f.read("vb_tolerance", fc.vb_tolerance);
  f.read("min_effective_samples", fc.min_effective_samples);
  f.finish();
  if (fc.routing_samples < 1 || fc.samples_per_component < 1 || fc.max_vb_iterations < 1) bad("fusion", "sample and iteration counts must be >= 1");

  Section mi = top.sub("mission");
  mi.read("lane_spacing", m.lane_spacing);
  mi.read("drone_speed", m.drone_speed);
  mi.read("detector_samples", m.detector_samples);
  mi.read("activity_sigmas", m.activity_sigmas);
  mi.read("detection_variance", m.detection_variance);
  mi.finish();
  if (!(m.lane_spacing > 0.0) || !(m.drone_speed >= 0.0)) bad("mission", "lane_spacing must be positive and drone_speed nonnegative");
  if (m.detector_samples < 1) bad("mission.detector_samples", "must be >= 1");
  if (!(m.detection_variance > 0.0)) bad("mission.detection_variance", "must be positive");

  top.finish();
  return sc;
}

}  // namespace

Scenario parse_scenario(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "scenario " << source << ":" << e.source().begin.line << ": " << e.description();
    fail(ErrorCode::kConfig, msg.str());
  }
  return build(root);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfig, "cannot read scenario file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path.string());
}

Scenario builtin_scenario(std::string_view name) {
  Scenario sc;
  sc.name = std::string(name);
  if (name == "default") return sc;
  if (name == "challenging") {
    sc.mission.prior.layout = PriorLayout::kChallenging;
    return sc;
  }
  fail(ErrorCode::kConfig, "unknown built-in scenario '" + std::string(name) + "'");
}

}  // namespace psda
