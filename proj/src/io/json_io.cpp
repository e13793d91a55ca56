#include "psda/json_io.hpp"

#include "psda/error.hpp"

namespace psda::io {

namespace {

[[noreturn]] void bad(const std::string& what) { fail(ErrorCode::kInvalidArgument, "json: " + what); }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) bad("expected an object");
  auto it = j.find(key);
  if (it == j.end()) bad(std::string("missing field '") + key + "'");
  return *it;
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(std::string("field '") + key + "' has the wrong type");
  }
}

Json vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Json mat(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
  return rows;
}

Vec vec_from(const Json& j) {
  if (!j.is_array()) bad("expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad("expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Mat mat_from(const Json& j, Eigen::Index n) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) bad("covariance has the wrong shape");
  Mat m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vec row = vec_from(j[static_cast<std::size_t>(r)]);
    if (row.size() != n) bad("covariance has the wrong shape");
    m.row(r) = row.transpose();
  }
  return m;
}

Json point(const Vec2& p) { return Json::array({p.x(), p.y()}); }

Vec2 point_from(const Json& j) {
  const Vec v = vec_from(j);
  if (v.size() != 2) bad("expected a 2-D point");
  return Vec2(v[0], v[1]);
}

}  // namespace

Json parse(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    bad(e.what());
  }
}

Json to_json(const GaussianMixture& gm) {
  Json means = Json::array(), covs = Json::array();
  for (const auto& c : gm.components()) {
    means.push_back(vec(c.mean()));
    covs.push_back(mat(c.covariance()));
  }
  return {{"weights", gm.weights()}, {"means", std::move(means)}, {"covariances", std::move(covs)}};
}

GaussianMixture gm_from_json(const Json& j) {
  const Json& w = field(j, "weights");
  const Json& m = field(j, "means");
  const Json& c = field(j, "covariances");
  if (!w.is_array() || !m.is_array() || !c.is_array()) bad("mixture fields must be arrays");
  if (w.empty() || w.size() != m.size() || w.size() != c.size()) bad("mixture arrays must be non-empty and equally long");
  const Vec weights = vec_from(w);
  std::vector<Gaussian> comps;
  for (std::size_t i = 0; i < m.size(); ++i) {
    Vec mean = vec_from(m[i]);
    if (mean.size() == 0) bad("empty mean");
    comps.emplace_back(mean, mat_from(c[i], mean.size()));
  }
  return GaussianMixture(std::vector<double>(weights.data(), weights.data() + weights.size()), std::move(comps));
}

Json to_json(const SemanticObservation& obs) {
  Json frame = {{"kind", to_string(obs.frame.kind)}};
  if (obs.frame.kind == FrameKind::kLandmark) frame["landmark_id"] = obs.frame.landmark_id;
  return {{"polarity", to_string(obs.polarity)},
          {"mineral", to_string(obs.mineral)},
          {"label", obs.label},
          {"frame", std::move(frame)},
          {"k", obs.k}};
}

SemanticObservation observation_from_json(const Json& j) {
  SemanticObservation obs;
  obs.polarity = polarity_from_string(get<std::string>(j, "polarity"));
  obs.mineral = mineral_from_string(get<std::string>(j, "mineral"));
  obs.label = get<std::string>(j, "label");
  const Json& frame = field(j, "frame");
  obs.frame.kind = frame_kind_from_string(get<std::string>(frame, "kind"));
  if (obs.frame.kind == FrameKind::kLandmark) obs.frame.landmark_id = get<int>(frame, "landmark_id");
  if (j.contains("k")) obs.k = get<int>(j, "k");
  return obs;
}

Json to_json(const AssociationResult& r) {
  return {{"gamma", r.gamma}, {"candidates", r.candidate_ids}, {"normalizers", r.normalizers}};
}

Json to_json(const FusionResult& r) {
  Json methods = Json::array();
  for (auto m : r.component_methods) methods.push_back(to_string(m));
  return {{"posterior", to_json(r.posterior)},
          {"normalizer", r.normalizer},
          {"component_normalizers", r.component_normalizers},
          {"component_methods", std::move(methods)},
          {"method", to_string(r.method)}};
}

Json to_json(const ObservationEvent& ev) {
  return {{"observation", to_json(ev.obs)}, {"source", ev.source},       {"erroneous", ev.erroneous},
          {"candidates", ev.candidates},    {"gamma", ev.gamma},         {"normalizers", ev.normalizers},
          {"discarded", ev.discarded}};
}

ObservationEvent event_from_json(const Json& j) {
  ObservationEvent ev;
  ev.obs = observation_from_json(field(j, "observation"));
  if (j.contains("source")) ev.source = get<std::string>(j, "source");
  if (j.contains("erroneous")) ev.erroneous = get<bool>(j, "erroneous");
  if (j.contains("candidates")) ev.candidates = get<std::vector<int>>(j, "candidates");
  if (j.contains("gamma")) ev.gamma = get<std::vector<double>>(j, "gamma");
  if (j.contains("normalizers")) ev.normalizers = get<std::vector<double>>(j, "normalizers");
  if (j.contains("discarded")) ev.discarded = get<bool>(j, "discarded");
  return ev;
}

Json to_json(const MissionRecord& rec) {
  Json gamma0 = Json::array();
  for (const auto& [k, g] : rec.gamma0) gamma0.push_back({{"k", k}, {"gamma0", g}});
  Json obs = Json::array();
  for (const auto& ev : rec.observations) obs.push_back(to_json(ev));
  Json track = Json::array();
  for (const auto& p : rec.rover_track) track.push_back(point(p));
  return {{"seed", rec.seed},
          {"modality", to_string(rec.modality)},
          {"success", rec.success},
          {"detected_count", rec.detected_count},
          {"distance", rec.distance},
          {"steps", rec.steps},
          {"termination", rec.termination},
          {"delta", rec.delta},
          {"detection_step", rec.detection_step},
          {"gamma0", std::move(gamma0)},
          {"observations", std::move(obs)},
          {"replans", rec.replans},
          {"rover_track", std::move(track)}};
}

MissionRecord record_from_json(const Json& j) {
  MissionRecord rec;
  rec.seed = get<std::uint64_t>(j, "seed");
  rec.modality = modality_from_string(get<std::string>(j, "modality"));
  rec.success = get<bool>(j, "success");
  rec.detected_count = get<int>(j, "detected_count");
  rec.distance = get<double>(j, "distance");
  rec.steps = get<int>(j, "steps");
  rec.termination = get<std::string>(j, "termination");
  rec.delta = get<std::vector<std::vector<double>>>(j, "delta");
  rec.detection_step = get<std::vector<int>>(j, "detection_step");
  for (const auto& g : field(j, "gamma0")) rec.gamma0.emplace_back(get<int>(g, "k"), get<double>(g, "gamma0"));
  for (const auto& o : field(j, "observations")) rec.observations.push_back(event_from_json(o));
  rec.replans = get<std::vector<int>>(j, "replans");
  for (const auto& p : field(j, "rover_track")) rec.rover_track.push_back(point_from(p));
  return rec;
}

}  // namespace psda::io
