#include "psda/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "psda/error.hpp"

namespace psda {

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

Pose::Pose(Vec2 p, double h) : position(std::move(p)), heading(wrap_angle(h)) {}

Eigen::Matrix2d Pose::rotation() const {
  const double c = std::cos(heading), s = std::sin(heading);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Vec2 Pose::to_local(const Vec2& world) const { return rotation().transpose() * (world - position); }
Vec2 Pose::to_world(const Vec2& local) const { return rotation() * local + position; }

SoftmaxModel::SoftmaxModel(Mat weights, Vec biases, std::vector<std::string> labels, std::vector<int> class_label)
    : weights_(std::move(weights)), biases_(std::move(biases)), labels_(std::move(labels)), class_label_(std::move(class_label)) {
  if (labels_.size() < 2) fail(ErrorCode::kInvalidArgument, "softmax: need at least two labels");
  if (weights_.rows() != biases_.size() || static_cast<std::size_t>(weights_.rows()) != class_label_.size()) {
    fail(ErrorCode::kInvalidArgument, "softmax: class count mismatch");
  }
  std::vector<bool> used(labels_.size(), false);
  for (int l : class_label_) {
    if (l < 0 || l >= static_cast<int>(labels_.size())) fail(ErrorCode::kInvalidArgument, "softmax: class maps to unknown label");
    used[static_cast<std::size_t>(l)] = true;
  }
  if (std::find(used.begin(), used.end(), false) != used.end()) fail(ErrorCode::kInvalidArgument, "softmax: label without classes");
  if (!weights_.allFinite() || !biases_.allFinite()) fail(ErrorCode::kNumeric, "softmax: non-finite parameters");
}

SoftmaxModel::SoftmaxModel(Mat weights, Vec biases, std::vector<std::string> labels)
    : SoftmaxModel(std::move(weights), std::move(biases), labels, [&] {
        std::vector<int> m(labels.size());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<int>(i);
        return m;
      }()) {}

bool SoftmaxModel::has_label(std::string_view name) const {
  return std::find(labels_.begin(), labels_.end(), name) != labels_.end();
}

int SoftmaxModel::label_index(std::string_view name) const {
  auto it = std::find(labels_.begin(), labels_.end(), name);
  if (it == labels_.end()) fail(ErrorCode::kNotFound, "softmax: unknown label '" + std::string(name) + "'");
  return static_cast<int>(it - labels_.begin());
}

Vec SoftmaxModel::label_probabilities(const Eigen::Ref<const Vec>& x) const {
  if (x.size() != dim()) fail(ErrorCode::kInvalidArgument, "softmax: dimension mismatch");
  Vec y = weights_ * x + biases_;
  const double top = y.maxCoeff();
  Vec e = (y.array() - top).exp();
  const double z = e.sum();
  Vec out = Vec::Zero(label_count());
  for (int c = 0; c < class_count(); ++c) out[class_label_[static_cast<std::size_t>(c)]] += e[c];
  return out / z;
}

double SoftmaxModel::probability(int label, const Eigen::Ref<const Vec>& x) const {
  if (label < 0 || label >= label_count()) fail(ErrorCode::kNotFound, "softmax: label index out of range");
  if (x.size() != dim()) fail(ErrorCode::kInvalidArgument, "softmax: dimension mismatch");
  Vec y = weights_ * x + biases_;
  const double top = y.maxCoeff();
  double num = 0.0, den = 0.0;
  for (int c = 0; c < class_count(); ++c) {
    const double e = std::exp(y[c] - top);
    den += e;
    if (class_label_[static_cast<std::size_t>(c)] == label) num += e;
  }
  return num / den;
}

double SoftmaxModel::probability(std::string_view label, const Eigen::Ref<const Vec>& x) const {
  return probability(label_index(label), x);
}

Vec SoftmaxModel::probability_columns(int label, const Mat& xs) const {
  if (label < 0 || label >= label_count()) fail(ErrorCode::kNotFound, "softmax: label index out of range");
  if (xs.rows() != dim()) fail(ErrorCode::kInvalidArgument, "softmax: dimension mismatch");
  Mat y = weights_ * xs;
  y.colwise() += biases_;
  Eigen::RowVectorXd top = y.colwise().maxCoeff();
  Mat e = (y.rowwise() - top).array().exp();
  Eigen::RowVectorXd den = e.colwise().sum();
  Eigen::RowVectorXd num = Eigen::RowVectorXd::Zero(xs.cols());
  for (int c = 0; c < class_count(); ++c) {
    if (class_label_[static_cast<std::size_t>(c)] == label) num += e.row(c);
  }
  return num.cwiseQuotient(den).transpose();
}

SoftmaxModel SoftmaxModel::transformed(const Pose& pose) const {
  if (dim() != 2) fail(ErrorCode::kInvalidArgument, "softmax: rigid transform needs a 2-D model");
  Mat w = weights_ * pose.rotation().transpose();  // rows: (R w_j)^T
  Vec b = biases_ - w * pose.position;
  return SoftmaxModel(std::move(w), std::move(b), labels_, class_label_);
}

std::vector<int> SoftmaxModel::classes_of(int label) const {
  std::vector<int> out;
  for (int c = 0; c < class_count(); ++c) {
    if (class_label_[static_cast<std::size_t>(c)] == label) out.push_back(c);
  }
  return out;
}

std::string to_string(Polarity p) { return p == Polarity::kPositive ? "positive" : "negative"; }
std::string to_string(Mineral m) { return m == Mineral::kCalcite ? "calcite" : "pyroxene"; }
std::string to_string(FrameKind f) {
  switch (f) {
    case FrameKind::kRover: return "rover";
    case FrameKind::kLandmark: return "landmark";
    case FrameKind::kDroneFov: return "drone_fov";
  }
  return "rover";
}

Polarity polarity_from_string(std::string_view s) {
  if (s == "positive") return Polarity::kPositive;
  if (s == "negative") return Polarity::kNegative;
  fail(ErrorCode::kInvalidArgument, "unknown polarity '" + std::string(s) + "'");
}

Mineral mineral_from_string(std::string_view s) {
  if (s == "calcite") return Mineral::kCalcite;
  if (s == "pyroxene") return Mineral::kPyroxene;
  fail(ErrorCode::kInvalidArgument, "unknown mineral '" + std::string(s) + "'");
}

FrameKind frame_kind_from_string(std::string_view s) {
  if (s == "rover") return FrameKind::kRover;
  if (s == "landmark") return FrameKind::kLandmark;
  if (s == "drone_fov") return FrameKind::kDroneFov;
  fail(ErrorCode::kInvalidArgument, "unknown frame kind '" + std::string(s) + "'");
}

const std::vector<std::string>& range_bearing_dictionary() {
  static const std::vector<std::string> dict = {"near_ahead", "near_behind", "near_left", "near_right",
                                                "far_ahead",  "far_behind",  "far_left",  "far_right",
                                                "next_to",    "none_visible"};
  return dict;
}

const std::vector<std::string>& spatial_labels() {
  static const std::vector<std::string> labels(range_bearing_dictionary().begin(), range_bearing_dictionary().end() - 1);
  return labels;
}

double polygon_area(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

bool polygon_contains(const Polygon& poly, const Vec2& p) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 e = poly[(i + 1) % poly.size()] - poly[i];
    const Vec2 d = p - poly[i];
    if (e.x() * d.y() - e.y() * d.x() < 0.0) return false;
  }
  return true;
}

Vec2 polygon_centroid(const Polygon& poly) {
  const double a = polygon_area(poly);
  Vec2 c = Vec2::Zero();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    const double cross = p.x() * q.y() - q.x() * p.y();
    c += (p + q) * cross;
  }
  return c / (6.0 * a);
}

SoftmaxModel canonical_range_bearing_model(const SpatialModelConfig& cfg) {
  const Vec2 dirs[4] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};  // ahead, behind, left, right
  const double far_gain = cfg.near_gain + cfg.far_gain_increment;
  const double beyond_gain = far_gain + cfg.far_gain_increment;
  const double beyond_bias = cfg.far_bias - cfg.far_gain_increment * cfg.visible_range;

  Mat w = Mat::Zero(13, 2);
  Vec b = Vec::Zero(13);
  std::vector<int> cls(13);
  for (int d = 0; d < 4; ++d) {
    w.row(d) = cfg.near_gain * dirs[d].transpose();
    cls[static_cast<std::size_t>(d)] = d;
    w.row(4 + d) = far_gain * dirs[d].transpose();
    b[4 + d] = cfg.far_bias;
    cls[static_cast<std::size_t>(4 + d)] = 4 + d;
    w.row(9 + d) = beyond_gain * dirs[d].transpose();
    b[9 + d] = beyond_bias;
    cls[static_cast<std::size_t>(9 + d)] = 9;
  }
  b[8] = cfg.near_gain * cfg.next_to_radius;
  cls[8] = 8;
  return SoftmaxModel(std::move(w), std::move(b), range_bearing_dictionary(), std::move(cls));
}

SoftmaxModel polygon_model(const Polygon& poly, double sharpness, std::string inside_label, std::string outside_label) {
  if (poly.size() < 3) fail(ErrorCode::kInvalidArgument, "polygon model: need at least 3 vertices");
  if (polygon_area(poly) <= 0.0) fail(ErrorCode::kInvalidArgument, "polygon model: vertices must be counter-clockwise");
  const auto edges = static_cast<Eigen::Index>(poly.size());
  Mat w = Mat::Zero(edges + 1, 2);
  Vec b = Vec::Zero(edges + 1);
  std::vector<int> cls(static_cast<std::size_t>(edges + 1), 1);
  cls[0] = 0;
  for (Eigen::Index i = 0; i < edges; ++i) {
    const Vec2& p = poly[static_cast<std::size_t>(i)];
    const Vec2& q = poly[static_cast<std::size_t>((i + 1) % edges)];
    Vec2 e = q - p;
    Vec2 outward(e.y(), -e.x());
    outward.normalize();
    w.row(i + 1) = sharpness * outward.transpose();
    b[i + 1] = -sharpness * outward.dot(p);
  }
  return SoftmaxModel(std::move(w), std::move(b), {std::move(inside_label), std::move(outside_label)}, std::move(cls));
}

SoftmaxModel build_spatial_model(const Pose& frame_pose, ObservationType type, const SpatialModelConfig& cfg, const Polygon& view) {
  if (type == ObservationType::kRangeBearing) return canonical_range_bearing_model(cfg).transformed(frame_pose);
  return polygon_model(view, cfg.fov_sharpness, std::string(labels::kInView), std::string(labels::kNotInView)).transformed(frame_pose);
}

SoftmaxModel detector_likelihood(const Pose& rover_pose, const SensorGeometry& geometry, const SpatialModelConfig& cfg) {
  return polygon_model(geometry.detector, cfg.fov_sharpness, std::string(labels::kDetection), std::string(labels::kNoDetection))
      .transformed(rover_pose);
}

namespace {

bool is_spatial(std::string_view label) {
  const auto& s = spatial_labels();
  return std::find(s.begin(), s.end(), label) != s.end();
}

bool is_view_label(std::string_view label) { return label == labels::kInView || label == labels::kNoneVisible; }

}  // namespace

void validate_observation(const SemanticObservation& obs) {
  const std::string& l = obs.label;
  if (obs.polarity == Polarity::kNegative) {
    if (!is_view_label(l)) fail(ErrorCode::kInvalidArgument, "observation: negative data must use in_view or none_visible");
    if (obs.frame.kind == FrameKind::kLandmark) fail(ErrorCode::kInvalidArgument, "observation: negative data cannot use a landmark frame");
    return;
  }
  switch (obs.frame.kind) {
    case FrameKind::kRover:
      if (!is_spatial(l) && l != labels::kInView) fail(ErrorCode::kInvalidArgument, "observation: label '" + l + "' not in rover dictionary");
      break;
    case FrameKind::kLandmark:
      if (!is_spatial(l)) fail(ErrorCode::kInvalidArgument, "observation: label '" + l + "' not in landmark dictionary");
      if (obs.frame.landmark_id < 0) fail(ErrorCode::kInvalidArgument, "observation: landmark frame without id");
      break;
    case FrameKind::kDroneFov:
      if (l != labels::kInView) fail(ErrorCode::kInvalidArgument, "observation: drone frame supports only in_view for positive data");
      break;
  }
}

ObservationLikelihood observation_likelihood(const SemanticObservation& obs, const FrameContext& ctx) {
  validate_observation(obs);
  const bool view_label = obs.polarity == Polarity::kNegative || obs.label == labels::kInView;
  if (view_label) {
    const bool drone = obs.frame.kind == FrameKind::kDroneFov;
    SoftmaxModel model = build_spatial_model(drone ? ctx.drone : ctx.rover, ObservationType::kInView, ctx.spatial,
                                             drone ? ctx.geometry.drone_imager : ctx.geometry.nav_camera);
    const int label = model.label_index(obs.polarity == Polarity::kNegative ? labels::kNotInView : labels::kInView);
    return {std::move(model), label, ObservationType::kInView};
  }
  Pose frame = ctx.rover;
  if (obs.frame.kind == FrameKind::kLandmark) {
    auto it = std::find_if(ctx.landmarks.begin(), ctx.landmarks.end(), [&](const Landmark& lm) { return lm.id == obs.frame.landmark_id; });
    if (it == ctx.landmarks.end()) fail(ErrorCode::kInvalidArgument, "observation: unknown landmark " + std::to_string(obs.frame.landmark_id));
    frame = it->pose;
  }
  SoftmaxModel model = build_spatial_model(frame, ObservationType::kRangeBearing, ctx.spatial);
  const int label = model.label_index(obs.label);
  return {std::move(model), label, ObservationType::kRangeBearing};
}

std::vector<int> resolve_candidates(const SemanticObservation& obs, const std::vector<TargetInfo>& targets) {
  std::vector<int> ids;
  for (const auto& t : targets) {
    if (!t.detected && t.mineral == obs.mineral) ids.push_back(t.id);
  }
  return ids;
}

}  // namespace psda
