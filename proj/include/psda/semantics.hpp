#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "psda/gaussmix.hpp"

namespace psda {

using Vec2 = Eigen::Vector2d;

/// Planar pose; heading is kept in (-pi, pi].
struct Pose {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;

  Pose() = default;
  Pose(Vec2 p, double h);
  Eigen::Matrix2d rotation() const;
  /// World point -> frame coordinates (x ahead, y left).
  Vec2 to_local(const Vec2& world) const;
  Vec2 to_world(const Vec2& local) const;
};

double wrap_angle(double a);

/**
 * Softmax likelihood p(D = label | x), optionally multimodal: several softmax
 * classes may share one semantic label, in which case the label probability is
 * the sum over its classes.
 */
class SoftmaxModel {
 public:
  /// weights: one row per class; class_label[c] indexes into labels.
  SoftmaxModel(Mat weights, Vec biases, std::vector<std::string> labels, std::vector<int> class_label);
  /// One class per label.
  SoftmaxModel(Mat weights, Vec biases, std::vector<std::string> labels);

  int dim() const { return static_cast<int>(weights_.cols()); }
  int label_count() const { return static_cast<int>(labels_.size()); }
  int class_count() const { return static_cast<int>(weights_.rows()); }
  const Mat& weights() const { return weights_; }
  const Vec& biases() const { return biases_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<int>& class_labels() const { return class_label_; }
  bool has_label(std::string_view name) const;
  int label_index(std::string_view name) const;

  double probability(int label, const Eigen::Ref<const Vec>& x) const;
  double probability(std::string_view label, const Eigen::Ref<const Vec>& x) const;
  /// All label probabilities at x.
  Vec label_probabilities(const Eigen::Ref<const Vec>& x) const;
  /// p(label | x) at every column of xs.
  Vec probability_columns(int label, const Mat& xs) const;

  /// The same likelihood expressed in world coordinates for a 2-D frame at pose:
  /// w' = R w, b' = b - w'^T t.
  SoftmaxModel transformed(const Pose& pose) const;

  /// Sub-model restricted to the classes of one label (used to build
  /// per-class Gaussian approximations of an MMS label).
  std::vector<int> classes_of(int label) const;

 private:
  Mat weights_;
  Vec biases_;
  std::vector<std::string> labels_;
  std::vector<int> class_label_;
};

enum class Polarity { kPositive, kNegative };
enum class Mineral { kCalcite, kPyroxene };
enum class FrameKind { kRover, kLandmark, kDroneFov };
enum class ObservationType { kRangeBearing, kInView };

struct ObservationFrame {
  FrameKind kind = FrameKind::kRover;
  int landmark_id = -1;
};

/// "(Existence) (Object type) is (Direction) (FOR)" template datum.
struct SemanticObservation {
  Polarity polarity = Polarity::kPositive;
  Mineral mineral = Mineral::kCalcite;
  std::string label;
  ObservationFrame frame;
  int k = 0;
};

std::string to_string(Polarity p);
std::string to_string(Mineral m);
std::string to_string(FrameKind f);
Polarity polarity_from_string(std::string_view s);
Mineral mineral_from_string(std::string_view s);
FrameKind frame_kind_from_string(std::string_view s);

namespace labels {
inline constexpr std::string_view kNextTo = "next_to";
inline constexpr std::string_view kNoneVisible = "none_visible";
inline constexpr std::string_view kInView = "in_view";
inline constexpr std::string_view kNotInView = "not_in_view";
inline constexpr std::string_view kDetection = "detection";
inline constexpr std::string_view kNoDetection = "no_detection";
}  // namespace labels

/// The range-bearing dictionary in model label order (H = 10).
const std::vector<std::string>& range_bearing_dictionary();
/// Labels of the range-bearing dictionary that describe a spatial location (all but none_visible).
const std::vector<std::string>& spatial_labels();

/// Canonical range-bearing geometry. Radial bands: next_to inside next_to_radius,
/// near out to far_gain_increment / -far_bias boundary, far out to visible_range,
/// none_visible beyond.
struct SpatialModelConfig {
  double near_gain = 1.2;           // 1/m
  double far_gain_increment = 0.3;  // 1/m, added to near_gain for far classes
  double far_bias = -3.0;
  double next_to_radius = 2.0;  // m
  double visible_range = 20.0;  // m
  double fov_sharpness = 5.0;   // 1/m, polygon edge classes
};

/// Convex polygon in frame coordinates, counter-clockwise.
using Polygon = std::vector<Vec2>;

struct SensorGeometry {
  /// Detector footprint, rover frame.
  Polygon detector = {{0.0, -1.5}, {3.0, -1.5}, {3.0, 1.5}, {0.0, 1.5}};
  /// Navigation camera view (15 m^2 trapezoid), rover frame.
  Polygon nav_camera = {{0.5, -1.0}, {5.5, -2.0}, {5.5, 2.0}, {0.5, 1.0}};
  /// Drone imager footprint, centred under the drone.
  Polygon drone_imager = {{-10.0, -10.0}, {10.0, -10.0}, {10.0, 10.0}, {-10.0, 10.0}};
};

double polygon_area(const Polygon& poly);
bool polygon_contains(const Polygon& poly, const Vec2& p);
Vec2 polygon_centroid(const Polygon& poly);

/// Range-bearing MMS model (H = 10) in canonical frame coordinates.
SoftmaxModel canonical_range_bearing_model(const SpatialModelConfig& cfg = {});

/// Two-label polygon MMS: inside class with zero weights plus one half-plane
/// class per edge with the given sharpness. Labels are {inside, outside}.
SoftmaxModel polygon_model(const Polygon& poly, double sharpness, std::string inside_label, std::string outside_label);

/// Frame-relative spatial model in world coordinates. For kInView the region is
/// the given polygon (frame coordinates).
SoftmaxModel build_spatial_model(const Pose& frame_pose, ObservationType type, const SpatialModelConfig& cfg = {},
                                 const Polygon& view = SensorGeometry{}.nav_camera);

/// Detection / no_detection model over the detector footprint ahead of the rover.
SoftmaxModel detector_likelihood(const Pose& rover_pose, const SensorGeometry& geometry = {},
                                 const SpatialModelConfig& cfg = {});

struct Landmark {
  int id = 0;
  Pose pose;
};

/// Everything needed to turn a template datum into a likelihood at time k.
struct FrameContext {
  Pose rover;
  Pose drone;
  std::vector<Landmark> landmarks;
  SensorGeometry geometry;
  SpatialModelConfig spatial;
};

struct ObservationLikelihood {
  SoftmaxModel model;
  int label = 0;
  ObservationType type = ObservationType::kRangeBearing;
};

/// Throws kInvalidArgument when the label does not belong to the frame's dictionary
/// or the polarity/label pairing is not allowed.
void validate_observation(const SemanticObservation& obs);

ObservationLikelihood observation_likelihood(const SemanticObservation& obs, const FrameContext& ctx);

struct TargetInfo {
  int id = 0;
  Mineral mineral = Mineral::kCalcite;
  bool detected = false;
};

/// Undetected targets whose mineral matches a positive datum.
std::vector<int> resolve_candidates(const SemanticObservation& obs, const std::vector<TargetInfo>& targets);

}  // namespace psda
