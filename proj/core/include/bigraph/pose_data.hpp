#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bigraph/rng.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

// 18-joint skeleton in openpose COCO order; coordinates are normalized to
// [0,1]^2 with y pointing down.
enum JointId : int {
  kNose = 0,
  kNeck = 1,
  kRShoulder = 2,
  kRElbow = 3,
  kRWrist = 4,
  kLShoulder = 5,
  kLElbow = 6,
  kLWrist = 7,
  kRHip = 8,
  kRKnee = 9,
  kRAnkle = 10,
  kLHip = 11,
  kLKnee = 12,
  kLAnkle = 13,
  kREye = 14,
  kLEye = 15,
  kREar = 16,
  kLEar = 17,
};

constexpr int kNumJoints = 18;
constexpr int kNumBones = 17;

extern const std::array<std::pair<int, int>, kNumBones> kBones;
extern const std::array<const char*, kNumJoints> kJointNames;

struct Joint {
  double x = 0.0;
  double y = 0.0;
};

struct Skeleton {
  std::array<Joint, kNumJoints> joints;
};

// Sampling ranges for the articulated figure. All "±" fields are half-widths
// around the canonical pose; zeroing every range yields the exact T-pose.
struct PoseConstraints {
  double center_x = 0.5, center_x_range = 0.08;
  double center_y = 0.62, center_y_range = 0.04;
  double scale = 1.0, scale_range = 0.1;
  double lean_range = 0.12;       // torso tilt
  double arm_angle_range = 0.8;   // shoulder swing from horizontal
  double elbow_bend_range = 0.8;
  double thigh_spread = 0.06, thigh_range = 0.35;  // from vertical
  double knee_bend_range = 0.45;
  double head_tilt_range = 0.15;

  static PoseConstraints zeroed() {
    PoseConstraints c;
    c.center_x_range = c.center_y_range = c.scale_range = 0;
    c.lean_range = c.arm_angle_range = c.elbow_bend_range = 0;
    c.thigh_range = c.knee_bend_range = c.head_tilt_range = 0;
    return c;
  }
};

// Segment lengths in normalized units at scale 1.
struct FigureProportions {
  double torso = 0.21;
  double shoulder_off = 0.065;
  double hip_off = 0.045;
  double upper_arm = 0.10;
  double forearm = 0.095;
  double thigh = 0.14;
  double shin = 0.13;
  double neck_head = 0.065;
  double eye_dx = 0.021, eye_dy = 0.018;
  double ear_dx = 0.042, ear_dy = 0.006;
  double head_radius = 0.042;
};

const FigureProportions& figure_proportions();

// Canonical pose: upright torso, arms straight out, slight leg spread.
Skeleton t_pose(double cx, double cy, double scale, double thigh_spread);

// Kinematically plausible skeleton with every joint inside [0,1]^2.
// Unsatisfiable constraints (figure cannot fit the frame) raise ConfigError.
Skeleton sample_pose(Rng& rng, const PoseConstraints& constraints = PoseConstraints());

void validate_constraints(const PoseConstraints& c);

// Per-identity appearance: one color per bone plus a head color, and a body
// width factor scaling the capsule radius.
struct Identity {
  std::array<std::array<double, 3>, kNumBones> bone_colors{};
  std::array<double, 3> head_color{};
  double width_factor = 1.0;

  static Identity from_seed(uint64_t seed);
};

// Planar images in [0,1], row-major [c][y][x].
struct RenderResult {
  int height = 0, width = 0;
  std::vector<double> image;  // 3 channels
  std::vector<double> mask;   // 1 channel, exactly 0 or 1
};

// Anti-aliased colored capsules over neutral gray. Requires size >= 32x16.
RenderResult render_figure(const Skeleton& s, const Identity& id, int height, int width);

// Binary-disk heatmaps: channel k is 1 within `radius` pixels of joint k.
// Joints whose pixel lands outside the frame are clamped and flagged.
std::vector<double> keypoints_to_heatmaps(const Skeleton& s, int height, int width, int radius,
                                          bool* clamped = nullptr);

enum class Split { train, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

struct DatasetConfig {
  uint64_t seed = 1;
  int n_train_identities = 200;
  int n_test_identities = 50;
  int height = 64;
  int width = 32;
  int heatmap_radius = 2;
  PoseConstraints constraints{};
};

// One pose-transfer sample: two renders of the same identity at
// independently sampled poses. Images live in [-1,1]; heatmaps are 0/1.
template <typename T>
struct PoseSample {
  Tensor<T> i_a, i_b;      // [3,h,w]
  Tensor<T> p_a, p_b;      // [18,h,w]
  Tensor<T> mask_b;        // [1,h,w]
  Skeleton skeleton_a, skeleton_b;
  Identity identity;
  int64_t identity_id = 0;
  bool clamped = false;
};

struct RawSample {
  RenderResult render_a, render_b;
  std::vector<double> heat_a, heat_b;
  Skeleton skeleton_a, skeleton_b;
  Identity identity;
  int64_t identity_id = 0;
  bool clamped = false;
};

class SyntheticDataset {
 public:
  explicit SyntheticDataset(const DatasetConfig& cfg);

  const DatasetConfig& config() const { return cfg_; }
  int identity_count(Split split) const {
    return split == Split::train ? cfg_.n_train_identities : cfg_.n_test_identities;
  }

  // (seed, split, index) fully determines the sample. Identity seeds are
  // partitioned between splits.
  RawSample raw_sample(Split split, int64_t index) const;

  uint64_t identity_seed(Split split, int64_t index) const;

  template <typename T>
  PoseSample<T> sample(Split split, int64_t index) const {
    RawSample raw = raw_sample(split, index);
    PoseSample<T> s;
    int h = cfg_.height, w = cfg_.width;
    auto to_signed = [&](const std::vector<double>& img) {
      std::vector<T> v(img.size());
      for (size_t i = 0; i < img.size(); ++i) v[i] = static_cast<T>(2.0 * img[i] - 1.0);
      return Tensor<T>::from_values({3, h, w}, std::move(v));
    };
    auto to_t = [&](const std::vector<double>& data, Shape shape) {
      std::vector<T> v(data.size());
      for (size_t i = 0; i < data.size(); ++i) v[i] = static_cast<T>(data[i]);
      return Tensor<T>::from_values(std::move(shape), std::move(v));
    };
    s.i_a = to_signed(raw.render_a.image);
    s.i_b = to_signed(raw.render_b.image);
    s.p_a = to_t(raw.heat_a, {kNumJoints, h, w});
    s.p_b = to_t(raw.heat_b, {kNumJoints, h, w});
    s.mask_b = to_t(raw.render_b.mask, {1, h, w});
    s.skeleton_a = raw.skeleton_a;
    s.skeleton_b = raw.skeleton_b;
    s.identity = raw.identity;
    s.identity_id = raw.identity_id;
    s.clamped = raw.clamped;
    return s;
  }

 private:
  DatasetConfig cfg_;
};

}  // namespace bigraph
