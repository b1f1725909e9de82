#include "bigraph/pose_data.hpp"

#include <algorithm>
#include <cmath>

namespace bigraph {

const std::array<std::pair<int, int>, kNumBones> kBones = {{
    {kNeck, kNose},
    {kNose, kREye},
    {kNose, kLEye},
    {kREye, kREar},
    {kLEye, kLEar},
    {kNeck, kRShoulder},
    {kRShoulder, kRElbow},
    {kRElbow, kRWrist},
    {kNeck, kLShoulder},
    {kLShoulder, kLElbow},
    {kLElbow, kLWrist},
    {kNeck, kRHip},
    {kRHip, kRKnee},
    {kRKnee, kRAnkle},
    {kNeck, kLHip},
    {kLHip, kLKnee},
    {kLKnee, kLAnkle},
}};

const std::array<const char*, kNumJoints> kJointNames = {
    "nose",      "neck",      "r_shoulder", "r_elbow", "r_wrist", "l_shoulder",
    "l_elbow",   "l_wrist",   "r_hip",      "r_knee",  "r_ankle", "l_hip",
    "l_knee",    "l_ankle",   "r_eye",      "l_eye",   "r_ear",   "l_ear",
};

const FigureProportions& figure_proportions() {
  static const FigureProportions p;
  return p;
}

namespace {

struct PoseAngles {
  double cx = 0.5, cy = 0.62, scale = 1.0;
  double lean = 0.0;
  double arm_r = 0.0, arm_l = 0.0;        // from horizontal, positive = down
  double elbow_r = 0.0, elbow_l = 0.0;
  double thigh_r = 0.0, thigh_l = 0.0;    // from vertical, positive = outward
  double knee_r = 0.0, knee_l = 0.0;
  double head_tilt = 0.0;
};

Skeleton build_skeleton(const PoseAngles& a) {
  const FigureProportions& fp = figure_proportions();
  double s = a.scale;
  Skeleton sk;
  auto set = [&sk](int j, double x, double y) { sk.joints[static_cast<size_t>(j)] = {x, y}; };

  double axis_x = std::sin(a.lean), axis_y = -std::cos(a.lean);  // torso up direction
  double perp_x = std::cos(a.lean), perp_y = std::sin(a.lean);
  double root_x = a.cx, root_y = a.cy;
  double neck_x = root_x + s * fp.torso * axis_x;
  double neck_y = root_y + s * fp.torso * axis_y;
  set(kNeck, neck_x, neck_y);

  // right side drawn at -x, left at +x
  auto arm = [&](int sho, int elb, int wri, double side, double ang, double bend) {
    double sx = neck_x + side * s * fp.shoulder_off * perp_x;
    double sy = neck_y + side * s * fp.shoulder_off * perp_y;
    set(sho, sx, sy);
    double ex = sx + s * fp.upper_arm * side * std::cos(ang);
    double ey = sy + s * fp.upper_arm * std::sin(ang);
    set(elb, ex, ey);
    double wx = ex + s * fp.forearm * side * std::cos(ang + bend);
    double wy = ey + s * fp.forearm * std::sin(ang + bend);
    set(wri, wx, wy);
  };
  arm(kRShoulder, kRElbow, kRWrist, -1.0, a.arm_r, a.elbow_r);
  arm(kLShoulder, kLElbow, kLWrist, +1.0, a.arm_l, a.elbow_l);

  auto leg = [&](int hip, int knee, int ankle, double side, double q, double bend) {
    double hx = root_x + side * s * fp.hip_off * perp_x;
    double hy = root_y + side * s * fp.hip_off * perp_y;
    set(hip, hx, hy);
    double kx = hx + s * fp.thigh * side * std::sin(q);
    double ky = hy + s * fp.thigh * std::cos(q);
    set(knee, kx, ky);
    double ax = kx + s * fp.shin * side * std::sin(q + bend);
    double ay = ky + s * fp.shin * std::cos(q + bend);
    set(ankle, ax, ay);
  };
  leg(kRHip, kRKnee, kRAnkle, -1.0, a.thigh_r, a.knee_r);
  leg(kLHip, kLKnee, kLAnkle, +1.0, a.thigh_l, a.knee_l);

  double head_ang = a.lean + a.head_tilt;
  double nose_x = neck_x + s * fp.neck_head * std::sin(head_ang);
  double nose_y = neck_y - s * fp.neck_head * std::cos(head_ang);
  set(kNose, nose_x, nose_y);
  set(kREye, nose_x - s * fp.eye_dx, nose_y - s * fp.eye_dy);
  set(kLEye, nose_x + s * fp.eye_dx, nose_y - s * fp.eye_dy);
  set(kREar, nose_x - s * fp.ear_dx, nose_y - s * fp.ear_dy);
  set(kLEar, nose_x + s * fp.ear_dx, nose_y - s * fp.ear_dy);
  return sk;
}

}  // namespace

Skeleton t_pose(double cx, double cy, double scale, double thigh_spread) {
  PoseAngles a;
  a.cx = cx;
  a.cy = cy;
  a.scale = scale;
  a.thigh_r = thigh_spread;
  a.thigh_l = thigh_spread;
  return build_skeleton(a);
}

void validate_constraints(const PoseConstraints& c) {
  const FigureProportions& fp = figure_proportions();
  BG_CHECK_CFG(c.center_x_range >= 0 && c.center_y_range >= 0 && c.scale_range >= 0 &&
                   c.lean_range >= 0 && c.arm_angle_range >= 0 && c.elbow_bend_range >= 0 &&
                   c.thigh_range >= 0 && c.knee_bend_range >= 0 && c.head_tilt_range >= 0,
               "pose constraints: ranges must be nonnegative");
  double smin = c.scale - c.scale_range;
  double smax = c.scale + c.scale_range;
  BG_CHECK_CFG(smin > 0, "pose constraints: scale range allows nonpositive scale " << smin);

  auto sin_cap = [](double a) { return std::sin(std::min(a, 1.5707963267948966)); };
  double arm_len = fp.upper_arm + fp.forearm;
  double leg_len = fp.thigh + fp.shin;
  double up = std::max(fp.torso + fp.neck_head + std::max(fp.eye_dy, fp.ear_dy),
                       fp.torso + arm_len * sin_cap(c.arm_angle_range + c.elbow_bend_range));
  double down = leg_len + fp.hip_off * sin_cap(c.lean_range);
  double half = std::max({fp.torso * sin_cap(c.lean_range) + fp.shoulder_off + arm_len,
                          fp.hip_off + leg_len * sin_cap(c.thigh_spread + c.thigh_range),
                          fp.torso * sin_cap(c.lean_range) +
                              fp.neck_head * sin_cap(c.lean_range + c.head_tilt_range) + fp.ear_dx});
  double top = (c.center_y - c.center_y_range) - smax * up;
  double bottom = (c.center_y + c.center_y_range) + smax * down;
  double left = (c.center_x - c.center_x_range) - smax * half;
  double right = (c.center_x + c.center_x_range) + smax * half;
  BG_CHECK_CFG(top >= 0.0 && bottom <= 1.0 && left >= 0.0 && right <= 1.0,
               "pose constraints: figure can leave the unit frame (extents x ["
                   << left << "," << right << "], y [" << top << "," << bottom << "])");
}

Skeleton sample_pose(Rng& rng, const PoseConstraints& c) {
  validate_constraints(c);
  auto dev = [&rng](double range) { return rng.uniform(-1.0, 1.0) * range; };
  PoseAngles a;
  a.cx = c.center_x + dev(c.center_x_range);
  a.cy = c.center_y + dev(c.center_y_range);
  a.scale = c.scale + dev(c.scale_range);
  a.lean = dev(c.lean_range);
  a.arm_r = dev(c.arm_angle_range);
  a.arm_l = dev(c.arm_angle_range);
  a.elbow_r = dev(c.elbow_bend_range);
  a.elbow_l = dev(c.elbow_bend_range);
  a.thigh_r = c.thigh_spread + dev(c.thigh_range);
  a.thigh_l = c.thigh_spread + dev(c.thigh_range);
  a.knee_r = dev(c.knee_bend_range);
  a.knee_l = dev(c.knee_bend_range);
  a.head_tilt = dev(c.head_tilt_range);
  return build_skeleton(a);
}

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  double r = v, g = v, b = v;
  double hh = (h - std::floor(h)) * 6.0;
  int sector = static_cast<int>(hh) % 6;
  double f = hh - std::floor(hh);
  double p = v * (1.0 - s);
  double q = v * (1.0 - s * f);
  double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {r, g, b};
}

}  // namespace

Identity Identity::from_seed(uint64_t seed) {
  Rng rng(hash_mix(seed, 0x6964656eull));
  Identity id;
  id.width_factor = rng.uniform(0.85, 1.3);
  for (auto& c : id.bone_colors)
    c = hsv_to_rgb(rng.uniform(), rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95));
  id.head_color = hsv_to_rgb(rng.uniform(), rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95));
  return id;
}

namespace {

double point_segment_dist(double px, double py, double ax, double ay, double bx, double by) {
  double dx = bx - ax, dy = by - ay;
  double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

// bones drawn back to front: legs/torso, arms, neck, head disk, face marks
const int kRenderOrder[kNumBones] = {11, 12, 13, 14, 15, 16, 5, 6, 7, 8, 9, 10, 0, 1, 2, 3, 4};

}  // namespace

RenderResult render_figure(const Skeleton& s, const Identity& id, int height, int width) {
  BG_CHECK_CFG(height >= 32 && width >= 16,
               "render_figure: minimum size is 32x16, got " << height << "x" << width);
  RenderResult out;
  out.height = height;
  out.width = width;
  out.image.assign(static_cast<size_t>(3 * height * width), 0.5);
  out.mask.assign(static_cast<size_t>(height * width), 0.0);

  const FigureProportions& fp = figure_proportions();
  double sy = static_cast<double>(height - 1);
  double sx = static_cast<double>(width - 1);
  double radius = 1.35 * id.width_factor * (height / 64.0);
  if (radius < 0.75) radius = 0.75;
  double neck_nose = std::hypot((s.joints[kNose].x - s.joints[kNeck].x) * sx,
                                (s.joints[kNose].y - s.joints[kNeck].y) * sy);
  double head_radius = neck_nose * (fp.head_radius / fp.neck_head);
  if (head_radius < radius) head_radius = radius;

  struct Prim {
    double ax, ay, bx, by, r;
    const double* color;
  };
  std::vector<Prim> prims;
  prims.reserve(kNumBones + 1);
  auto px = [&](int j) { return s.joints[static_cast<size_t>(j)].x * sx; };
  auto py = [&](int j) { return s.joints[static_cast<size_t>(j)].y * sy; };
  int head_after = 13;  // insert head disk after legs, arms, neck-nose
  int emitted = 0;
  for (int k = 0; k < kNumBones; ++k) {
    int b = kRenderOrder[k];
    prims.push_back({px(kBones[b].first), py(kBones[b].first), px(kBones[b].second),
                     py(kBones[b].second), radius, id.bone_colors[static_cast<size_t>(b)].data()});
    if (++emitted == head_after)
      prims.push_back(
          {px(kNose), py(kNose), px(kNose), py(kNose), head_radius, id.head_color.data()});
  }

  int64_t plane = static_cast<int64_t>(height) * width;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double cr = 0.5, cg = 0.5, cb = 0.5;
      double cov_max = 0.0;
      for (const Prim& pr : prims) {
        double d = point_segment_dist(x, y, pr.ax, pr.ay, pr.bx, pr.by);
        double cov = std::clamp(pr.r + 0.5 - d, 0.0, 1.0);
        if (cov <= 0.0) continue;
        cr = cr * (1.0 - cov) + pr.color[0] * cov;
        cg = cg * (1.0 - cov) + pr.color[1] * cov;
        cb = cb * (1.0 - cov) + pr.color[2] * cov;
        if (cov > cov_max) cov_max = cov;
      }
      int64_t i = static_cast<int64_t>(y) * width + x;
      out.image[static_cast<size_t>(i)] = cr;
      out.image[static_cast<size_t>(plane + i)] = cg;
      out.image[static_cast<size_t>(2 * plane + i)] = cb;
      out.mask[static_cast<size_t>(i)] = cov_max >= 0.5 ? 1.0 : 0.0;
    }
  }
  return out;
}

std::vector<double> keypoints_to_heatmaps(const Skeleton& s, int height, int width, int radius,
                                          bool* clamped) {
  BG_CHECK_CFG(radius >= 1, "keypoints_to_heatmaps: radius must be >= 1, got " << radius);
  BG_CHECK_CFG(height >= 1 && width >= 1, "keypoints_to_heatmaps: empty frame");
  std::vector<double> maps(static_cast<size_t>(kNumJoints) * height * width, 0.0);
  bool any_clamped = false;
  int64_t plane = static_cast<int64_t>(height) * width;
  for (int j = 0; j < kNumJoints; ++j) {
    long cx = std::lround(s.joints[static_cast<size_t>(j)].x * (width - 1));
    long cy = std::lround(s.joints[static_cast<size_t>(j)].y * (height - 1));
    if (cx < 0 || cx >= width || cy < 0 || cy >= height) {
      any_clamped = true;
      cx = std::clamp<long>(cx, 0, width - 1);
      cy = std::clamp<long>(cy, 0, height - 1);
    }
    for (long dy = -radius; dy <= radius; ++dy) {
      long yy = cy + dy;
      if (yy < 0 || yy >= height) continue;
      for (long dx = -radius; dx <= radius; ++dx) {
        long xx = cx + dx;
        if (xx < 0 || xx >= width) continue;
        if (dx * dx + dy * dy <= static_cast<long>(radius) * radius)
          maps[static_cast<size_t>(j * plane + yy * width + xx)] = 1.0;
      }
    }
  }
  if (clamped) *clamped = any_clamped;
  return maps;
}

SyntheticDataset::SyntheticDataset(const DatasetConfig& cfg) : cfg_(cfg) {
  BG_CHECK_CFG(cfg.n_train_identities >= 1 && cfg.n_test_identities >= 1,
               "dataset: identity counts must be positive");
  BG_CHECK_CFG(cfg.height >= 32 && cfg.width >= 16,
               "dataset: minimum image size is 32x16, got " << cfg.height << "x" << cfg.width);
  BG_CHECK_CFG(cfg.heatmap_radius >= 1, "dataset: heatmap radius must be >= 1");
  validate_constraints(cfg.constraints);
}

uint64_t SyntheticDataset::identity_seed(Split split, int64_t index) const {
  int n = identity_count(split);
  int64_t local = index % n;
  int64_t global = split == Split::train ? local : cfg_.n_train_identities + local;
  return hash_mix(cfg_.seed, hash_mix(0x6964ull, static_cast<uint64_t>(global)));
}

RawSample SyntheticDataset::raw_sample(Split split, int64_t index) const {
  RawSample raw;
  raw.identity_id = index % identity_count(split);
  raw.identity = Identity::from_seed(identity_seed(split, index));
  uint64_t tag = split == Split::train ? 0x7472ull : 0x7465ull;
  Rng rng(hash_mix(cfg_.seed, hash_mix(tag, static_cast<uint64_t>(index))));
  raw.skeleton_a = sample_pose(rng, cfg_.constraints);
  raw.skeleton_b = sample_pose(rng, cfg_.constraints);
  raw.render_a = render_figure(raw.skeleton_a, raw.identity, cfg_.height, cfg_.width);
  raw.render_b = render_figure(raw.skeleton_b, raw.identity, cfg_.height, cfg_.width);
  bool ca = false, cb = false;
  raw.heat_a = keypoints_to_heatmaps(raw.skeleton_a, cfg_.height, cfg_.width, cfg_.heatmap_radius, &ca);
  raw.heat_b = keypoints_to_heatmaps(raw.skeleton_b, cfg_.height, cfg_.width, cfg_.heatmap_radius, &cb);
  raw.clamped = ca || cb;
  return raw;
}

}  // namespace bigraph
