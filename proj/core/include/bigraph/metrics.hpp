#pragma once

#include "bigraph/pose_data.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5, K1 0.01,
// K2 0.03), valid windows only, averaged over channels. Inputs are [c,h,w]
// images with values in [0,1].
double ssim(const Tensor<double>& x, const Tensor<double>& y);

// SSIM restricted to windows whose center pixel is masked foreground.
// mask is [h,w] or [1,h,w] with values exactly 0 or 1.
double mask_ssim(const Tensor<double>& x, const Tensor<double>& y, const Tensor<double>& mask);

struct KeypointDetectorConfig {
  int patch_half = 3;      // 7x7 template patch
  int search_radius = 6;   // around the ground-truth location
  double tolerance_px = 2.0;
  double accept_ratio = 0.5;  // best SSD must beat ratio * (patch vs background)
};

// Re-detects each joint in `generated` ([3,h,w], values in [0,1]) by template
// correlation against the identity's rendering of the target skeleton and
// reports the fraction of the 18 joints recovered within tolerance. Detection
// failures count as misses.
double keypoint_error(const Tensor<double>& generated, const Skeleton& joints_b,
                      const Identity& identity,
                      const KeypointDetectorConfig& det = KeypointDetectorConfig());

}  // namespace bigraph
