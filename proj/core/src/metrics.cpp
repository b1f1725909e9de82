#include "bigraph/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace bigraph {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin * kWin>& gaussian_window() {
  static const std::array<double, kWin * kWin> win = [] {
    std::array<double, kWin * kWin> w{};
    double sigma = 1.5;
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y)
      for (int x = 0; x < kWin; ++x) {
        double dy = y - kHalf, dx = x - kHalf;
        double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        w[static_cast<size_t>(y * kWin + x)] = v;
        sum += v;
      }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return win;
}

double ssim_impl(const Tensor<double>& x, const Tensor<double>& y, const double* mask) {
  BG_CHECK_DIM(x.shape() == y.shape(), "ssim: shape mismatch: " << shape_str(x.shape()) << " vs "
                                                                << shape_str(y.shape()));
  BG_CHECK_DIM(x.rank() == 3, "ssim: expects [c,h,w] images, got " << shape_str(x.shape()));
  int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  BG_CHECK_CFG(h >= kWin && w >= kWin,
               "ssim: image " << h << "x" << w << " smaller than the " << kWin << "x" << kWin
                              << " window");
  const auto& win = gaussian_window();
  const double* xv = x.values().data();
  const double* yv = y.values().data();
  int64_t plane = h * w;
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    const double* xc = xv + ch * plane;
    const double* yc = yv + ch * plane;
    for (int64_t cy = kHalf; cy < h - kHalf; ++cy) {
      for (int64_t cx = kHalf; cx < w - kHalf; ++cx) {
        if (mask && mask[cy * w + cx] < 0.5) continue;
        double mux = 0.0, muy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
        for (int ky = 0; ky < kWin; ++ky) {
          const double* xr = xc + (cy - kHalf + ky) * w + (cx - kHalf);
          const double* yr = yc + (cy - kHalf + ky) * w + (cx - kHalf);
          const double* wr = win.data() + ky * kWin;
          for (int kx = 0; kx < kWin; ++kx) {
            double wv = wr[kx], a = xr[kx], b = yr[kx];
            mux += wv * a;
            muy += wv * b;
            sxx += wv * a * a;
            syy += wv * b * b;
            sxy += wv * a * b;
          }
        }
        double varx = sxx - mux * mux;
        double vary = syy - muy * muy;
        double cov = sxy - mux * muy;
        double num = (2.0 * mux * muy + kC1) * (2.0 * cov + kC2);
        double den = (mux * mux + muy * muy + kC1) * (varx + vary + kC2);
        acc += num / den;
        ++count;
      }
    }
  }
  if (count == 0)
    BG_THROW(UndefinedMetricError, "mask_ssim: no foreground window centers in the valid region");
  return acc / static_cast<double>(count);
}

}  // namespace

double ssim(const Tensor<double>& x, const Tensor<double>& y) { return ssim_impl(x, y, nullptr); }

double mask_ssim(const Tensor<double>& x, const Tensor<double>& y, const Tensor<double>& mask) {
  BG_CHECK_DIM((mask.rank() == 2 && mask.dim(0) == x.dim(1) && mask.dim(1) == x.dim(2)) ||
                   (mask.rank() == 3 && mask.dim(0) == 1 && mask.dim(1) == x.dim(1) &&
                    mask.dim(2) == x.dim(2)),
               "mask_ssim: mask " << shape_str(mask.shape()) << " does not match image "
                                  << shape_str(x.shape()));
  for (double v : mask.values())
    BG_CHECK(v == 0.0 || v == 1.0, "mask_ssim: mask must be binary, found " << v);
  return ssim_impl(x, y, mask.values().data());
}

double keypoint_error(const Tensor<double>& generated, const Skeleton& joints_b,
                      const Identity& identity, const KeypointDetectorConfig& det) {
  BG_CHECK_DIM(generated.rank() == 3 && generated.dim(0) == 3,
               "keypoint_error: expects [3,h,w] image, got " << shape_str(generated.shape()));
  int h = static_cast<int>(generated.dim(1));
  int w = static_cast<int>(generated.dim(2));
  RenderResult ref = render_figure(joints_b, identity, h, w);
  const double* gen = generated.values().data();
  const double* tpl = ref.image.data();
  int64_t plane = static_cast<int64_t>(h) * w;

  int hits = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    long gx = std::clamp<long>(std::lround(joints_b.joints[static_cast<size_t>(j)].x * (w - 1)), 0, w - 1);
    long gy = std::clamp<long>(std::lround(joints_b.joints[static_cast<size_t>(j)].y * (h - 1)), 0, h - 1);

    // mean SSD of the template patch against flat background; detections
    // must beat a fraction of it or the joint counts as missed
    double ref_ssd = 0.0;
    int ref_n = 0;
    for (int dy = -det.patch_half; dy <= det.patch_half; ++dy)
      for (int dx = -det.patch_half; dx <= det.patch_half; ++dx) {
        long ty = gy + dy, tx = gx + dx;
        if (ty < 0 || ty >= h || tx < 0 || tx >= w) continue;
        for (int c = 0; c < 3; ++c) {
          double d = tpl[c * plane + ty * w + tx] - 0.5;
          ref_ssd += d * d;
          ++ref_n;
        }
      }
    if (ref_n == 0 || ref_ssd <= 0.0) continue;  // nothing to match against
    ref_ssd /= ref_n;

    double best = -1.0;
    long bx = gx, by = gy;
    for (long sy = gy - det.search_radius; sy <= gy + det.search_radius; ++sy) {
      if (sy < 0 || sy >= h) continue;
      for (long sx = gx - det.search_radius; sx <= gx + det.search_radius; ++sx) {
        if (sx < 0 || sx >= w) continue;
        double ssd = 0.0;
        int n = 0;
        for (int dy = -det.patch_half; dy <= det.patch_half; ++dy)
          for (int dx = -det.patch_half; dx <= det.patch_half; ++dx) {
            long ty = gy + dy, tx = gx + dx;
            long cy = sy + dy, cx = sx + dx;
            if (ty < 0 || ty >= h || tx < 0 || tx >= w) continue;
            if (cy < 0 || cy >= h || cx < 0 || cx >= w) continue;
            for (int c = 0; c < 3; ++c) {
              double d = tpl[c * plane + ty * w + tx] - gen[c * plane + cy * w + cx];
              ssd += d * d;
              ++n;
            }
          }
        if (n == 0) continue;
        ssd /= n;
        if (best < 0.0 || ssd < best) {
          best = ssd;
          bx = sx;
          by = sy;
        }
      }
    }
    if (best < 0.0 || best >= det.accept_ratio * ref_ssd) continue;  // miss
    double dx = static_cast<double>(bx - gx), dy = static_cast<double>(by - gy);
    if (dx * dx + dy * dy <= det.tolerance_px * det.tolerance_px) ++hits;
  }
  return static_cast<double>(hits) / kNumJoints;
}

}  // namespace bigraph
