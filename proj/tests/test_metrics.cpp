#include <doctest.h>

#include <cmath>

#include "bigraph/metrics.hpp"
#include "bigraph/pose_data.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace bigraph;

namespace {

Tensor<double> render01(const Skeleton& s, const Identity& id, int h, int w) {
  auto r = render_figure(s, id, h, w);
  return Tensor<double>::from_values({3, h, w}, r.image);
}

Tensor<double> mask_of(const Skeleton& s, const Identity& id, int h, int w) {
  auto r = render_figure(s, id, h, w);
  return Tensor<double>::from_values({h, w}, r.mask);
}

}  // namespace

TEST_SUITE("ssim") {
  TEST_CASE("identity is exactly one") {
    Rng rng(130);
    auto x = gradcheck::rand_tensor(rng, {3, 16, 16}, 0, 1, false);
    CHECK(ssim(x, x) == 1.0);
  }

  TEST_CASE("constant images follow the stabilizer formula") {
    auto zero = Tensor<double>::zeros({1, 12, 12});
    auto one = Tensor<double>::full({1, 12, 12}, 1.0);
    // scalar-window oracle: mu_x=0, mu_y=1, all variances zero
    double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double expect = (c1 * c2) / ((1.0 + c1) * c2);
    CHECK(ssim(zero, one) == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("symmetric in its arguments") {
    Rng rng(131);
    auto x = gradcheck::rand_tensor(rng, {1, 13, 14}, 0, 1, false);
    auto y = gradcheck::rand_tensor(rng, {1, 13, 14}, 0, 1, false);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  }

  TEST_CASE("bounded and shift-tolerant") {
    Rng rng(132);
    auto x = gradcheck::rand_tensor(rng, {1, 12, 12}, 0.1, 0.9, false);
    auto y = gradcheck::rand_tensor(rng, {1, 12, 12}, 0.1, 0.9, false);
    double v = ssim(x, y);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    double c = 0.005;
    double shifted = ssim(affine(x, 1.0, c).detach(), affine(y, 1.0, c).detach());
    CHECK(std::abs(shifted - v) < 1e-2);  // stabilizer terms move it slightly
  }

  TEST_CASE("images below the window size are a configuration error") {
    auto small = Tensor<double>::zeros({1, 8, 8});
    CHECK_THROWS_AS(ssim(small, small), ConfigError);
  }
}

TEST_SUITE("mask ssim") {
  TEST_CASE("full mask reduces to plain ssim") {
    Rng rng(133);
    auto x = gradcheck::rand_tensor(rng, {3, 16, 12}, 0, 1, false);
    auto y = gradcheck::rand_tensor(rng, {3, 16, 12}, 0, 1, false);
    auto full = Tensor<double>::full({16, 12}, 1.0);
    CHECK(std::abs(mask_ssim(x, y, full) - ssim(x, y)) < 1e-12);
    CHECK(mask_ssim(x, x, full) == 1.0);
  }

  TEST_CASE("differs from plain ssim when backgrounds differ") {
    Rng rng(134);
    auto s = sample_pose(rng, PoseConstraints());
    auto id = Identity::from_seed(9);
    auto x = render01(s, id, 64, 32);
    auto mask = mask_of(s, id, 64, 32);
    // corrupt only the background of y
    auto y = x.detach();
    auto mv = mask.values();
    auto yv = y.values_mut();
    int64_t plane = 64 * 32;
    Rng noise(12);
    for (int64_t i = 0; i < plane; ++i)
      if (mv[static_cast<size_t>(i)] == 0.0)
        for (int c = 0; c < 3; ++c)
          yv[static_cast<size_t>(c * plane + i)] = noise.uniform(0.0, 1.0);
    double masked = mask_ssim(x, y, mask);
    double plain = ssim(x, y);
    CHECK(masked != doctest::Approx(plain).epsilon(1e-6));
    CHECK(masked > plain);  // corruption sits in the background
  }

  TEST_CASE("empty mask is an undefined-metric error") {
    auto x = Tensor<double>::zeros({1, 16, 16});
    auto empty = Tensor<double>::zeros({16, 16});
    CHECK_THROWS_AS(mask_ssim(x, x, empty), UndefinedMetricError);
    auto bad = Tensor<double>::full({16, 16}, 0.5);
    CHECK_THROWS_AS(mask_ssim(x, x, bad), ContractError);
  }
}

TEST_SUITE("keypoint error") {
  TEST_CASE("ground-truth image recovers every joint") {
    Rng rng(135);
    for (int i = 0; i < 3; ++i) {
      auto s = sample_pose(rng, PoseConstraints());
      auto id = Identity::from_seed(100 + i);
      auto gt = render01(s, id, 64, 32);
      CHECK(keypoint_error(gt, s, id) == 1.0);
    }
  }

  TEST_CASE("uniform gray image detects nothing") {
    Rng rng(136);
    auto s = sample_pose(rng, PoseConstraints());
    auto id = Identity::from_seed(5);
    auto gray = Tensor<double>::full({3, 64, 32}, 0.5);
    CHECK(keypoint_error(gray, s, id) == 0.0);
  }

  TEST_CASE("a five-pixel translation drops the score") {
    Rng rng(137);
    auto s = sample_pose(rng, PoseConstraints());
    auto id = Identity::from_seed(6);
    auto gt = render01(s, id, 64, 32);
    // shift the image five pixels right, background-filling the gap
    auto shifted = Tensor<double>::full({3, 64, 32}, 0.5);
    auto sv = shifted.values_mut();
    auto gv = gt.values();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 5; x < 32; ++x)
          sv[static_cast<size_t>((c * 64 + y) * 32 + x)] =
              gv[static_cast<size_t>((c * 64 + y) * 32 + x - 5)];
    CHECK(keypoint_error(shifted, s, id) < 1.0);
  }
}
