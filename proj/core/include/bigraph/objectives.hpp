#pragma once

#include <cmath>
#include <string>

#include "bigraph/nn.hpp"
#include "bigraph/ops.hpp"

namespace bigraph {

enum class AdvSide { generator, discriminator };

// Non-saturating binary cross-entropy over patch scores. The generator side
// labels fakes as real and ignores real_scores; the discriminator side
// averages the real and fake terms.
template <typename T>
Tensor<T> adversarial_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores,
                           AdvSide side) {
  BG_CHECK(fake_scores.defined() && fake_scores.numel() > 0, "adversarial_loss: empty score map");
  if (side == AdvSide::generator) {
    return mean_all(softplus(affine(fake_scores, T(-1), T(0))));
  }
  BG_CHECK(real_scores.defined() && real_scores.numel() > 0, "adversarial_loss: empty score map");
  auto real_term = mean_all(softplus(affine(real_scores, T(-1), T(0))));
  auto fake_term = mean_all(softplus(fake_scores));
  return affine(add(real_term, fake_term), T(0.5), T(0));
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  BG_CHECK_DIM(a.shape() == b.shape(), "l1_loss: shape mismatch: " << shape_str(a.shape())
                                                                   << " vs " << shape_str(b.shape()));
  return mean_all(abs_val(sub(a, b)));
}

// Frozen shallow feature stack standing in for a pretrained perceptual
// layer: two 3x3 conv+ReLU layers, fixed by seed, never trained.
template <typename T>
struct PerceptualExtractor {
  Conv2dLayer<T> c1, c2;
  uint64_t seed = 0;

  static PerceptualExtractor create(uint64_t seed, int64_t in_ch = 3, int64_t width = 16) {
    Rng rng(hash_mix(seed, 0x70657263ull));
    PerceptualExtractor e;
    e.c1 = Conv2dLayer<T>::create(rng, in_ch, width, 3, 1, 1);
    e.c2 = Conv2dLayer<T>::create(rng, width, width, 3, 1, 1);
    e.seed = seed;
    e.c1.weight.set_requires_grad(false);
    e.c1.bias.set_requires_grad(false);
    e.c2.weight.set_requires_grad(false);
    e.c2.bias.set_requires_grad(false);
    return e;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return relu(c2(relu(c1(x)))); }
};

template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& a, const Tensor<T>& b,
                          const PerceptualExtractor<T>& extractor) {
  BG_CHECK_DIM(a.shape() == b.shape(), "perceptual_loss: shape mismatch: "
                                           << shape_str(a.shape()) << " vs "
                                           << shape_str(b.shape()));
  return l1_loss(extractor(a), extractor(b));
}

template <typename T>
struct LossWeights {
  T lambda_gan = T(5);
  T lambda_l1 = T(10);
  T lambda_per = T(10);
};

// lambda_gan * L_gan + lambda_l1 * L_l1 + lambda_per * L_per
template <typename T>
Tensor<T> full_objective(const Tensor<T>& gan, const Tensor<T>& l1, const Tensor<T>& per,
                         const LossWeights<T>& w) {
  auto check = [](const Tensor<T>& c, const char* name) {
    if (std::isnan(static_cast<double>(c.item())))
      BG_THROW(TrainAbortError, "full_objective: " << name << " component is NaN");
  };
  check(gan, "adversarial");
  check(l1, "l1");
  check(per, "perceptual");
  auto weighted = add(affine(gan, w.lambda_gan, T(0)), affine(l1, w.lambda_l1, T(0)));
  return add(weighted, affine(per, w.lambda_per, T(0)));
}

}  // namespace bigraph
