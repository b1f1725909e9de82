#pragma once

#include <optional>
#include <string>
#include <tuple>
#include <utility>

#include "bigraph/nn.hpp"
#include "bigraph/ops.hpp"

namespace bigraph {

// Interaction-and-Aggregation block: pose-derived sigmoid attention over the
// appearance code, then a convolutional update that re-synchronizes both
// shape codes.
template <typename T>
struct IABlockParams {
  Conv2dLayer<T> attn1;  // 2C -> C
  Conv2dLayer<T> attn2;  // C -> C, sigmoid head
  Conv2dLayer<T> upd1;   // 3C -> 2C
  Conv2dLayer<T> upd2;   // 2C -> 2C, split in half along channels

  static IABlockParams create(Rng& rng, int64_t channels) {
    BG_CHECK_CFG(channels >= 1, "ia: channel width must be positive, got " << channels);
    IABlockParams p;
    p.attn1 = Conv2dLayer<T>::create(rng, 2 * channels, channels, 3, 1, 1);
    p.attn2 = Conv2dLayer<T>::create(rng, channels, channels, 3, 1, 1);
    p.upd1 = Conv2dLayer<T>::create(rng, 3 * channels, 2 * channels, 3, 1, 1);
    p.upd2 = Conv2dLayer<T>::create(rng, 2 * channels, 2 * channels, 3, 1, 1);
    BG_CHECK_CFG(p.upd2.weight.dim(0) % 2 == 0,
                 "ia: update head must produce an even channel count, got "
                     << p.upd2.weight.dim(0));
    return p;
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    attn1.collect(pm, prefix + ".attn1");
    attn2.collect(pm, prefix + ".attn2");
    upd1.collect(pm, prefix + ".upd1");
    upd2.collect(pm, prefix + ".upd2");
  }
};

template <typename T>
Tensor<T> pose_attention(const Tensor<T>& f_pa, const Tensor<T>& f_pb,
                         const IABlockParams<T>& params) {
  BG_CHECK_DIM(f_pa.shape() == f_pb.shape(), "pose_attention: shape codes disagree: "
                                                 << shape_str(f_pa.shape()) << " vs "
                                                 << shape_str(f_pb.shape()));
  auto h = relu(params.attn1(concat_channels<T>({f_pa, f_pb})));
  return sigmoid(params.attn2(h));
}

// F_new = A_p (.) F + F; attention values preserve or suppress locations.
template <typename T>
Tensor<T> enhance_appearance(const Tensor<T>& f_i, const Tensor<T>& attn) {
  BG_CHECK_DIM(f_i.shape() == attn.shape(), "enhance_appearance: shapes disagree: "
                                                << shape_str(f_i.shape()) << " vs "
                                                << shape_str(attn.shape()));
  return add(mul(attn, f_i), f_i);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> update_shape_codes(const Tensor<T>& f_i_new,
                                                   const Tensor<T>& f_pa, const Tensor<T>& f_pb,
                                                   const IABlockParams<T>& params) {
  auto h = relu(params.upd1(concat_channels<T>({f_i_new, f_pa, f_pb})));
  auto u = params.upd2(h);
  BG_CHECK_CFG(u.dim(1) % 2 == 0,
               "update_shape_codes: cannot split " << u.dim(1) << " channels in half");
  int64_t half = u.dim(1) / 2;
  return {slice_channels(u, 0, half), slice_channels(u, half, half)};
}

template <typename T>
std::tuple<Tensor<T>, Tensor<T>, Tensor<T>> ia_forward(const Tensor<T>& f_i,
                                                       const Tensor<T>& f_pa_tilde,
                                                       const Tensor<T>& f_pb_tilde,
                                                       const IABlockParams<T>& params) {
  auto attn = pose_attention(f_pa_tilde, f_pb_tilde, params);
  auto f_i_next = enhance_appearance(f_i, attn);
  auto [pa_next, pb_next] = update_shape_codes(f_i_next, f_pa_tilde, f_pb_tilde, params);
  return {f_i_next, pa_next, pb_next};
}

// Decoders of the fusion head. Two stride-2 deconvolutions mirror the
// encoder's downsampling, then a 7x7 head produces the image (tanh) or the
// one-channel attention mask (sigmoid).
template <typename T>
struct AIFDecoder {
  ConvTranspose2dLayer<T> up1, up2;
  InstanceNormLayer<T> norm1, norm2;
  Conv2dLayer<T> head;
  bool sigmoid_head = false;

  static AIFDecoder create(Rng& rng, int64_t channels, int64_t out_ch, bool sigmoid_head) {
    BG_CHECK_CFG(channels >= 4, "aif: decoder needs at least 4 channels, got " << channels);
    AIFDecoder d;
    d.up1 = ConvTranspose2dLayer<T>::create(rng, channels, channels / 2, 4, 2, 1);
    d.norm1 = InstanceNormLayer<T>::create(channels / 2);
    d.up2 = ConvTranspose2dLayer<T>::create(rng, channels / 2, channels / 4, 4, 2, 1);
    d.norm2 = InstanceNormLayer<T>::create(channels / 4);
    d.head = Conv2dLayer<T>::create(rng, channels / 4, out_ch, 7, 1, 3);
    d.sigmoid_head = sigmoid_head;
    return d;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto h = relu(norm1(up1(x)));
    h = relu(norm2(up2(h)));
    auto y = head(h);
    return sigmoid_head ? sigmoid(y) : tanh_act(y);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    up1.collect(pm, prefix + ".up1");
    norm1.collect(pm, prefix + ".norm1");
    up2.collect(pm, prefix + ".up2");
    norm2.collect(pm, prefix + ".norm2");
    head.collect(pm, prefix + ".head");
  }
};

template <typename T>
struct AIFParams {
  AIFDecoder<T> image_decoder;
  std::optional<AIFDecoder<T>> attention_decoder;

  static AIFParams create(Rng& rng, int64_t channels, bool with_attention) {
    AIFParams p;
    p.image_decoder = AIFDecoder<T>::create(rng, channels, 3, false);
    if (with_attention) p.attention_decoder = AIFDecoder<T>::create(rng, channels, 1, true);
    return p;
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    image_decoder.collect(pm, prefix + ".image_decoder");
    if (attention_decoder) attention_decoder->collect(pm, prefix + ".attention_decoder");
  }
};

// Convex per-pixel blend: I_a (.) A + I_tilde (.) (1 - A). The mask is a
// single channel broadcast over the image channels.
template <typename T>
Tensor<T> attention_fuse(const Tensor<T>& i_a, const Tensor<T>& i_b_tilde, const Tensor<T>& mask) {
  BG_CHECK_DIM(i_a.shape() == i_b_tilde.shape(), "attention_fuse: image shapes disagree: "
                                                     << shape_str(i_a.shape()) << " vs "
                                                     << shape_str(i_b_tilde.shape()));
  BG_CHECK_DIM(mask.rank() == 4 && mask.dim(0) == i_a.dim(0) && mask.dim(1) == 1 &&
                   mask.dim(2) == i_a.dim(2) && mask.dim(3) == i_a.dim(3),
               "attention_fuse: mask " << shape_str(mask.shape()) << " does not broadcast over "
                                       << shape_str(i_a.shape()));
  for (T v : mask.values())
    BG_CHECK(v >= T(0) && v <= T(1), "attention_fuse: mask value " << v << " outside [0,1]");
  std::vector<Tensor<T>> copies(static_cast<size_t>(i_a.dim(1)), mask);
  auto m = concat_channels(copies);
  return add(mul(i_a, m), mul(i_b_tilde, affine(m, T(-1), T(1))));
}

}  // namespace bigraph
