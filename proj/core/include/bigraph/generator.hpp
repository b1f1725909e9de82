#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bigraph/bgr.hpp"
#include "bigraph/ia.hpp"
#include "bigraph/nn.hpp"

namespace bigraph {

// 7x7 stride-1 stem, then two stride-2 stages; downsamples by 4 to width C.
// The stride-2 filters are 4x4 so even extents halve exactly.
template <typename T>
struct Encoder {
  Conv2dLayer<T> c1, c2, c3;
  InstanceNormLayer<T> n1, n2, n3;

  static Encoder create(Rng& rng, int64_t in_ch, int64_t width) {
    BG_CHECK_CFG(width >= 2 && width % 2 == 0, "encoder: width must be even, got " << width);
    Encoder e;
    e.c1 = Conv2dLayer<T>::create(rng, in_ch, width / 2, 7, 1, 3);
    e.n1 = InstanceNormLayer<T>::create(width / 2);
    e.c2 = Conv2dLayer<T>::create(rng, width / 2, width, 4, 2, 1);
    e.n2 = InstanceNormLayer<T>::create(width);
    e.c3 = Conv2dLayer<T>::create(rng, width, width, 4, 2, 1);
    e.n3 = InstanceNormLayer<T>::create(width);
    return e;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto h = relu(n1(c1(x)));
    h = relu(n2(c2(h)));
    return relu(n3(c3(h)));
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    c1.collect(pm, prefix + ".c1");
    n1.collect(pm, prefix + ".n1");
    c2.collect(pm, prefix + ".c2");
    n2.collect(pm, prefix + ".n2");
    c3.collect(pm, prefix + ".c3");
    n3.collect(pm, prefix + ".n3");
  }
};

struct GeneratorConfig {
  int64_t stages = 3;        // cascade depth T
  int64_t channels = 32;     // code width C
  int64_t n_nodes_b2a = 16;  // latent nodes, per branch
  int64_t n_nodes_a2b = 16;
  int64_t d_state = 32;
  bool use_b2a = true;
  bool use_a2b = true;
  bool share_gcn = false;
  bool use_aif = true;
  int64_t image_channels = 3;
  int64_t pose_channels = 18;
};

// Codes at stage t. All three share shape b x C x h/4 x w/4.
template <typename T>
struct GeneratorState {
  Tensor<T> f_i;   // appearance code
  Tensor<T> f_pa;  // source shape code
  Tensor<T> f_pb;  // target shape code
  int64_t t = 0;
};

template <typename T>
struct GeneratorStage {
  std::optional<BGRBlockParams<T>> bgr;
  IABlockParams<T> ia;
};

template <typename T>
struct GeneratorParams {
  GeneratorConfig cfg;
  Encoder<T> appearance_encoder;
  Encoder<T> shape_encoder;  // one instance serves both poses
  std::vector<GeneratorStage<T>> stages;
  AIFParams<T> aif;

  static GeneratorParams create(Rng& rng, const GeneratorConfig& cfg) {
    BG_CHECK_CFG(cfg.stages >= 1, "generator: cascade depth must be >= 1, got " << cfg.stages);
    GeneratorParams g;
    g.cfg = cfg;
    g.appearance_encoder = Encoder<T>::create(rng, cfg.image_channels, cfg.channels);
    g.shape_encoder = Encoder<T>::create(rng, cfg.pose_channels, cfg.channels);
    g.stages.reserve(static_cast<size_t>(cfg.stages));
    for (int64_t t = 0; t < cfg.stages; ++t) {
      GeneratorStage<T> st;
      if (cfg.use_b2a || cfg.use_a2b)
        st.bgr = BGRBlockParams<T>::create(rng, cfg.channels, cfg.n_nodes_b2a, cfg.n_nodes_a2b,
                                           cfg.d_state, cfg.use_b2a, cfg.use_a2b, cfg.share_gcn);
      st.ia = IABlockParams<T>::create(rng, cfg.channels);
      g.stages.push_back(std::move(st));
    }
    g.aif = AIFParams<T>::create(rng, cfg.channels, cfg.use_aif);
    return g;
  }

  void collect(ParamMap<T>& pm) const {
    appearance_encoder.collect(pm, "gen.app_enc");
    shape_encoder.collect(pm, "gen.shape_enc");
    for (size_t t = 0; t < stages.size(); ++t) {
      std::string idx = std::to_string(t);
      if (stages[t].bgr) stages[t].bgr->collect(pm, "gen.bgr." + idx);
      stages[t].ia.collect(pm, "gen.ia." + idx);
    }
    aif.collect(pm, "gen.aif");
  }

  ParamMap<T> params() const {
    ParamMap<T> pm;
    collect(pm);
    return pm;
  }
};

template <typename T>
GeneratorState<T> encode(const Tensor<T>& i_a, const Tensor<T>& p_a, const Tensor<T>& p_b,
                         const GeneratorParams<T>& g) {
  BG_CHECK_DIM(i_a.rank() == 4 && i_a.dim(1) == g.cfg.image_channels,
               "encode: image must have " << g.cfg.image_channels << " channels, got "
                                          << shape_str(i_a.shape()));
  BG_CHECK_DIM(p_a.rank() == 4 && p_a.dim(1) == g.cfg.pose_channels,
               "encode: source pose must have " << g.cfg.pose_channels << " channels, got "
                                                << shape_str(p_a.shape()));
  BG_CHECK_DIM(p_b.rank() == 4 && p_b.dim(1) == g.cfg.pose_channels,
               "encode: target pose must have " << g.cfg.pose_channels << " channels, got "
                                                << shape_str(p_b.shape()));
  GeneratorState<T> s;
  s.f_i = g.appearance_encoder(i_a);
  s.f_pa = g.shape_encoder(p_a);
  s.f_pb = g.shape_encoder(p_b);
  s.t = 0;
  return s;
}

template <typename T>
struct GeneratorOutput {
  Tensor<T> i_b_prime;  // final image
  Tensor<T> i_b_tilde;  // decoder image before fusion
  Tensor<T> attention;  // one-channel fusion mask; undefined when AIF is off
};

template <typename T>
GeneratorOutput<T> generator_forward(const Tensor<T>& i_a, const Tensor<T>& p_a,
                                     const Tensor<T>& p_b, const GeneratorParams<T>& g) {
  GeneratorState<T> s = encode(i_a, p_a, p_b, g);
  for (const auto& stage : g.stages) {
    Tensor<T> pa_tilde = s.f_pa;
    Tensor<T> pb_tilde = s.f_pb;
    if (stage.bgr) {
      auto [pa, pb] = bgr_forward(s.f_pa, s.f_pb, *stage.bgr);
      pa_tilde = pa;
      pb_tilde = pb;
    }
    auto [fi, fpa, fpb] = ia_forward(s.f_i, pa_tilde, pb_tilde, stage.ia);
    s.f_i = fi;
    s.f_pa = fpa;
    s.f_pb = fpb;
    s.t += 1;
  }
  GeneratorOutput<T> out;
  out.i_b_tilde = g.aif.image_decoder(s.f_i);
  if (g.cfg.use_aif) {
    out.attention = (*g.aif.attention_decoder)(s.f_i);
    out.i_b_prime = attention_fuse(i_a, out.i_b_tilde, out.attention);
  } else {
    out.i_b_prime = out.i_b_tilde;
  }
  return out;
}

// Patch-level classifier over channel-concatenated pairs: n_strided stride-2
// stages then a 3x3 score head. The score map is input_size / 2^n_strided.
struct DiscriminatorConfig {
  int64_t in_channels = 6;
  int64_t base_width = 32;
  int n_strided = 3;
};

template <typename T>
struct DiscriminatorParams {
  DiscriminatorConfig cfg;
  std::vector<Conv2dLayer<T>> convs;
  std::vector<std::optional<InstanceNormLayer<T>>> norms;  // none on the first stage
  Conv2dLayer<T> head;

  static DiscriminatorParams create(Rng& rng, const DiscriminatorConfig& cfg) {
    BG_CHECK_CFG(cfg.n_strided >= 1, "discriminator: needs at least one strided stage");
    DiscriminatorParams d;
    d.cfg = cfg;
    int64_t in = cfg.in_channels;
    int64_t width = cfg.base_width;
    for (int i = 0; i < cfg.n_strided; ++i) {
      d.convs.push_back(Conv2dLayer<T>::create(rng, in, width, 4, 2, 1));
      if (i == 0)
        d.norms.emplace_back(std::nullopt);
      else
        d.norms.emplace_back(InstanceNormLayer<T>::create(width));
      in = width;
      width *= 2;
    }
    d.head = Conv2dLayer<T>::create(rng, in, 1, 3, 1, 1);
    return d;
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    for (size_t i = 0; i < convs.size(); ++i) {
      convs[i].collect(pm, prefix + ".l" + std::to_string(i));
      if (norms[i]) norms[i]->collect(pm, prefix + ".n" + std::to_string(i));
    }
    head.collect(pm, prefix + ".head");
  }

  ParamMap<T> params(const std::string& prefix) const {
    ParamMap<T> pm;
    collect(pm, prefix);
    return pm;
  }
};

template <typename T>
Tensor<T> discriminate(const Tensor<T>& pair, const DiscriminatorParams<T>& d) {
  BG_CHECK_DIM(pair.rank() == 4 && pair.dim(1) == d.cfg.in_channels,
               "discriminate: expected " << d.cfg.in_channels << " channels, got "
                                         << shape_str(pair.shape()));
  Tensor<T> h = pair;
  for (size_t i = 0; i < d.convs.size(); ++i) {
    h = d.convs[i](h);
    if (d.norms[i]) h = (*d.norms[i])(h);
    h = leaky_relu(h, T(0.2));
  }
  return d.head(h);
}

}  // namespace bigraph
