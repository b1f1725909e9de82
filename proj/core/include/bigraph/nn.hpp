#pragma once

#include <cmath>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bigraph/ops.hpp"
#include "bigraph/rng.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

// Ordered name -> tensor registry. Tensors shared between modules (tied
// weights) register once, under the first name they appear with.
template <typename T>
class ParamMap {
 public:
  void add(const std::string& name, const Tensor<T>& t) {
    BG_CHECK(t.defined(), "param registry: undefined tensor for " << name);
    if (!seen_.insert(t.node().get()).second) return;
    BG_CHECK(names_.insert(name).second, "param registry: duplicate name " << name);
    items_.emplace_back(name, t);
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(items_.size());
    for (const auto& [name, t] : items_) out.push_back(t);
    return out;
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  void zero_grad() const {
    for (const auto& [name, t] : items_) const_cast<Tensor<T>&>(t).zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::unordered_set<const void*> seen_;
  std::set<std::string> names_;
};

namespace init {

// Fan-in-scaled uniform for convolution filters.
template <typename T>
Tensor<T> conv_filter(Rng& rng, int64_t d0, int64_t d1, int64_t kh, int64_t kw, int64_t fan_in) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> v(static_cast<size_t>(d0 * d1 * kh * kw));
  for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_values({d0, d1, kh, kw}, std::move(v), true);
}

template <typename T>
Tensor<T> zeros_vec(int64_t n) {
  return Tensor<T>::zeros({n}, true);
}

template <typename T>
Tensor<T> ones_vec(int64_t n) {
  return Tensor<T>::full({n}, T(1), true);
}

template <typename T>
Tensor<T> gaussian_matrix(Rng& rng, int64_t rows, int64_t cols, double stddev) {
  std::vector<T> v(static_cast<size_t>(rows * cols));
  for (auto& e : v) e = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>::from_values({rows, cols}, std::move(v), true);
}

}  // namespace init

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;  // [out,in,k,k]
  Tensor<T> bias;    // [out], may be undefined
  int stride = 1;
  int pad = 0;

  static Conv2dLayer create(Rng& rng, int64_t in_ch, int64_t out_ch, int64_t k, int stride,
                            int pad, bool with_bias = true) {
    Conv2dLayer l;
    l.weight = init::conv_filter<T>(rng, out_ch, in_ch, k, k, in_ch * k * k);
    if (with_bias) l.bias = init::zeros_vec<T>(out_ch);
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = conv2d(x, weight, stride, pad);
    return bias.defined() ? add_channel_bias(y, bias) : y;
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".weight", weight);
    if (bias.defined()) pm.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct ConvTranspose2dLayer {
  Tensor<T> weight;  // [in,out,k,k]
  Tensor<T> bias;    // [out]
  int stride = 1;
  int pad = 0;

  static ConvTranspose2dLayer create(Rng& rng, int64_t in_ch, int64_t out_ch, int64_t k,
                                     int stride, int pad, bool with_bias = true) {
    ConvTranspose2dLayer l;
    l.weight = init::conv_filter<T>(rng, in_ch, out_ch, k, k, in_ch * k * k);
    if (with_bias) l.bias = init::zeros_vec<T>(out_ch);
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = conv_transpose2d(x, weight, stride, pad);
    return bias.defined() ? add_channel_bias(y, bias) : y;
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".weight", weight);
    if (bias.defined()) pm.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct InstanceNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;

  static InstanceNormLayer create(int64_t channels) {
    InstanceNormLayer l;
    l.gamma = init::ones_vec<T>(channels);
    l.beta = init::zeros_vec<T>(channels);
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return instance_norm(x, gamma, beta); }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
  }
};

}  // namespace bigraph
