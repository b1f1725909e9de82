#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bigraph/ops.hpp"
#include "bigraph/rng.hpp"
#include "bigraph/tensor.hpp"

namespace gradcheck {

using bigraph::Rng;
using bigraph::Shape;
using bigraph::Tensor;

inline Tensor<double> rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                                  bool requires_grad = true) {
  std::vector<double> v(static_cast<size_t>(bigraph::shape_numel(shape)));
  for (auto& e : v) e = rng.uniform(lo, hi);
  return Tensor<double>::from_values(std::move(shape), std::move(v), requires_grad);
}

// uniform in [-1,1] but pushed away from 0, for ops with kinks there
inline Tensor<double> rand_tensor_offset(Rng& rng, Shape shape, double margin = 0.1,
                                         bool requires_grad = true) {
  std::vector<double> v(static_cast<size_t>(bigraph::shape_numel(shape)));
  for (auto& e : v) {
    double x = rng.uniform(-1.0, 1.0);
    e = x >= 0 ? margin + x * (1.0 - margin) : -margin + x * (1.0 - margin);
  }
  return Tensor<double>::from_values(std::move(shape), std::move(v), requires_grad);
}

struct Result {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

// Central finite differences against the analytic gradient of `loss_fn`,
// which must rebuild the scalar loss from the current parameter values.
inline Result check_param(Tensor<double>& param, const std::function<Tensor<double>()>& loss_fn,
                          double eps = 1e-5, int64_t max_elems = -1) {
  param.ensure_grad();
  param.zero_grad();
  auto loss = loss_fn();
  bigraph::backward(loss);
  std::vector<double> analytic(param.grad().begin(), param.grad().end());

  int64_t n = param.numel();
  std::vector<int64_t> idx;
  if (max_elems < 0 || max_elems >= n) {
    idx.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  } else {
    for (int64_t k = 0; k < max_elems; ++k) idx.push_back((k * n) / max_elems);
  }

  Result r;
  auto vals = param.values_mut();
  for (int64_t i : idx) {
    double keep = vals[static_cast<size_t>(i)];
    vals[static_cast<size_t>(i)] = keep + eps;
    double lp = loss_fn().item();
    vals[static_cast<size_t>(i)] = keep - eps;
    double lm = loss_fn().item();
    vals[static_cast<size_t>(i)] = keep;
    double fd = (lp - lm) / (2.0 * eps);
    double a = analytic[static_cast<size_t>(i)];
    double rel = std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-4);
    r.max_rel_err = std::max(r.max_rel_err, rel);
    ++r.checked;
  }
  return r;
}

inline Result check_params(std::vector<Tensor<double>> params,
                           const std::function<Tensor<double>()>& loss_fn, double eps = 1e-5,
                           int64_t max_elems_per_tensor = -1) {
  Result worst;
  for (auto& p : params) {
    Result r = check_param(p, loss_fn, eps, max_elems_per_tensor);
    worst.max_rel_err = std::max(worst.max_rel_err, r.max_rel_err);
    worst.checked += r.checked;
  }
  return worst;
}

// Weighted sum against a fixed random direction turns any tensor-valued op
// into a scalar loss that exercises every output element.
inline std::function<Tensor<double>()> project_loss(
    const std::function<Tensor<double>()>& forward, Rng& rng) {
  auto probe = std::make_shared<Tensor<double>>();
  auto seed = rng.next_u64();
  return [forward, probe, seed]() {
    auto out = forward();
    if (!probe->defined()) {
      Rng local(seed);
      *probe = rand_tensor(local, out.shape(), -1.0, 1.0, false);
    }
    return bigraph::sum_all(bigraph::mul(out, *probe));
  };
}

}  // namespace gradcheck
