#pragma once

// Index-level brute-force reference for the bipartite reasoning block,
// written as plain loops over raw buffers so it shares nothing with the
// tensor engine it checks.

#include <cstdint>
#include <vector>

namespace bgr_oracle {

struct Dims {
  int64_t b, c, h, w, n, d;
};

struct BranchWeights {
  std::vector<double> theta;      // [n, c]
  std::vector<double> phi_reduce; // [d, c]
  std::vector<double> adjacency;  // [n, n]
  std::vector<double> edge;       // [d, d]
  std::vector<double> phi_back;   // [c, d]
};

struct Output {
  std::vector<double> projection;   // [b, n, l]
  std::vector<double> node_states;  // [b, n, d]
  std::vector<double> reasoned;     // [b, n, d]
  std::vector<double> updated;      // [b, c, h, w]
};

inline Output run(const Dims& dm, const BranchWeights& wts, const std::vector<double>& source,
                  const std::vector<double>& target) {
  int64_t l = dm.h * dm.w;
  Output out;
  out.projection.assign(static_cast<size_t>(dm.b * dm.n * l), 0.0);
  out.node_states.assign(static_cast<size_t>(dm.b * dm.n * dm.d), 0.0);
  out.reasoned.assign(static_cast<size_t>(dm.b * dm.n * dm.d), 0.0);
  out.updated.assign(static_cast<size_t>(dm.b * dm.c * l), 0.0);

  for (int64_t s = 0; s < dm.b; ++s) {
    // projection[n][p] = sum_c theta[n][c] * target[s][c][p]
    for (int64_t n = 0; n < dm.n; ++n)
      for (int64_t p = 0; p < l; ++p) {
        double acc = 0.0;
        for (int64_t c = 0; c < dm.c; ++c)
          acc += wts.theta[static_cast<size_t>(n * dm.c + c)] *
                 target[static_cast<size_t>((s * dm.c + c) * l + p)];
        out.projection[static_cast<size_t>((s * dm.n + n) * l + p)] = acc;
      }
    // reduced[d][p] = sum_c phi_reduce[d][c] * source[s][c][p]
    std::vector<double> reduced(static_cast<size_t>(dm.d * l), 0.0);
    for (int64_t d = 0; d < dm.d; ++d)
      for (int64_t p = 0; p < l; ++p) {
        double acc = 0.0;
        for (int64_t c = 0; c < dm.c; ++c)
          acc += wts.phi_reduce[static_cast<size_t>(d * dm.c + c)] *
                 source[static_cast<size_t>((s * dm.c + c) * l + p)];
        reduced[static_cast<size_t>(d * l + p)] = acc;
      }
    // node_states[n][d] = sum_p projection[n][p] * reduced[d][p]
    for (int64_t n = 0; n < dm.n; ++n)
      for (int64_t d = 0; d < dm.d; ++d) {
        double acc = 0.0;
        for (int64_t p = 0; p < l; ++p)
          acc += out.projection[static_cast<size_t>((s * dm.n + n) * l + p)] *
                 reduced[static_cast<size_t>(d * l + p)];
        out.node_states[static_cast<size_t>((s * dm.n + n) * dm.d + d)] = acc;
      }
    // reasoned = (I - A) V W
    std::vector<double> smoothed(static_cast<size_t>(dm.n * dm.d), 0.0);
    for (int64_t i = 0; i < dm.n; ++i)
      for (int64_t d = 0; d < dm.d; ++d) {
        double acc = 0.0;
        for (int64_t j = 0; j < dm.n; ++j) {
          double lap = (i == j ? 1.0 : 0.0) - wts.adjacency[static_cast<size_t>(i * dm.n + j)];
          acc += lap * out.node_states[static_cast<size_t>((s * dm.n + j) * dm.d + d)];
        }
        smoothed[static_cast<size_t>(i * dm.d + d)] = acc;
      }
    for (int64_t i = 0; i < dm.n; ++i)
      for (int64_t d = 0; d < dm.d; ++d) {
        double acc = 0.0;
        for (int64_t e = 0; e < dm.d; ++e)
          acc += smoothed[static_cast<size_t>(i * dm.d + e)] *
                 wts.edge[static_cast<size_t>(e * dm.d + d)];
        out.reasoned[static_cast<size_t>((s * dm.n + i) * dm.d + d)] = acc;
      }
    // updated[c][p] = sum_d phi_back[c][d] * (sum_n projection[n][p] * reasoned[n][d]) + source
    for (int64_t p = 0; p < l; ++p) {
      std::vector<double> back(static_cast<size_t>(dm.d), 0.0);
      for (int64_t d = 0; d < dm.d; ++d) {
        double acc = 0.0;
        for (int64_t n = 0; n < dm.n; ++n)
          acc += out.projection[static_cast<size_t>((s * dm.n + n) * l + p)] *
                 out.reasoned[static_cast<size_t>((s * dm.n + n) * dm.d + d)];
        back[static_cast<size_t>(d)] = acc;
      }
      for (int64_t c = 0; c < dm.c; ++c) {
        double acc = 0.0;
        for (int64_t d = 0; d < dm.d; ++d)
          acc += wts.phi_back[static_cast<size_t>(c * dm.d + d)] * back[static_cast<size_t>(d)];
        out.updated[static_cast<size_t>((s * dm.c + c) * l + p)] =
            acc + source[static_cast<size_t>((s * dm.c + c) * l + p)];
      }
    }
  }
  return out;
}

}  // namespace bgr_oracle
