#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "bigraph/tensor.hpp"
#include "bigraph/threading.hpp"

namespace bigraph {

namespace detail {

inline int64_t ceil_div(int64_t a, int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

inline int64_t floor_div(int64_t a, int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// elementwise loops below this size are cheaper run serially
constexpr int64_t kParallelCutoff = 1 << 15;

template <typename F>
void elementwise_for(int64_t n, F&& fn) {
  if (n < kParallelCutoff) {
    fn(static_cast<int64_t>(0), n);
    return;
  }
  parallel_for(n, fn);
}

// Valid output range [o0,o1) so that o*stride + k - pad lands in [0,extent).
inline std::pair<int64_t, int64_t> conv_span(int64_t out_extent, int64_t in_extent, int64_t stride,
                                             int64_t k, int64_t pad) {
  int64_t o0 = std::max<int64_t>(0, ceil_div(pad - k, stride));
  int64_t o1 = std::min<int64_t>(out_extent, floor_div(in_extent - 1 + pad - k, stride) + 1);
  return {o0, o1};
}

template <typename T>
typename Tensor<T>::NodePtr make_node(Shape shape, const char* op,
                                      std::vector<typename Tensor<T>::NodePtr> parents) {
  auto n = std::make_shared<typename Tensor<T>::Node>();
  n->values.assign(static_cast<size_t>(shape_numel(shape)), T(0));
  n->shape = std::move(shape);
  n->op = op;
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  return n;
}

// C (m x n) += A (m x k) * B (k x n), all row-major. Tiled over rows and
// columns so the hot C tile stays cache-resident; each element still
// accumulates over kk in increasing order, so results do not depend on the
// tiling (or the thread count in gemm_acc_parallel).
template <typename T>
void gemm_acc_rows(const T* a, const T* b, T* c, int64_t i0, int64_t i1, int64_t k, int64_t n) {
  constexpr int64_t kColTile = 512;
  for (int64_t j0 = 0; j0 < n; j0 += kColTile) {
    int64_t j1 = std::min<int64_t>(n, j0 + kColTile);
    for (int64_t kk = 0; kk < k; ++kk) {
      const T* brow = b + kk * n;
      for (int64_t i = i0; i < i1; ++i) {
        T av = a[i * k + kk];
        T* crow = c + i * n;
        for (int64_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void gemm_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  constexpr int64_t kRowTile = 48;
  for (int64_t i0 = 0; i0 < m; i0 += kRowTile)
    gemm_acc_rows(a, b, c, i0, std::min<int64_t>(m, i0 + kRowTile), k, n);
}

template <typename T>
void gemm_acc_parallel(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  int64_t want = std::max<int64_t>(1, (m + max_threads() - 1) / max_threads());
  int64_t block = std::min<int64_t>(48, want);
  int64_t blocks = (m + block - 1) / block;
  parallel_for(blocks, [&](int64_t lo, int64_t hi) {
    for (int64_t bi = lo; bi < hi; ++bi)
      gemm_acc_rows(a, b, c, bi * block, std::min<int64_t>(m, (bi + 1) * block), k, n);
  });
}

// Dot product with eight independent accumulator lanes. The summation order
// is fixed (lane-major), so results are deterministic, and the independent
// lanes let the compiler vectorize what a strict left-to-right sum cannot.
template <typename T>
T dot_lanes(const T* a, const T* b, int64_t k) {
  T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  int64_t k8 = k - (k % 8);
  for (int64_t i = 0; i < k8; i += 8)
    for (int64_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  T tail = T(0);
  for (int64_t i = k8; i < k; ++i) tail += a[i] * b[i];
  return (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))) +
         tail;
}

// C (m x n) += A (m x k) * B^t, with B stored row-major (n x k); the inner
// dot products run over contiguous rows of both operands.
template <typename T>
void gemm_abt_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += dot_lanes(arow, b + j * k, k);
  }
}

template <typename T>
void transpose_copy(const T* src, int64_t rows, int64_t cols, T* dst) {
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
  T ax = x < T(0) ? -x : x;
  T mx = x > T(0) ? x : T(0);
  return mx + std::log1p(std::exp(-ax));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  BG_CHECK_DIM(a.rank() == 2 && b.rank() == 2,
               "matmul: expects rank-2 operands, got " << shape_str(a.shape()) << " x "
                                                       << shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  BG_CHECK_DIM(k == k2, "matmul: inner extents disagree: " << shape_str(a.shape()) << " x "
                                                           << shape_str(b.shape()));
  auto node = detail::make_node<T>({m, n}, "matmul", {a.node(), b.node()});
  const T* av = a.values().data();
  const T* bv = b.values().data();
  detail::gemm_acc(av, bv, node->values.data(), m, k, n);
  if (node->requires_grad) {
    node->backprop = [m, k, n](typename Tensor<T>::Node& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const T* dc = self.grad.data();
      if (pa->requires_grad) {
        pa->ensure_grad();
        const T* bv = pb->values.data();
        T* da = pa->grad.data();
        // dA = dC * B^t
        for (int64_t i = 0; i < m; ++i) {
          const T* dcrow = dc + i * n;
          T* darow = da + i * k;
          for (int64_t kk = 0; kk < k; ++kk)
            darow[kk] += detail::dot_lanes(dcrow, bv + kk * n, n);
        }
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        const T* av2 = pa->values.data();
        T* db = pb->grad.data();
        // dB = A^t * dC
        for (int64_t i = 0; i < m; ++i) {
          const T* arow = av2 + i * k;
          const T* dcrow = dc + i * n;
          for (int64_t kk = 0; kk < k; ++kk) {
            T avv = arow[kk];
            T* dbrow = db + kk * n;
            for (int64_t j = 0; j < n; ++j) dbrow[j] += avv * dcrow[j];
          }
        }
      }
    };
  }
  return Tensor<T>(node);
}

// Batched matrix product with optional per-sample transposes.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false) {
  BG_CHECK_DIM(a.rank() == 3 && b.rank() == 3,
               "bmm: expects rank-3 operands, got " << shape_str(a.shape()) << " x "
                                                    << shape_str(b.shape()));
  BG_CHECK_DIM(a.dim(0) == b.dim(0), "bmm: batch extents disagree: " << shape_str(a.shape())
                                                                     << " x " << shape_str(b.shape()));
  int64_t batch = a.dim(0);
  int64_t a0 = a.dim(1), a1 = a.dim(2), b0 = b.dim(1), b1 = b.dim(2);
  int64_t m = trans_a ? a1 : a0;
  int64_t k = trans_a ? a0 : a1;
  int64_t k2 = trans_b ? b1 : b0;
  int64_t n = trans_b ? b0 : b1;
  BG_CHECK_DIM(k == k2, "bmm: inner extents disagree: " << shape_str(a.shape()) << " x "
                                                        << shape_str(b.shape()));
  auto node = detail::make_node<T>({batch, m, n}, "bmm", {a.node(), b.node()});
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* cv = node->values.data();
  parallel_for(batch, [&](int64_t lo, int64_t hi) {
    std::vector<T> ta, tb;
    for (int64_t s = lo; s < hi; ++s) {
      const T* as = av + s * a0 * a1;
      const T* bs = bv + s * b0 * b1;
      if (trans_a) {
        ta.assign(static_cast<size_t>(a0 * a1), T(0));
        detail::transpose_copy(as, a0, a1, ta.data());
        as = ta.data();
      }
      if (trans_b) {
        tb.assign(static_cast<size_t>(b0 * b1), T(0));
        detail::transpose_copy(bs, b0, b1, tb.data());
        bs = tb.data();
      }
      detail::gemm_acc(as, bs, cv + s * m * n, m, k, n);
    }
  });
  if (node->requires_grad) {
    node->backprop = [batch, a0, a1, b0, b1, m, k, n, trans_a,
                      trans_b](typename Tensor<T>::Node& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) pa->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      const T* dc = self.grad.data();
      const T* avp = pa->values.data();
      const T* bvp = pb->values.data();
      T* dap = pa->requires_grad ? pa->grad.data() : nullptr;
      T* dbp = pb->requires_grad ? pb->grad.data() : nullptr;
      bool need_a = dap != nullptr, need_b = dbp != nullptr;
      parallel_for(batch, [&](int64_t lo, int64_t hi) {
        std::vector<T> effa, effb, deff, scratch;
        for (int64_t s = lo; s < hi; ++s) {
          const T* as = avp + s * a0 * a1;
          const T* bs = bvp + s * b0 * b1;
          const T* dcs = dc + s * m * n;
          // materialize effective operands
          const T* ea = as;
          const T* eb = bs;
          if (trans_a) {
            effa.assign(static_cast<size_t>(a0 * a1), T(0));
            detail::transpose_copy(as, a0, a1, effa.data());
            ea = effa.data();
          }
          if (trans_b) {
            effb.assign(static_cast<size_t>(b0 * b1), T(0));
            detail::transpose_copy(bs, b0, b1, effb.data());
            eb = effb.data();
          }
          if (need_a) {
            // dEffA (m x k) = dC (m x n) * effB^t (n x k)
            deff.assign(static_cast<size_t>(m * k), T(0));
            for (int64_t i = 0; i < m; ++i) {
              const T* dcrow = dcs + i * n;
              T* drow = deff.data() + i * k;
              for (int64_t kk = 0; kk < k; ++kk)
                drow[kk] += detail::dot_lanes(dcrow, eb + kk * n, n);
            }
            T* das = dap + s * a0 * a1;
            if (trans_a) {
              // dA_stored(kk,i) += dEffA(i,kk)
              for (int64_t i = 0; i < m; ++i)
                for (int64_t kk = 0; kk < k; ++kk) das[kk * a1 + i] += deff[i * k + kk];
            } else {
              for (int64_t i = 0; i < m * k; ++i) das[i] += deff[i];
            }
          }
          if (need_b) {
            // dEffB (k x n) = effA^t (k x m) * dC (m x n)
            scratch.assign(static_cast<size_t>(k * n), T(0));
            for (int64_t i = 0; i < m; ++i) {
              const T* arow = ea + i * k;
              const T* dcrow = dcs + i * n;
              for (int64_t kk = 0; kk < k; ++kk) {
                T avv = arow[kk];
                T* srow = scratch.data() + kk * n;
                for (int64_t j = 0; j < n; ++j) srow[j] += avv * dcrow[j];
              }
            }
            T* dbs = dbp + s * b0 * b1;
            if (trans_b) {
              // dB_stored(j,kk) += dEffB(kk,j)
              for (int64_t kk = 0; kk < k; ++kk)
                for (int64_t j = 0; j < n; ++j) dbs[j * b1 + kk] += scratch[kk * n + j];
            } else {
              for (int64_t i = 0; i < k * n; ++i) dbs[i] += scratch[i];
            }
          }
        }
      });
    };
  }
  return Tensor<T>(node);
}

// ---------------------------------------------------------------------------
// convolution (cross-correlation convention), im2col + gemm
// ---------------------------------------------------------------------------

namespace detail {

struct ConvDims {
  int64_t B, Ci, H, W, Co, KH, KW, OH, OW;
  int stride, pad;
  int64_t patch() const { return Ci * KH * KW; }
  int64_t out_plane() const { return OH * OW; }
  bool is_pointwise() const { return KH == 1 && KW == 1 && stride == 1 && pad == 0; }
};

// Patch matrix [Ci*KH*KW, OH*OW] for one sample.
template <typename T>
void im2col(const ConvDims& d, const T* x, T* col) {
  int64_t ohw = d.out_plane();
  int64_t row = 0;
  for (int64_t ci = 0; ci < d.Ci; ++ci) {
    const T* xc = x + ci * d.H * d.W;
    for (int64_t ky = 0; ky < d.KH; ++ky) {
      for (int64_t kx = 0; kx < d.KW; ++kx, ++row) {
        T* dst = col + row * ohw;
        auto [ox0, ox1] = conv_span(d.OW, d.W, d.stride, kx, d.pad);
        for (int64_t oy = 0; oy < d.OH; ++oy) {
          int64_t iy = oy * d.stride + ky - d.pad;
          T* drow = dst + oy * d.OW;
          if (iy < 0 || iy >= d.H) {
            for (int64_t ox = 0; ox < d.OW; ++ox) drow[ox] = T(0);
            continue;
          }
          const T* xrow = xc + iy * d.W;
          for (int64_t ox = 0; ox < ox0; ++ox) drow[ox] = T(0);
          if (d.stride == 1) {
            const T* src = xrow + (kx - d.pad);
            for (int64_t ox = ox0; ox < ox1; ++ox) drow[ox] = src[ox];
          } else {
            for (int64_t ox = ox0; ox < ox1; ++ox)
              drow[ox] = xrow[ox * d.stride + kx - d.pad];
          }
          for (int64_t ox = ox1; ox < d.OW; ++ox) drow[ox] = T(0);
        }
      }
    }
  }
}

// Transposed patch matrix [OH*OW, Ci*KH*KW] for one sample; feeds the
// weight-gradient gemm with unit-stride streams.
template <typename T>
void im2col_t(const ConvDims& d, const T* x, T* colt) {
  int64_t patch = d.patch();
  for (int64_t oy = 0; oy < d.OH; ++oy) {
    for (int64_t ox = 0; ox < d.OW; ++ox) {
      T* dst = colt + (oy * d.OW + ox) * patch;
      int64_t col = 0;
      for (int64_t ci = 0; ci < d.Ci; ++ci) {
        const T* xc = x + ci * d.H * d.W;
        for (int64_t ky = 0; ky < d.KH; ++ky) {
          int64_t iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.H) {
            for (int64_t kx = 0; kx < d.KW; ++kx) dst[col++] = T(0);
            continue;
          }
          const T* xrow = xc + iy * d.W;
          for (int64_t kx = 0; kx < d.KW; ++kx) {
            int64_t ix = ox * d.stride + kx - d.pad;
            dst[col++] = (ix < 0 || ix >= d.W) ? T(0) : xrow[ix];
          }
        }
      }
    }
  }
}

// Scatter-add of a patch-matrix gradient back onto the input gradient.
template <typename T>
void col2im_acc(const ConvDims& d, const T* col, T* dx) {
  int64_t ohw = d.out_plane();
  int64_t row = 0;
  for (int64_t ci = 0; ci < d.Ci; ++ci) {
    T* dxc = dx + ci * d.H * d.W;
    for (int64_t ky = 0; ky < d.KH; ++ky) {
      for (int64_t kx = 0; kx < d.KW; ++kx, ++row) {
        const T* src = col + row * ohw;
        auto [oy0, oy1] = conv_span(d.OH, d.H, d.stride, ky, d.pad);
        auto [ox0, ox1] = conv_span(d.OW, d.W, d.stride, kx, d.pad);
        for (int64_t oy = oy0; oy < oy1; ++oy) {
          T* dxrow = dxc + (oy * d.stride + ky - d.pad) * d.W + (kx - d.pad);
          const T* srow = src + oy * d.OW;
          if (d.stride == 1) {
            for (int64_t ox = ox0; ox < ox1; ++ox) dxrow[ox] += srow[ox];
          } else {
            for (int64_t ox = ox0; ox < ox1; ++ox) dxrow[ox * d.stride] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride = 1, int pad = 0) {
  BG_CHECK_DIM(x.rank() == 4 && w.rank() == 4,
               "conv2d: expects x[b,c,h,w] and kernel[c',c,kh,kw], got "
                   << shape_str(x.shape()) << " and " << shape_str(w.shape()));
  int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Co = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  BG_CHECK_DIM(w.dim(1) == Ci, "conv2d: channel mismatch: input " << shape_str(x.shape())
                                                                  << " vs kernel " << shape_str(w.shape()));
  BG_CHECK_CFG(stride >= 1, "conv2d: stride must be positive, got " << stride);
  BG_CHECK_CFG((H + 2 * pad - KH) % stride == 0 && (W + 2 * pad - KW) % stride == 0 &&
                   H + 2 * pad >= KH && W + 2 * pad >= KW,
               "conv2d: non-integral output size for input " << H << "x" << W << ", kernel " << KH
                                                             << "x" << KW << ", stride " << stride
                                                             << ", pad " << pad);
  detail::ConvDims dm{B, Ci, H, W, Co, KH, KW, (H + 2 * pad - KH) / stride + 1,
                      (W + 2 * pad - KW) / stride + 1, stride, pad};
  auto node = detail::make_node<T>({B, Co, dm.OH, dm.OW}, "conv2d", {x.node(), w.node()});
  const T* xv = x.values().data();
  const T* wv = w.values().data();  // contiguous [Co, Ci*KH*KW]
  T* ov = node->values.data();
  int64_t patch = dm.patch(), ohw = dm.out_plane();
  parallel_for(B, [&](int64_t lo, int64_t hi) {
    std::vector<T> col;
    if (!dm.is_pointwise()) col.resize(static_cast<size_t>(patch * ohw));
    for (int64_t b = lo; b < hi; ++b) {
      const T* src = xv + b * Ci * H * W;
      if (!dm.is_pointwise()) {
        detail::im2col(dm, src, col.data());
        src = col.data();
      }
      detail::gemm_acc(wv, src, ov + b * Co * ohw, Co, patch, ohw);
    }
  });
  if (node->requires_grad) {
    node->backprop = [dm](typename Tensor<T>::Node& self) {
      auto& px = self.parents[0];
      auto& pw = self.parents[1];
      const T* dout = self.grad.data();
      int64_t patch = dm.patch(), ohw = dm.out_plane();
      if (px->requires_grad) {
        px->ensure_grad();
        const T* wvp = pw->values.data();
        // w^t, [patch, Co]
        std::vector<T> wt(static_cast<size_t>(patch * dm.Co));
        detail::transpose_copy(wvp, dm.Co, patch, wt.data());
        T* dx = px->grad.data();
        if (dm.is_pointwise()) {
          parallel_for(dm.B, [&](int64_t lo, int64_t hi) {
            for (int64_t b = lo; b < hi; ++b)
              detail::gemm_acc(wt.data(), dout + b * dm.Co * ohw, dx + b * patch * ohw, patch,
                               dm.Co, ohw);
          });
        } else {
          std::vector<T> colgrad(static_cast<size_t>(patch * ohw));
          for (int64_t b = 0; b < dm.B; ++b) {
            std::fill(colgrad.begin(), colgrad.end(), T(0));
            detail::gemm_acc_parallel(wt.data(), dout + b * dm.Co * ohw, colgrad.data(), patch,
                                      dm.Co, ohw);
            detail::col2im_acc(dm, colgrad.data(), dx + b * dm.Ci * dm.H * dm.W);
          }
        }
      }
      if (pw->requires_grad) {
        pw->ensure_grad();
        const T* xvp = px->values.data();
        T* dw = pw->grad.data();
        if (dm.is_pointwise()) {
          // dw (Co x Ci) += dOut (Co x ohw) * x^t (ohw x Ci)
          std::vector<T> xt(static_cast<size_t>(ohw * patch));
          for (int64_t b = 0; b < dm.B; ++b) {
            detail::transpose_copy(xvp + b * patch * ohw, patch, ohw, xt.data());
            detail::gemm_acc_parallel(dout + b * dm.Co * ohw, xt.data(), dw, dm.Co, ohw, patch);
          }
        } else {
          std::vector<T> colt(static_cast<size_t>(ohw * patch));
          for (int64_t b = 0; b < dm.B; ++b) {
            detail::im2col_t(dm, xvp + b * dm.Ci * dm.H * dm.W, colt.data());
            detail::gemm_acc_parallel(dout + b * dm.Co * ohw, colt.data(), dw, dm.Co, ohw, patch);
          }
        }
      }
    };
  }
  return Tensor<T>(node);
}

// Transposed convolution; weight layout [c_in, c_out, kh, kw],
// output extent (in-1)*stride - 2*pad + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, int stride = 1, int pad = 0) {
  BG_CHECK_DIM(x.rank() == 4 && w.rank() == 4,
               "conv_transpose2d: expects x[b,c,h,w] and kernel[c,c',kh,kw], got "
                   << shape_str(x.shape()) << " and " << shape_str(w.shape()));
  int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Co = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  BG_CHECK_DIM(w.dim(0) == Ci, "conv_transpose2d: channel mismatch: input "
                                   << shape_str(x.shape()) << " vs kernel " << shape_str(w.shape()));
  BG_CHECK_CFG(stride >= 1, "conv_transpose2d: stride must be positive, got " << stride);
  int64_t OH = (H - 1) * stride - 2 * pad + KH;
  int64_t OW = (W - 1) * stride - 2 * pad + KW;
  BG_CHECK_CFG(OH >= 1 && OW >= 1, "conv_transpose2d: empty output for input "
                                       << H << "x" << W << ", kernel " << KH << "x" << KW);
  auto node = detail::make_node<T>({B, Co, OH, OW}, "conv_transpose2d", {x.node(), w.node()});
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  T* ov = node->values.data();
  parallel_for(B * Co, [&](int64_t lo, int64_t hi) {
    for (int64_t bc = lo; bc < hi; ++bc) {
      int64_t b = bc / Co, co = bc % Co;
      T* out = ov + bc * OH * OW;
      for (int64_t ci = 0; ci < Ci; ++ci) {
        const T* xc = xv + (b * Ci + ci) * H * W;
        const T* wk = wv + (ci * Co + co) * KH * KW;
        for (int64_t ky = 0; ky < KH; ++ky) {
          auto [iy0, iy1] = detail::conv_span(H, OH, stride, ky, pad);
          for (int64_t kx = 0; kx < KW; ++kx) {
            auto [ix0, ix1] = detail::conv_span(W, OW, stride, kx, pad);
            T wvv = wk[ky * KW + kx];
            for (int64_t iy = iy0; iy < iy1; ++iy) {
              const T* xrow = xc + iy * W;
              T* orow = out + (iy * stride + ky - pad) * OW + (kx - pad);
              for (int64_t ix = ix0; ix < ix1; ++ix) orow[ix * stride] += wvv * xrow[ix];
            }
          }
        }
      }
    }
  });
  if (node->requires_grad) {
    node->backprop = [B, Ci, H, W, Co, KH, KW, OH, OW, stride, pad](typename Tensor<T>::Node& self) {
      auto& px = self.parents[0];
      auto& pw = self.parents[1];
      const T* dout = self.grad.data();
      if (px->requires_grad) {
        px->ensure_grad();
        const T* wvp = pw->values.data();
        T* dx = px->grad.data();
        parallel_for(B * Ci, [&](int64_t lo, int64_t hi) {
          for (int64_t bc = lo; bc < hi; ++bc) {
            int64_t b = bc / Ci, ci = bc % Ci;
            T* dxc = dx + bc * H * W;
            for (int64_t co = 0; co < Co; ++co) {
              const T* dob = dout + (b * Co + co) * OH * OW;
              const T* wk = wvp + (ci * Co + co) * KH * KW;
              for (int64_t ky = 0; ky < KH; ++ky) {
                auto [iy0, iy1] = detail::conv_span(H, OH, stride, ky, pad);
                for (int64_t kx = 0; kx < KW; ++kx) {
                  auto [ix0, ix1] = detail::conv_span(W, OW, stride, kx, pad);
                  T wvv = wk[ky * KW + kx];
                  for (int64_t iy = iy0; iy < iy1; ++iy) {
                    T* dxrow = dxc + iy * W;
                    const T* dorow = dob + (iy * stride + ky - pad) * OW + (kx - pad);
                    for (int64_t ix = ix0; ix < ix1; ++ix) dxrow[ix] += wvv * dorow[ix * stride];
                  }
                }
              }
            }
          }
        });
      }
      if (pw->requires_grad) {
        pw->ensure_grad();
        const T* xvp = px->values.data();
        T* dw = pw->grad.data();
        parallel_for(Ci * Co, [&](int64_t lo, int64_t hi) {
          for (int64_t cc = lo; cc < hi; ++cc) {
            int64_t ci = cc / Co, co = cc % Co;
            T* dwk = dw + cc * KH * KW;
            for (int64_t ky = 0; ky < KH; ++ky) {
              auto [iy0, iy1] = detail::conv_span(H, OH, stride, ky, pad);
              for (int64_t kx = 0; kx < KW; ++kx) {
                auto [ix0, ix1] = detail::conv_span(W, OW, stride, kx, pad);
                T acc = T(0);
                for (int64_t b = 0; b < B; ++b) {
                  const T* xc = xvp + (b * Ci + ci) * H * W;
                  const T* dob = dout + (b * Co + co) * OH * OW;
                  for (int64_t iy = iy0; iy < iy1; ++iy) {
                    const T* xrow = xc + iy * W;
                    const T* dorow = dob + (iy * stride + ky - pad) * OW + (kx - pad);
                    for (int64_t ix = ix0; ix < ix1; ++ix) acc += xrow[ix] * dorow[ix * stride];
                  }
                }
                dwk[ky * KW + kx] += acc;
              }
            }
          }
        });
      }
    };
  }
  return Tensor<T>(node);
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  BG_CHECK_DIM(x.rank() == 4 && bias.rank() == 1 && bias.dim(0) == x.dim(1),
               "add_channel_bias: bias " << shape_str(bias.shape()) << " does not match input "
                                         << shape_str(x.shape()));
  int64_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  auto node = detail::make_node<T>(x.shape(), "add_channel_bias", {x.node(), bias.node()});
  const T* xv = x.values().data();
  const T* bv = bias.values().data();
  T* ov = node->values.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      T add = bv[c];
      const T* xr = xv + (b * C + c) * plane;
      T* orow = ov + (b * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) orow[i] = xr[i] + add;
    }
  if (node->requires_grad) {
    node->backprop = [B, C, plane](typename Tensor<T>::Node& self) {
      auto& px = self.parents[0];
      auto& pb = self.parents[1];
      const T* dy = self.grad.data();
      if (px->requires_grad) {
        px->ensure_grad();
        T* dx = px->grad.data();
        int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) dx[i] += dy[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        T* db = pb->grad.data();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c) {
            const T* dr = dy + (b * C + c) * plane;
            T acc = T(0);
            for (int64_t i = 0; i < plane; ++i) acc += dr[i];
            db[c] += acc;
          }
      }
    };
  }
  return Tensor<T>(node);
}

// ---------------------------------------------------------------------------
// element-wise
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  BG_CHECK_DIM(a.shape() == b.shape(),
               op << ": shape mismatch: " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  auto node = detail::make_node<T>(a.shape(), "add", {a.node(), b.node()});
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* ov = node->values.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  if (node->requires_grad) {
    node->backprop = [](typename Tensor<T>::Node& self) {
      const T* dy = self.grad.data();
      int64_t n = self.numel();
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        T* d = p->grad.data();
        for (int64_t i = 0; i < n; ++i) d[i] += dy[i];
      }
    };
  }
  return Tensor<T>(node);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  auto node = detail::make_node<T>(a.shape(), "sub", {a.node(), b.node()});
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* ov = node->values.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
  if (node->requires_grad) {
    node->backprop = [](typename Tensor<T>::Node& self) {
      const T* dy = self.grad.data();
      int64_t n = self.numel();
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        T* d = pa->grad.data();
        for (int64_t i = 0; i < n; ++i) d[i] += dy[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        T* d = pb->grad.data();
        for (int64_t i = 0; i < n; ++i) d[i] -= dy[i];
      }
    };
  }
  return Tensor<T>(node);
}

// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  auto node = detail::make_node<T>(a.shape(), "mul", {a.node(), b.node()});
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* ov = node->values.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  if (node->requires_grad) {
    node->backprop = [](typename Tensor<T>::Node& self) {
      const T* dy = self.grad.data();
      int64_t n = self.numel();
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        T* d = pa->grad.data();
        const T* bv = pb->values.data();
        for (int64_t i = 0; i < n; ++i) d[i] += dy[i] * bv[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        T* d = pb->grad.data();
        const T* av = pa->values.data();
        for (int64_t i = 0; i < n; ++i) d[i] += dy[i] * av[i];
      }
    };
  }
  return Tensor<T>(node);
}

// y = scale * x + shift
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
  auto node = detail::make_node<T>(x.shape(), "affine", {x.node()});
  const T* xv = x.values().data();
  T* ov = node->values.data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = scale * xv[i] + shift;
  if (node->requires_grad) {
    node->backprop = [scale](typename Tensor<T>::Node& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      const T* dy = self.grad.data();
      T* d = p->grad.data();
      int64_t n = self.numel();
      for (int64_t i = 0; i < n; ++i) d[i] += scale * dy[i];
    };
  }
  return Tensor<T>(node);
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& x, const char* name, Fwd fwd, Bwd bwd_factor) {
  auto node = make_node<T>(x.shape(), name, {x.node()});
  const T* xv = x.values().data();
  T* ov = node->values.data();
  elementwise_for(x.numel(), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) ov[i] = fwd(xv[i]);
  });
  if (node->requires_grad) {
    node->backprop = [bwd_factor](typename Tensor<T>::Node& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      const T* dy = self.grad.data();
      const T* xv = p->values.data();
      const T* yv = self.values.data();
      T* d = p->grad.data();
      elementwise_for(self.numel(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) d[i] += dy[i] * bwd_factor(xv[i], yv[i]);
      });
    };
  }
  return Tensor<T>(node);
}

}  // namespace detail

// 1/(1+e^-x); saturates, never overflows to NaN.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op(
      x, "sigmoid", [](T v) { return detail::stable_sigmoid(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
  return detail::unary_op(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_op(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T xv, T) { return xv > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return detail::unary_op(
      x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T xv, T) { return xv > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary_op(
      x, "softplus", [](T v) { return detail::stable_softplus(v); },
      [](T xv, T) { return detail::stable_sigmoid(xv); });
}

template <typename T>
Tensor<T> abs_val(const Tensor<T>& x) {
  return detail::unary_op(
      x, "abs", [](T v) { return v < T(0) ? -v : v; },
      [](T xv, T) { return xv > T(0) ? T(1) : (xv < T(0) ? T(-1) : T(0)); });
}

// ---------------------------------------------------------------------------
// layout
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  BG_CHECK_DIM(!parts.empty(), "concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  BG_CHECK_DIM(s0.size() == 4, "concat_channels: expects rank-4 inputs, got " << shape_str(s0));
  int64_t B = s0[0], H = s0[2], W = s0[3];
  int64_t Ctot = 0;
  std::vector<typename Tensor<T>::NodePtr> parents;
  for (const auto& p : parts) {
    BG_CHECK_DIM(p.rank() == 4 && p.dim(0) == B && p.dim(2) == H && p.dim(3) == W,
                 "concat_channels: incompatible input " << shape_str(p.shape()) << " vs "
                                                        << shape_str(s0));
    Ctot += p.dim(1);
    parents.push_back(p.node());
  }
  auto node = detail::make_node<T>({B, Ctot, H, W}, "concat_channels", std::move(parents));
  int64_t plane = H * W;
  T* ov = node->values.data();
  for (int64_t b = 0; b < B; ++b) {
    int64_t coff = 0;
    for (const auto& p : parts) {
      int64_t c = p.dim(1);
      const T* pv = p.values().data() + b * c * plane;
      T* dst = ov + (b * Ctot + coff) * plane;
      for (int64_t i = 0; i < c * plane; ++i) dst[i] = pv[i];
      coff += c;
    }
  }
  if (node->requires_grad) {
    node->backprop = [B, Ctot, plane](typename Tensor<T>::Node& self) {
      const T* dy = self.grad.data();
      int64_t coff = 0;
      for (auto& p : self.parents) {
        int64_t c = p->shape[1];
        if (p->requires_grad) {
          p->ensure_grad();
          for (int64_t b = 0; b < B; ++b) {
            const T* src = dy + (b * Ctot + coff) * plane;
            T* dst = p->grad.data() + b * c * plane;
            for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
        coff += c;
      }
    };
  }
  return Tensor<T>(node);
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t start, int64_t count) {
  BG_CHECK_DIM(x.rank() == 4, "slice_channels: expects rank-4 input, got " << shape_str(x.shape()));
  int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  BG_CHECK_DIM(start >= 0 && count >= 1 && start + count <= C,
               "slice_channels: range [" << start << "," << start + count << ") out of " << C
                                         << " channels");
  auto node = detail::make_node<T>({B, count, H, W}, "slice_channels", {x.node()});
  int64_t plane = H * W;
  const T* xv = x.values().data();
  T* ov = node->values.data();
  for (int64_t b = 0; b < B; ++b) {
    const T* src = xv + (b * C + start) * plane;
    T* dst = ov + b * count * plane;
    for (int64_t i = 0; i < count * plane; ++i) dst[i] = src[i];
  }
  if (node->requires_grad) {
    node->backprop = [B, C, start, count, plane](typename Tensor<T>::Node& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      const T* dy = self.grad.data();
      for (int64_t b = 0; b < B; ++b) {
        const T* src = dy + b * count * plane;
        T* dst = p->grad.data() + (b * C + start) * plane;
        for (int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
      }
    };
  }
  return Tensor<T>(node);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  BG_CHECK_DIM(shape_numel(shape) == x.numel(), "reshape: cannot view " << shape_str(x.shape())
                                                                        << " as " << shape_str(shape));
  auto node = detail::make_node<T>(std::move(shape), "reshape", {x.node()});
  node->values = std::vector<T>(x.values().begin(), x.values().end());
  if (node->requires_grad) {
    node->backprop = [](typename Tensor<T>::Node& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      const T* dy = self.grad.data();
      T* d = p->grad.data();
      int64_t n = self.numel();
      for (int64_t i = 0; i < n; ++i) d[i] += dy[i];
    };
  }
  return Tensor<T>(node);
}

// Repeats a 2-D tensor across a new leading batch axis.
template <typename T>
Tensor<T> expand_batch(const Tensor<T>& x, int64_t batch) {
  BG_CHECK_DIM(x.rank() == 2, "expand_batch: expects rank-2 input, got " << shape_str(x.shape()));
  int64_t R = x.dim(0), C = x.dim(1);
  auto node = detail::make_node<T>({batch, R, C}, "expand_batch", {x.node()});
  const T* xv = x.values().data();
  T* ov = node->values.data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < R * C; ++i) ov[b * R * C + i] = xv[i];
  if (node->requires_grad) {
    node->backprop = [batch, R, C](typename Tensor<T>::Node& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      const T* dy = self.grad.data();
      T* d = p->grad.data();
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < R * C; ++i) d[i] += dy[b * R * C + i];
    };
  }
  return Tensor<T>(node);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  auto node = detail::make_node<T>({1}, "sum", {x.node()});
  const T* xv = x.values().data();
  T acc = T(0);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += xv[i];
  node->values[0] = acc;
  if (node->requires_grad) {
    node->backprop = [](typename Tensor<T>::Node& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      T g = self.grad[0];
      T* d = p->grad.data();
      int64_t n = p->numel();
      for (int64_t i = 0; i < n; ++i) d[i] += g;
    };
  }
  return Tensor<T>(node);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  BG_CHECK_DIM(x.numel() > 0, "mean_all: empty tensor");
  auto node = detail::make_node<T>({1}, "mean", {x.node()});
  const T* xv = x.values().data();
  T acc = T(0);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += xv[i];
  node->values[0] = acc / T(n);
  if (node->requires_grad) {
    node->backprop = [n](typename Tensor<T>::Node& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      T g = self.grad[0] / T(n);
      T* d = p->grad.data();
      for (int64_t i = 0; i < n; ++i) d[i] += g;
    };
  }
  return Tensor<T>(node);
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// Per-sample, per-channel normalization with affine parameters.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        T eps = T(1e-5)) {
  BG_CHECK_DIM(x.rank() == 4, "instance_norm: expects rank-4 input, got " << shape_str(x.shape()));
  int64_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  BG_CHECK_DIM(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 && beta.dim(0) == C,
               "instance_norm: affine params " << shape_str(gamma.shape()) << "/"
                                               << shape_str(beta.shape()) << " do not match "
                                               << shape_str(x.shape()));
  auto node = detail::make_node<T>(x.shape(), "instance_norm", {x.node(), gamma.node(), beta.node()});
  const T* xv = x.values().data();
  const T* gv = gamma.values().data();
  const T* bv = beta.values().data();
  T* ov = node->values.data();
  auto stats = std::make_shared<std::vector<T>>(static_cast<size_t>(B * C * 2));  // mu, invstd
  parallel_for(B * C, [&](int64_t lo, int64_t hi) {
    for (int64_t bc = lo; bc < hi; ++bc) {
      const T* xr = xv + bc * plane;
      T mu = T(0);
      for (int64_t i = 0; i < plane; ++i) mu += xr[i];
      mu /= T(plane);
      T var = T(0);
      for (int64_t i = 0; i < plane; ++i) {
        T d = xr[i] - mu;
        var += d * d;
      }
      var /= T(plane);
      T invstd = T(1) / std::sqrt(var + eps);
      (*stats)[static_cast<size_t>(bc * 2)] = mu;
      (*stats)[static_cast<size_t>(bc * 2 + 1)] = invstd;
      int64_t c = bc % C;
      T g = gv[c], be = bv[c];
      T* orow = ov + bc * plane;
      for (int64_t i = 0; i < plane; ++i) orow[i] = g * (xr[i] - mu) * invstd + be;
    }
  });
  if (node->requires_grad) {
    node->backprop = [B, C, plane, stats](typename Tensor<T>::Node& self) {
      auto& px = self.parents[0];
      auto& pg = self.parents[1];
      auto& pb = self.parents[2];
      const T* dy = self.grad.data();
      const T* xv = px->values.data();
      const T* gv = pg->values.data();
      if (pg->requires_grad) pg->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      if (px->requires_grad) px->ensure_grad();
      // dgamma/dbeta accumulate across the batch; keep this serial.
      for (int64_t bc = 0; bc < B * C; ++bc) {
        int64_t c = bc % C;
        T mu = (*stats)[static_cast<size_t>(bc * 2)];
        T invstd = (*stats)[static_cast<size_t>(bc * 2 + 1)];
        const T* xr = xv + bc * plane;
        const T* dr = dy + bc * plane;
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int64_t i = 0; i < plane; ++i) {
          T xhat = (xr[i] - mu) * invstd;
          sum_dy += dr[i];
          sum_dy_xhat += dr[i] * xhat;
        }
        if (pg->requires_grad) pg->grad[static_cast<size_t>(c)] += sum_dy_xhat;
        if (pb->requires_grad) pb->grad[static_cast<size_t>(c)] += sum_dy;
        if (px->requires_grad) {
          T g = gv[c];
          T mean_dy = sum_dy / T(plane);
          T mean_dy_xhat = sum_dy_xhat / T(plane);
          T* dxr = px->grad.data() + bc * plane;
          for (int64_t i = 0; i < plane; ++i) {
            T xhat = (xr[i] - mu) * invstd;
            dxr[i] += g * invstd * (dr[i] - mean_dy - xhat * mean_dy_xhat);
          }
        }
      }
    };
  }
  return Tensor<T>(node);
}

}  // namespace bigraph
