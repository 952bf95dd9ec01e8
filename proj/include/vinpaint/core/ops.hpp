#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vinpaint/core/gemm.hpp"
#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

inline bool wants(Node& n, size_t i) {
  return n.parents[i].node()->requires_grad;
}
inline std::vector<real>& pgrad(Node& n, size_t i) {
  return n.parents[i].node()->grad;
}
inline const std::vector<real>& pval(Node& n, size_t i) {
  return n.parents[i].node()->value;
}

namespace detail {

inline void check_same_shape(const char* op, const Tensor& a,
                             const Tensor& b) {
  if (a.shape() != b.shape())
    tensor_fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()));
}

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = (int)s.size() - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor::make_op("add", a.shape(), std::move(out), {a, b}, [](Node& n) {
    for (int p = 0; p < 2; ++p)
      if (wants(n, p)) {
        auto& g = pgrad(n, p);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.values()[i] - b.values()[i];
  return Tensor::make_op("sub", a.shape(), std::move(out), {a, b}, [](Node& n) {
    if (wants(n, 0)) {
      auto& g = pgrad(n, 0);
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = pgrad(n, 1);
      for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.values()[i] * b.values()[i];
  return Tensor::make_op("mul", a.shape(), std::move(out), {a, b}, [](Node& n) {
    if (wants(n, 0)) {
      auto& g = pgrad(n, 0);
      const auto& bv = pval(n, 1);
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (wants(n, 1)) {
      auto& g = pgrad(n, 1);
      const auto& av = pval(n, 0);
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

inline Tensor add_scalar(const Tensor& a, real c) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.values()[i] + c;
  return Tensor::make_op("add_scalar", a.shape(), std::move(out), {a},
                         [](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                             g[i] += n.grad[i];
                         });
}

inline Tensor mul_scalar(const Tensor& a, real c) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.values()[i] * c;
  return Tensor::make_op("mul_scalar", a.shape(), std::move(out), {a},
                         [c](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                             g[i] += n.grad[i] * c;
                         });
}

// a * s where s is a tracked scalar tensor.
inline Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) tensor_fail("scale_by: scale must be a scalar tensor");
  real c = s.values()[0];
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.values()[i] * c;
  return Tensor::make_op("scale_by", a.shape(), std::move(out), {a, s},
                         [c](Node& n) {
                           if (wants(n, 0)) {
                             auto& g = pgrad(n, 0);
                             for (size_t i = 0; i < g.size(); ++i)
                               g[i] += n.grad[i] * c;
                           }
                           if (wants(n, 1)) {
                             const auto& av = pval(n, 0);
                             real acc = 0;
                             for (size_t i = 0; i < av.size(); ++i)
                               acc += n.grad[i] * av[i];
                             pgrad(n, 1)[0] += acc;
                           }
                         });
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

inline Tensor abs_op(const Tensor& a) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = std::abs(a.values()[i]);
  return Tensor::make_op("abs", a.shape(), std::move(out), {a}, [](Node& n) {
    if (!wants(n, 0)) return;
    auto& g = pgrad(n, 0);
    const auto& x = pval(n, 0);
    for (size_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] * (x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0));
  });
}

inline Tensor leaky_relu(const Tensor& a, real slope = 0.2) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) {
    real v = a.values()[i];
    out[i] = v > 0 ? v : slope * v;
  }
  return Tensor::make_op("leaky_relu", a.shape(), std::move(out), {a},
                         [slope](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           const auto& x = pval(n, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                             g[i] += n.grad[i] * (x[i] > 0 ? 1.0 : slope);
                         });
}

inline Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

inline Tensor sigmoid(const Tensor& a) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) {
    real v = a.values()[i];
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
  }
  return Tensor::make_op("sigmoid", a.shape(), std::move(out), {a},
                         [](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           for (size_t i = 0; i < g.size(); ++i) {
                             real y = n.value[i];
                             g[i] += n.grad[i] * y * (1.0 - y);
                           }
                         });
}

// Exact Gaussian-error-linear unit: x * Phi(x). Smooth everywhere, which
// keeps finite-difference gradient checks well behaved.
inline Tensor gelu(const Tensor& a) {
  constexpr real inv_sqrt2 = 0.7071067811865475244;
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) {
    real v = a.values()[i];
    out[i] = v * 0.5 * (1.0 + std::erf(v * inv_sqrt2));
  }
  return Tensor::make_op(
      "gelu", a.shape(), std::move(out), {a}, [](Node& n) {
        if (!wants(n, 0)) return;
        constexpr real inv_sqrt2 = 0.7071067811865475244;
        constexpr real inv_sqrt2pi = 0.3989422804014326779;
        auto& g = pgrad(n, 0);
        const auto& x = pval(n, 0);
        for (size_t i = 0; i < g.size(); ++i) {
          real v = x[i];
          real cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
          real pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
          g[i] += n.grad[i] * (cdf + v * pdf);
        }
      });
}

inline Tensor sqrt_op(const Tensor& a) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i)
    out[i] = std::sqrt(std::max(a.values()[i], 0.0));
  return Tensor::make_op("sqrt", a.shape(), std::move(out), {a}, [](Node& n) {
    if (!wants(n, 0)) return;
    auto& g = pgrad(n, 0);
    for (size_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] * 0.5 / std::max(n.value[i], 1e-12);
  });
}

inline Tensor reciprocal(const Tensor& a) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = 1.0 / a.values()[i];
  return Tensor::make_op("reciprocal", a.shape(), std::move(out), {a},
                         [](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                             g[i] -= n.grad[i] * n.value[i] * n.value[i];
                         });
}

inline Tensor clamp(const Tensor& a, real lo, real hi) {
  std::vector<real> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i)
    out[i] = std::clamp(a.values()[i], lo, hi);
  return Tensor::make_op("clamp", a.shape(), std::move(out), {a},
                         [lo, hi](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           const auto& x = pval(n, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                             if (x[i] > lo && x[i] < hi) g[i] += n.grad[i];
                         });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  real acc = 0;
  for (real v : a.values()) acc += v;
  return Tensor::make_op("sum_all", {1}, {acc}, {a}, [](Node& n) {
    if (!wants(n, 0)) return;
    auto& g = pgrad(n, 0);
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

inline Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / (real)a.numel());
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    tensor_fail("matmul: incompatible shapes " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  std::vector<real> out((size_t)m * nn);
  gemm(false, false, m, nn, k, 1.0, a.values().data(), k, b.values().data(),
       nn, 0.0, out.data(), nn);
  return Tensor::make_op(
      "matmul", {m, nn}, std::move(out), {a, b}, [m, k, nn](Node& n) {
        if (wants(n, 0))
          gemm(false, true, m, k, nn, 1.0, n.grad.data(), nn,
               pval(n, 1).data(), nn, 1.0, pgrad(n, 0).data(), k);
        if (wants(n, 1))
          gemm(true, false, k, nn, m, 1.0, pval(n, 0).data(), k,
               n.grad.data(), nn, 1.0, pgrad(n, 1).data(), nn);
      });
}

// x:[..., in] -> [..., out]; rows are every leading index combination.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.ndim() != 2 || x.dim(-1) != w.dim(0))
    tensor_fail("linear: input " + shape_str(x.shape()) + " vs weight " +
                shape_str(w.shape()));
  int in = w.dim(0), out_c = w.dim(1);
  int64_t rows = x.numel() / in;
  bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != out_c))
    tensor_fail("linear: bias " + shape_str(bias.shape()));
  std::vector<real> out((size_t)(rows * out_c));
  gemm(false, false, (int)rows, out_c, in, 1.0, x.values().data(), in,
       w.values().data(), out_c, 0.0, out.data(), out_c);
  if (has_bias)
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < out_c; ++c) out[r * out_c + c] += bias.values()[c];
  Shape oshape = x.shape();
  oshape.back() = out_c;
  std::vector<Tensor> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return Tensor::make_op(
      "linear", std::move(oshape), std::move(out), std::move(parents),
      [rows, in, out_c, has_bias](Node& n) {
        if (wants(n, 0))
          gemm(false, true, (int)rows, in, out_c, 1.0, n.grad.data(), out_c,
               pval(n, 1).data(), out_c, 1.0, pgrad(n, 0).data(), in);
        if (wants(n, 1))
          gemm(true, false, in, out_c, (int)rows, 1.0, pval(n, 0).data(), in,
               n.grad.data(), out_c, 1.0, pgrad(n, 1).data(), out_c);
        if (has_bias && wants(n, 2)) {
          auto& gb = pgrad(n, 2);
          for (int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < out_c; ++c) gb[c] += n.grad[r * out_c + c];
        }
      });
}

inline Tensor linear(const Tensor& x, const Tensor& w) {
  return linear(x, w, Tensor());
}

// ---------------------------------------------------------------------------
// Structure: reshape / permute / slice / concat / pad
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  // One extent may be -1 and is inferred.
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) tensor_fail("reshape: multiple -1 extents");
      infer = (int)i;
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[infer] = (int)(a.numel() / known);
  if (shape_numel(shape) != a.numel())
    tensor_fail("reshape: " + shape_str(a.shape()) + " -> " +
                shape_str(shape) + " changes element count");
  return Tensor::make_op("reshape", std::move(shape),
                         std::vector<real>(a.values()), {a}, [](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           for (size_t i = 0; i < g.size(); ++i)
                             g[i] += n.grad[i];
                         });
}

inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  int nd = a.ndim();
  if ((int)perm.size() != nd) tensor_fail("permute: rank mismatch");
  Shape oshape(nd);
  for (int i = 0; i < nd; ++i) oshape[i] = a.dim(perm[i]);
  auto in_strides = detail::row_major_strides(a.shape());
  // stride in the input for each output axis
  std::vector<int64_t> gather(nd);
  for (int i = 0; i < nd; ++i) gather[i] = in_strides[perm[i]];
  std::vector<real> out(a.numel());
  std::vector<int> idx(nd, 0);
  const auto& src = a.values();
  int64_t src_off = 0;
  for (int64_t o = 0; o < a.numel(); ++o) {
    out[o] = src[src_off];
    for (int ax = nd - 1; ax >= 0; --ax) {
      src_off += gather[ax];
      if (++idx[ax] < oshape[ax]) break;
      idx[ax] = 0;
      src_off -= gather[ax] * oshape[ax];
    }
  }
  return Tensor::make_op(
      "permute", std::move(oshape), std::move(out), {a},
      [gather, nd](Node& n) {
        if (!wants(n, 0)) return;
        auto& g = pgrad(n, 0);
        std::vector<int> idx(nd, 0);
        int64_t src_off = 0;
        for (size_t o = 0; o < n.grad.size(); ++o) {
          g[src_off] += n.grad[o];
          for (int ax = nd - 1; ax >= 0; --ax) {
            src_off += gather[ax];
            if (++idx[ax] < n.shape[ax]) break;
            idx[ax] = 0;
            src_off -= gather[ax] * n.shape[ax];
          }
        }
      });
}

inline Tensor slice(const Tensor& a, const std::vector<int>& starts,
                    const Shape& sizes) {
  int nd = a.ndim();
  if ((int)starts.size() != nd || (int)sizes.size() != nd)
    tensor_fail("slice: rank mismatch");
  for (int i = 0; i < nd; ++i)
    if (starts[i] < 0 || sizes[i] < 0 || starts[i] + sizes[i] > a.dim(i))
      tensor_fail("slice: range out of bounds on axis " + std::to_string(i) +
                  " for " + shape_str(a.shape()));
  auto in_strides = detail::row_major_strides(a.shape());
  std::vector<real> out(shape_numel(sizes));
  std::vector<int> idx(nd, 0);
  const auto& src = a.values();
  int64_t base = 0;
  for (int i = 0; i < nd; ++i) base += (int64_t)starts[i] * in_strides[i];
  int64_t src_off = base;
  for (int64_t o = 0; o < (int64_t)out.size(); ++o) {
    out[o] = src[src_off];
    for (int ax = nd - 1; ax >= 0; --ax) {
      src_off += in_strides[ax];
      if (++idx[ax] < sizes[ax]) break;
      idx[ax] = 0;
      src_off -= in_strides[ax] * sizes[ax];
    }
  }
  return Tensor::make_op(
      "slice", sizes, std::move(out), {a}, [in_strides, base, nd](Node& n) {
        if (!wants(n, 0)) return;
        auto& g = pgrad(n, 0);
        std::vector<int> idx(nd, 0);
        int64_t src_off = base;
        for (size_t o = 0; o < n.grad.size(); ++o) {
          g[src_off] += n.grad[o];
          for (int ax = nd - 1; ax >= 0; --ax) {
            src_off += in_strides[ax];
            if (++idx[ax] < n.shape[ax]) break;
            idx[ax] = 0;
            src_off -= in_strides[ax] * n.shape[ax];
          }
        }
      });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) tensor_fail("concat: no inputs");
  int nd = parts[0].ndim();
  if (axis < 0) axis += nd;
  Shape oshape = parts[0].shape();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != nd) tensor_fail("concat: rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != axis && p.dim(i) != oshape[i])
        tensor_fail("concat: shape mismatch " + shape_str(p.shape()) +
                    " vs " + shape_str(oshape) + " on non-concat axis");
    total += p.dim(axis);
  }
  oshape[axis] = total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= oshape[i];
  for (int i = axis + 1; i < nd; ++i) inner *= oshape[i];
  std::vector<real> out(shape_numel(oshape));
  std::vector<int64_t> chunk(parts.size());
  for (size_t p = 0; p < parts.size(); ++p)
    chunk[p] = (int64_t)parts[p].dim(axis) * inner;
  int64_t row = (int64_t)total * inner;
  for (int64_t o = 0; o < outer; ++o) {
    int64_t off = o * row;
    for (size_t p = 0; p < parts.size(); ++p) {
      const auto& src = parts[p].values();
      std::copy(src.begin() + o * chunk[p], src.begin() + (o + 1) * chunk[p],
                out.begin() + off);
      off += chunk[p];
    }
  }
  return Tensor::make_op(
      "concat", std::move(oshape), std::move(out), parts,
      [outer, row, chunk](Node& n) {
        for (int64_t o = 0; o < outer; ++o) {
          int64_t off = o * row;
          for (size_t p = 0; p < n.parents.size(); ++p) {
            if (wants(n, p)) {
              auto& g = pgrad(n, p);
              for (int64_t i = 0; i < chunk[p]; ++i)
                g[o * chunk[p] + i] += n.grad[off + i];
            }
            off += chunk[p];
          }
        }
      });
}

// Zero padding, one (before, after) pair per axis.
inline Tensor pad_zero(const Tensor& a,
                       const std::vector<std::pair<int, int>>& pads) {
  int nd = a.ndim();
  if ((int)pads.size() != nd) tensor_fail("pad_zero: rank mismatch");
  Shape oshape(nd);
  std::vector<int> starts(nd);
  for (int i = 0; i < nd; ++i) {
    oshape[i] = a.dim(i) + pads[i].first + pads[i].second;
    starts[i] = pads[i].first;
  }
  auto out_strides = detail::row_major_strides(oshape);
  std::vector<real> out(shape_numel(oshape), 0.0);
  std::vector<int> idx(nd, 0);
  int64_t base = 0;
  for (int i = 0; i < nd; ++i) base += (int64_t)starts[i] * out_strides[i];
  int64_t dst_off = base;
  const auto& src = a.values();
  Shape ishape = a.shape();
  for (int64_t s = 0; s < a.numel(); ++s) {
    out[dst_off] = src[s];
    for (int ax = nd - 1; ax >= 0; --ax) {
      dst_off += out_strides[ax];
      if (++idx[ax] < ishape[ax]) break;
      idx[ax] = 0;
      dst_off -= out_strides[ax] * ishape[ax];
    }
  }
  return Tensor::make_op(
      "pad_zero", std::move(oshape), std::move(out), {a},
      [out_strides, base, nd, ishape](Node& n) {
        if (!wants(n, 0)) return;
        auto& g = pgrad(n, 0);
        std::vector<int> idx(nd, 0);
        int64_t dst_off = base;
        for (size_t s = 0; s < g.size(); ++s) {
          g[s] += n.grad[dst_off];
          for (int ax = nd - 1; ax >= 0; --ax) {
            dst_off += out_strides[ax];
            if (++idx[ax] < ishape[ax]) break;
            idx[ax] = 0;
            dst_off -= out_strides[ax] * ishape[ax];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization and softmax
// ---------------------------------------------------------------------------

// Row-wise softmax over the last axis with max subtraction.
inline Tensor softmax_lastaxis(const Tensor& a) {
  int cols = a.dim(-1);
  int64_t rows = a.numel() / cols;
  std::vector<real> out(a.numel());
  const auto& x = a.values();
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = x.data() + r * cols;
    real* yr = out.data() + r * cols;
    real mx = xr[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    real sum = 0;
    for (int c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      sum += yr[c];
    }
    for (int c = 0; c < cols; ++c) yr[c] /= sum;
  }
  return Tensor::make_op("softmax", a.shape(), std::move(out), {a},
                         [rows, cols](Node& n) {
                           if (!wants(n, 0)) return;
                           auto& g = pgrad(n, 0);
                           for (int64_t r = 0; r < rows; ++r) {
                             const real* y = n.value.data() + r * cols;
                             const real* go = n.grad.data() + r * cols;
                             real dot = 0;
                             for (int c = 0; c < cols; ++c) dot += go[c] * y[c];
                             real* gi = g.data() + r * cols;
                             for (int c = 0; c < cols; ++c)
                               gi[c] += y[c] * (go[c] - dot);
                           }
                         });
}

// Zero mean / unit variance over the last axis, then affine. Epsilon sits
// inside the square root.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, real eps = 1e-5) {
  int cols = x.dim(-1);
  if (gamma.numel() != cols || beta.numel() != cols)
    tensor_fail("layer_norm: affine params " + shape_str(gamma.shape()) +
                "/" + shape_str(beta.shape()) + " vs axis extent " +
                std::to_string(cols));
  int64_t rows = x.numel() / cols;
  std::vector<real> out(x.numel());
  std::vector<real> inv_std(rows), mean(rows);
  const auto& xv = x.values();
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = xv.data() + r * cols;
    real mu = 0;
    for (int c = 0; c < cols; ++c) mu += xr[c];
    mu /= cols;
    real var = 0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= cols;
    mean[r] = mu;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    real* yr = out.data() + r * cols;
    for (int c = 0; c < cols; ++c)
      yr[c] = (xr[c] - mu) * inv_std[r] * gamma.values()[c] + beta.values()[c];
  }
  return Tensor::make_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, cols, mean, inv_std](Node& n) {
        const auto& xv = pval(n, 0);
        const auto& gam = pval(n, 1);
        for (int64_t r = 0; r < rows; ++r) {
          const real* xr = xv.data() + r * cols;
          const real* go = n.grad.data() + r * cols;
          real mu = mean[r], is = inv_std[r];
          if (wants(n, 1) || wants(n, 2)) {
            for (int c = 0; c < cols; ++c) {
              real xhat = (xr[c] - mu) * is;
              if (wants(n, 1)) pgrad(n, 1)[c] += go[c] * xhat;
              if (wants(n, 2)) pgrad(n, 2)[c] += go[c];
            }
          }
          if (wants(n, 0)) {
            real sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (int c = 0; c < cols; ++c) {
              real xhat = (xr[c] - mu) * is;
              real dxhat = go[c] * gam[c];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
            real* gi = pgrad(n, 0).data() + r * cols;
            for (int c = 0; c < cols; ++c) {
              real xhat = (xr[c] - mu) * is;
              real dxhat = go[c] * gam[c];
              gi[c] += is * (dxhat - sum_dxhat / cols -
                             xhat * sum_dxhat_xhat / cols);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

// [N,C,H,W] -> [N,C,2H,2W], nearest neighbor.
inline Tensor upsample_nearest2x(const Tensor& a) {
  if (a.ndim() != 4) tensor_fail("upsample_nearest2x: expects [N,C,H,W]");
  int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  std::vector<real> out((size_t)n * c * 4 * h * w);
  const auto& src = a.values();
  for (int64_t nc = 0; nc < (int64_t)n * c; ++nc) {
    const real* sp = src.data() + nc * h * w;
    real* dp = out.data() + nc * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < 2 * w; ++x)
        dp[y * 2 * w + x] = sp[(y / 2) * w + (x / 2)];
  }
  return Tensor::make_op(
      "upsample_nearest2x", {n, c, 2 * h, 2 * w}, std::move(out), {a},
      [n, c, h, w](Node& nd) {
        if (!wants(nd, 0)) return;
        auto& g = pgrad(nd, 0);
        for (int64_t nc = 0; nc < (int64_t)n * c; ++nc) {
          real* gp = g.data() + nc * h * w;
          const real* op = nd.grad.data() + nc * 4 * h * w;
          for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x)
              gp[(y / 2) * w + (x / 2)] += op[y * 2 * w + x];
        }
      });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, real c) { return mul_scalar(a, c); }
inline Tensor operator*(real c, const Tensor& a) { return mul_scalar(a, c); }

}  // namespace vinpaint
