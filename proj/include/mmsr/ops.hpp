#pragma once

// Differentiable primitives for the SR pipeline. Forward kernels lean on
// Eigen (contiguous maps + GEMM); backward rules accumulate into the inputs'
// grad buffers. Per-output reduction order is fixed, so results do not
// depend on the worker count.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmsr/parallel.hpp"
#include "mmsr/tensor.hpp"

namespace mmsr {

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b))
    throw ArgumentError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.array() = a.array() + b.array();
  if (Graph<S>* g = detail::recording_graph<S>({a, b})) {
    g->record("add", {a, b}, y, [a, b, y]() {
      if (a.requires_grad()) a.grad_array() += y.grad_array();
      if (b.requires_grad()) b.grad_array() += y.grad_array();
    });
  }
  return y;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.array() = x.array().max(S(0));
  if (Graph<S>* g = detail::recording_graph<S>({x})) {
    g->record("relu", {x}, y, [x, y]() {
      if (!x.requires_grad()) return;
      // subgradient 0 at x == 0
      x.grad_array() += (x.array() > S(0)).template cast<S>() * y.grad_array();
    });
  }
  return y;
}

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::scalar(x.array().sum());
  if (Graph<S>* g = detail::recording_graph<S>({x})) {
    g->record("sum", {x}, y, [x, y]() {
      if (x.requires_grad()) x.grad_array() += y.grad()[0];
    });
  }
  return y;
}

// Mean absolute difference over all elements.
template <class S>
Tensor<S> l1_loss(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b))
    throw ArgumentError("l1_loss: shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  const S inv_n = S(1) / static_cast<S>(a.numel());
  Tensor<S> y = Tensor<S>::scalar((a.array() - b.array()).abs().sum() * inv_n);
  if (Graph<S>* g = detail::recording_graph<S>({a, b})) {
    g->record("l1_loss", {a, b}, y, [a, b, y, inv_n]() {
      const S go = y.grad()[0] * inv_n;
      auto sign = (a.array() - b.array()).sign();  // 0 at ties
      if (a.requires_grad()) a.grad_array() += go * sign;
      if (b.requires_grad()) b.grad_array() -= go * sign;
    });
  }
  return y;
}

namespace detail {

// Per-pixel softmax over the leading axis of an (L, P) view; max-subtracted.
template <class S>
void softmax_forward(const S* z, S* y, int l_count, int pixels) {
  for (int p = 0; p < pixels; ++p) {
    S m = z[p];
    for (int l = 1; l < l_count; ++l) m = std::max(m, z[l * pixels + p]);
    S total = S(0);
    for (int l = 0; l < l_count; ++l) {
      const S e = std::exp(z[l * pixels + p] - m);
      y[l * pixels + p] = e;
      total += e;
    }
    const S inv = S(1) / total;
    for (int l = 0; l < l_count; ++l) y[l * pixels + p] *= inv;
  }
}

template <class S>
void softmax_backward(const S* y, const S* gy, S* gz, int l_count, int pixels) {
  for (int p = 0; p < pixels; ++p) {
    S dot = S(0);
    for (int l = 0; l < l_count; ++l) dot += y[l * pixels + p] * gy[l * pixels + p];
    for (int l = 0; l < l_count; ++l)
      gz[l * pixels + p] += y[l * pixels + p] * (gy[l * pixels + p] - dot);
  }
}

}  // namespace detail

// Softmax of a length-L vector.
template <class S>
Tensor<S> softmax(const Tensor<S>& v) {
  if (v.rank() != 1) throw ArgumentError("softmax: expected rank-1 tensor, got " + shape_str(v.shape()));
  if (!v.all_finite()) throw NumericError("softmax: non-finite input");
  Tensor<S> y = Tensor<S>::zeros(v.shape());
  detail::softmax_forward(v.data(), y.data(), v.numel(), 1);
  if (Graph<S>* g = detail::recording_graph<S>({v})) {
    g->record("softmax", {v}, y, [v, y]() {
      if (v.requires_grad())
        detail::softmax_backward(y.data(), y.grad(), v.grad(), v.numel(), 1);
    });
  }
  return y;
}

// Per-pixel softmax along axis 0 of an (L, H, W) tensor.
template <class S>
Tensor<S> softmax_axis0(const Tensor<S>& z) {
  if (z.rank() != 3) throw ArgumentError("softmax_axis0: expected (L,H,W), got " + shape_str(z.shape()));
  const int l_count = z.dim(0), pixels = z.dim(1) * z.dim(2);
  Tensor<S> y = Tensor<S>::zeros(z.shape());
  const int w = z.dim(2);
  parallel_for(0, z.dim(1), [&](int i) {
    detail::softmax_forward(z.data() + i * w, y.data() + i * w, l_count, w);
  });
  if (Graph<S>* g = detail::recording_graph<S>({z})) {
    g->record("softmax_axis0", {z}, y, [z, y, l_count, pixels]() {
      if (z.requires_grad())
        detail::softmax_backward(y.data(), y.grad(), z.grad(), l_count, pixels);
    });
  }
  return y;
}

namespace detail {

// col is (C*k*k) x (H*W); row (c,dy,dx) holds x[c] shifted by (dy-r, dx-r),
// zero-filled outside the image.
template <class S>
void im2col(const S* x, int channels, int h, int w, int k, S* col) {
  const int rad = k / 2;
  int row = 0;
  for (int c = 0; c < channels; ++c) {
    const S* plane = x + c * h * w;
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx, ++row) {
        S* dst = col + static_cast<std::ptrdiff_t>(row) * h * w;
        const int sy_off = dy - rad, sx_off = dx - rad;
        for (int i = 0; i < h; ++i) {
          S* drow = dst + i * w;
          const int si = i + sy_off;
          if (si < 0 || si >= h) {
            std::fill(drow, drow + w, S(0));
            continue;
          }
          const S* srow = plane + si * w;
          const int j0 = std::max(0, -sx_off);
          const int j1 = std::min(w, w - sx_off);
          if (j0 > 0) std::fill(drow, drow + j0, S(0));
          if (j1 > j0) std::copy(srow + j0 + sx_off, srow + j1 + sx_off, drow + j0);
          if (j1 < w) std::fill(drow + std::max(j1, j0), drow + w, S(0));
        }
      }
    }
  }
}

template <class S>
void col2im_add(const S* col, int channels, int h, int w, int k, S* x_grad) {
  const int rad = k / 2;
  int row = 0;
  for (int c = 0; c < channels; ++c) {
    S* plane = x_grad + c * h * w;
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx, ++row) {
        const S* src = col + static_cast<std::ptrdiff_t>(row) * h * w;
        const int sy_off = dy - rad, sx_off = dx - rad;
        for (int i = 0; i < h; ++i) {
          const int si = i + sy_off;
          if (si < 0 || si >= h) continue;
          const int j0 = std::max(0, -sx_off);
          const int j1 = std::min(w, w - sx_off);
          S* drow = plane + si * w;
          const S* srow = src + i * w;
          for (int j = j0; j < j1; ++j) drow[j + sx_off] += srow[j];
        }
      }
    }
  }
}

}  // namespace detail

// Same-size cross-correlation with zero padding; weight is (Cout,Cin,k,k).
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.rank() != 3) throw ArgumentError("conv2d: input must be (C,H,W), got " + shape_str(x.shape()));
  if (weight.rank() != 4)
    throw ArgumentError("conv2d: weight must be (Cout,Cin,k,k), got " + shape_str(weight.shape()));
  const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int c_out = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c_in)
    throw ConfigError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                      " input channels, input has " + std::to_string(c_in));
  if (weight.dim(3) != k || k % 2 == 0)
    throw ArgumentError("conv2d: kernel must be square with odd size, got " + shape_str(weight.shape()));
  if (bias.rank() != 1 || bias.dim(0) != c_out)
    throw ArgumentError("conv2d: bias must be length " + std::to_string(c_out));

  const int pixels = h * w;
  Tensor<S> y = Tensor<S>::zeros({c_out, h, w});
  auto y_mat = y.matrix(c_out, pixels);
  if (k == 1) {
    y_mat.noalias() = weight.matrix(c_out, c_in) * x.matrix(c_in, pixels);
  } else {
    std::vector<S> col(static_cast<std::size_t>(c_in) * k * k * pixels);
    detail::im2col(x.data(), c_in, h, w, k, col.data());
    Eigen::Map<const MatRM<S>> col_mat(col.data(), c_in * k * k, pixels);
    y_mat.noalias() = weight.matrix(c_out, c_in * k * k) * col_mat;
  }
  for (int c = 0; c < c_out; ++c) y_mat.row(c).array() += bias.data()[c];

  if (Graph<S>* g = detail::recording_graph<S>({x, weight, bias})) {
    g->record("conv2d", {x, weight, bias}, y, [x, weight, bias, y, c_in, c_out, h, w, k, pixels]() {
      auto gy = y.grad_matrix(c_out, pixels);
      if (bias.requires_grad())
        for (int c = 0; c < c_out; ++c) bias.grad()[c] += gy.row(c).sum();
      if (k == 1) {
        if (weight.requires_grad())
          weight.grad_matrix(c_out, c_in).noalias() += gy * x.matrix(c_in, pixels).transpose();
        if (x.requires_grad())
          x.grad_matrix(c_in, pixels).noalias() += weight.matrix(c_out, c_in).transpose() * gy;
        return;
      }
      // recompute the column buffer instead of keeping it alive in the tape
      std::vector<S> col(static_cast<std::size_t>(c_in) * k * k * pixels);
      detail::im2col(x.data(), c_in, h, w, k, col.data());
      Eigen::Map<const MatRM<S>> col_mat(col.data(), c_in * k * k, pixels);
      if (weight.requires_grad())
        weight.grad_matrix(c_out, c_in * k * k).noalias() += gy * col_mat.transpose();
      if (x.requires_grad()) {
        std::vector<S> gcol(col.size());
        Eigen::Map<MatRM<S>> gcol_mat(gcol.data(), c_in * k * k, pixels);
        gcol_mat.noalias() = weight.matrix(c_out, c_in * k * k).transpose() * gy;
        detail::col2im_add(gcol.data(), c_in, h, w, k, x.grad());
      }
    });
  }
  return y;
}

namespace detail {

// align-corners-false sample mapping for one axis
template <class S>
struct AxisMap {
  std::vector<int> lo, hi;
  std::vector<S> frac;  // weight of hi
};

template <class S>
AxisMap<S> upsample_axis(int in, int factor) {
  AxisMap<S> m;
  const int out = in * factor;
  m.lo.resize(out);
  m.hi.resize(out);
  m.frac.resize(out);
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) / factor - 0.5;
    if (src <= 0.0) {
      m.lo[o] = m.hi[o] = 0;
      m.frac[o] = S(0);
    } else if (src >= in - 1) {
      m.lo[o] = m.hi[o] = in - 1;
      m.frac[o] = S(0);
    } else {
      const int i0 = static_cast<int>(src);
      m.lo[o] = i0;
      m.hi[o] = i0 + 1;
      m.frac[o] = static_cast<S>(src - i0);
    }
  }
  return m;
}

}  // namespace detail

// Bilinear upsampling by an integer factor (align-corners-false mapping:
// output sample centers are placed at (o + 0.5) / factor - 0.5 in input
// coordinates and clamped at the borders).
template <class S>
Tensor<S> bilinear_upsample(const Tensor<S>& x, int factor) {
  if (x.rank() != 3) throw ArgumentError("bilinear_upsample: input must be (C,H,W)");
  if (factor < 1) throw ArgumentError("bilinear_upsample: factor must be >= 1");
  const int channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = h * factor, ow = w * factor;
  const auto ym = detail::upsample_axis<S>(h, factor);
  const auto xm = detail::upsample_axis<S>(w, factor);
  Tensor<S> y = Tensor<S>::zeros({channels, oh, ow});
  parallel_for(0, channels, [&](int c) {
    const S* src = x.data() + c * h * w;
    S* dst = y.data() + c * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const S fy = ym.frac[i];
      const S* r0 = src + ym.lo[i] * w;
      const S* r1 = src + ym.hi[i] * w;
      S* out = dst + i * ow;
      for (int j = 0; j < ow; ++j) {
        const S fx = xm.frac[j];
        const S top = r0[xm.lo[j]] + fx * (r0[xm.hi[j]] - r0[xm.lo[j]]);
        const S bot = r1[xm.lo[j]] + fx * (r1[xm.hi[j]] - r1[xm.lo[j]]);
        out[j] = top + fy * (bot - top);
      }
    }
  });
  if (Graph<S>* g = detail::recording_graph<S>({x})) {
    g->record("bilinear_upsample", {x}, y, [x, y, ym, xm, channels, h, w, oh, ow]() {
      if (!x.requires_grad()) return;
      parallel_for(0, channels, [&](int c) {
        S* gx = x.grad() + c * h * w;
        const S* gy = y.grad() + c * oh * ow;
        for (int i = 0; i < oh; ++i) {
          const S fy = ym.frac[i];
          for (int j = 0; j < ow; ++j) {
            const S fx = xm.frac[j];
            const S go = gy[i * ow + j];
            gx[ym.lo[i] * w + xm.lo[j]] += (1 - fy) * (1 - fx) * go;
            gx[ym.lo[i] * w + xm.hi[j]] += (1 - fy) * fx * go;
            gx[ym.hi[i] * w + xm.lo[j]] += fy * (1 - fx) * go;
            gx[ym.hi[i] * w + xm.hi[j]] += fy * fx * go;
          }
        }
      });
    });
  }
  return y;
}

// Non-overlapping factor x factor block means.
template <class S>
Tensor<S> avg_pool_down(const Tensor<S>& x, int factor) {
  if (x.rank() != 3) throw ArgumentError("avg_pool_down: input must be (C,H,W)");
  if (factor < 1) throw ArgumentError("avg_pool_down: factor must be >= 1");
  const int channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % factor != 0 || w % factor != 0)
    throw ArgumentError("avg_pool_down: dims " + std::to_string(h) + "x" + std::to_string(w) +
                        " not divisible by factor " + std::to_string(factor));
  const int oh = h / factor, ow = w / factor;
  const S inv = S(1) / static_cast<S>(factor * factor);
  Tensor<S> y = Tensor<S>::zeros({channels, oh, ow});
  parallel_for(0, channels, [&](int c) {
    const S* src = x.data() + c * h * w;
    S* dst = y.data() + c * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        S acc = S(0);
        for (int bi = 0; bi < factor; ++bi) {
          const S* row = src + (i * factor + bi) * w + j * factor;
          for (int bj = 0; bj < factor; ++bj) acc += row[bj];
        }
        dst[i * ow + j] = acc * inv;
      }
  });
  if (Graph<S>* g = detail::recording_graph<S>({x})) {
    g->record("avg_pool_down", {x}, y, [x, y, channels, h, w, oh, ow, factor, inv]() {
      if (!x.requires_grad()) return;
      parallel_for(0, channels, [&](int c) {
        S* gx = x.grad() + c * h * w;
        const S* gy = y.grad() + c * oh * ow;
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) {
            const S go = gy[i * ow + j] * inv;
            for (int bi = 0; bi < factor; ++bi) {
              S* row = gx + (i * factor + bi) * w + j * factor;
              for (int bj = 0; bj < factor; ++bj) row[bj] += go;
            }
          }
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw ArgumentError("concat_channels: spatial shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  const int ca = a.dim(0), cb = b.dim(0), h = a.dim(1), w = a.dim(2);
  Tensor<S> y = Tensor<S>::zeros({ca + cb, h, w});
  std::copy(a.data(), a.data() + ca * h * w, y.data());
  std::copy(b.data(), b.data() + cb * h * w, y.data() + ca * h * w);
  if (Graph<S>* g = detail::recording_graph<S>({a, b})) {
    g->record("concat_channels", {a, b}, y, [a, b, y, ca, cb, h, w]() {
      const S* gy = y.grad();
      if (a.requires_grad())
        for (int i = 0; i < ca * h * w; ++i) a.grad()[i] += gy[i];
      if (b.requires_grad())
        for (int i = 0; i < cb * h * w; ++i) b.grad()[i] += gy[ca * h * w + i];
    });
  }
  return y;
}

}  // namespace mmsr
