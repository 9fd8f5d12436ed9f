#pragma once

// Cross-domain adaptive filtering. Each pixel of the filtered map is a convex
// recombination of its size x size neighborhood, weighted by the softmax of
// per-neighbor dot products against a target pixel from the other domain.
//
// The optimized kernels never materialize the (C,L,H,W) neighborhood stack:
// the batched per-neighbor dot products are computed by sweeping the L window
// offsets with contiguous shifted row segments (replicate-padded at borders).
// `unfold` + the weights ops provide the explicit-stack route, and
// `reference_modulate` is the literal per-pixel oracle.

#include <algorithm>
#include <string>
#include <vector>

#include "mmsr/ops.hpp"
#include "mmsr/parallel.hpp"
#include "mmsr/tensor.hpp"

namespace mmsr {

enum class Domain { source, guide, source_to_guide, guide_to_source };

template <class S>
struct FeatureMap {
  Tensor<S> tensor;  // (C,H,W)
  Domain domain = Domain::source;
};

// (C,L,H,W), L = size*size; replicate-padded windows, row-major offset order
// (top-left to bottom-right). The center column equals the map itself.
template <class S>
struct NeighborhoodStack {
  Tensor<S> tensor;
  int size = 1;
};

// (L,H,W); per pixel nonnegative, sums to 1.
template <class S>
struct FilterWeights {
  Tensor<S> tensor;
};

namespace detail {

inline void check_window_size(int size, const char* op) {
  if (size < 1 || size % 2 == 0)
    throw ArgumentError(std::string(op) + ": window size must be odd and >= 1, got " +
                        std::to_string(size));
}

template <class S>
void check_same_chw(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.rank() != 3 || b.rank() != 3 || !a.same_shape(b))
    throw ArgumentError(std::string(op) + ": feature maps must share (C,H,W), got " +
                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Interior column span [j0, j1) for shift dx: inside it j+dx stays in [0, W).
struct ShiftSpan {
  int j0, j1;
};
inline ShiftSpan shift_span(int w, int dx) {
  return {std::max(0, -dx), std::min(w, w - dx)};
}

template <class S>
using RowMap = Eigen::Map<ArrayX<S>>;
template <class S>
using ConstRowMap = Eigen::Map<const ArrayX<S>>;

// z[l](i,j) = sum_c a[c](i+dy, j+dx) * b[c](i,j), replicate-clamped.
template <class S>
void corr_logits_forward(const S* a, const S* b, S* z, int channels, int h, int w, int size) {
  const int rad = size / 2;
  parallel_for(0, h, [&](int i) {
    for (int l = 0; l < size * size; ++l) {
      const int dy = l / size - rad, dx = l % size - rad;
      const int ci = clamp_index(i + dy, h);
      S* zrow = z + (static_cast<std::ptrdiff_t>(l) * h + i) * w;
      std::fill(zrow, zrow + w, S(0));
      const auto span = shift_span(w, dx);
      const int len = span.j1 - span.j0;
      for (int c = 0; c < channels; ++c) {
        const S* arow = a + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
        const S* brow = b + (static_cast<std::ptrdiff_t>(c) * h + i) * w;
        for (int j = 0; j < span.j0; ++j) zrow[j] += arow[0] * brow[j];
        if (len > 0)
          RowMap<S>(zrow + span.j0, len) +=
              ConstRowMap<S>(arow + span.j0 + dx, len) * ConstRowMap<S>(brow + span.j0, len);
        for (int j = span.j1; j < w; ++j) zrow[j] += arow[w - 1] * brow[j];
      }
    }
  });
}

// Accumulates d(loss)/d(b) given gz; channel-parallel.
template <class S>
void corr_logits_backward_target(const S* a, const S* gz, S* gb, int channels, int h, int w,
                                 int size) {
  const int rad = size / 2;
  parallel_for(0, channels, [&](int c) {
    for (int l = 0; l < size * size; ++l) {
      const int dy = l / size - rad, dx = l % size - rad;
      const auto span = shift_span(w, dx);
      const int len = span.j1 - span.j0;
      for (int i = 0; i < h; ++i) {
        const int ci = clamp_index(i + dy, h);
        const S* arow = a + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
        const S* gzrow = gz + (static_cast<std::ptrdiff_t>(l) * h + i) * w;
        S* gbrow = gb + (static_cast<std::ptrdiff_t>(c) * h + i) * w;
        for (int j = 0; j < span.j0; ++j) gbrow[j] += arow[0] * gzrow[j];
        if (len > 0)
          RowMap<S>(gbrow + span.j0, len) +=
              ConstRowMap<S>(arow + span.j0 + dx, len) * ConstRowMap<S>(gzrow + span.j0, len);
        for (int j = span.j1; j < w; ++j) gbrow[j] += arow[w - 1] * gzrow[j];
      }
    }
  });
}

// Accumulates d(loss)/d(a) given gz; scatter through the clamped window,
// channel-parallel (each worker owns whole channels of ga).
template <class S>
void corr_logits_backward_neigh(const S* b, const S* gz, S* ga, int channels, int h, int w,
                                int size) {
  const int rad = size / 2;
  parallel_for(0, channels, [&](int c) {
    for (int l = 0; l < size * size; ++l) {
      const int dy = l / size - rad, dx = l % size - rad;
      const auto span = shift_span(w, dx);
      const int len = span.j1 - span.j0;
      for (int i = 0; i < h; ++i) {
        const int ci = clamp_index(i + dy, h);
        const S* brow = b + (static_cast<std::ptrdiff_t>(c) * h + i) * w;
        const S* gzrow = gz + (static_cast<std::ptrdiff_t>(l) * h + i) * w;
        S* garow = ga + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
        S border_lo = S(0), border_hi = S(0);
        for (int j = 0; j < span.j0; ++j) border_lo += brow[j] * gzrow[j];
        if (len > 0)
          RowMap<S>(garow + span.j0 + dx, len) +=
              ConstRowMap<S>(brow + span.j0, len) * ConstRowMap<S>(gzrow + span.j0, len);
        for (int j = span.j1; j < w; ++j) border_hi += brow[j] * gzrow[j];
        garow[0] += border_lo;
        garow[w - 1] += border_hi;
      }
    }
  });
}

// o[c](i,j) = sum_l wts[l](i,j) * a[c](i+dy_l, j+dx_l), replicate-clamped.
template <class S>
void mix_forward(const S* a, const S* wts, S* out, int channels, int h, int w, int size) {
  const int rad = size / 2;
  parallel_for(0, channels, [&](int c) {
    S* plane = out + static_cast<std::ptrdiff_t>(c) * h * w;
    std::fill(plane, plane + h * w, S(0));
    for (int l = 0; l < size * size; ++l) {
      const int dy = l / size - rad, dx = l % size - rad;
      const auto span = shift_span(w, dx);
      const int len = span.j1 - span.j0;
      for (int i = 0; i < h; ++i) {
        const int ci = clamp_index(i + dy, h);
        const S* arow = a + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
        const S* wrow = wts + (static_cast<std::ptrdiff_t>(l) * h + i) * w;
        S* orow = plane + i * w;
        for (int j = 0; j < span.j0; ++j) orow[j] += arow[0] * wrow[j];
        if (len > 0)
          RowMap<S>(orow + span.j0, len) +=
              ConstRowMap<S>(arow + span.j0 + dx, len) * ConstRowMap<S>(wrow + span.j0, len);
        for (int j = span.j1; j < w; ++j) orow[j] += arow[w - 1] * wrow[j];
      }
    }
  });
}

// d(loss)/d(wts): gw[l](i,j) += sum_c go[c](i,j) * a[c](ci,cj); parallel over l.
template <class S>
void mix_backward_weights(const S* a, const S* go, S* gw, int channels, int h, int w, int size) {
  const int rad = size / 2;
  parallel_for(0, size * size, [&](int l) {
    const int dy = l / size - rad, dx = l % size - rad;
    const auto span = shift_span(w, dx);
    const int len = span.j1 - span.j0;
    for (int c = 0; c < channels; ++c) {
      for (int i = 0; i < h; ++i) {
        const int ci = clamp_index(i + dy, h);
        const S* arow = a + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
        const S* gorow = go + (static_cast<std::ptrdiff_t>(c) * h + i) * w;
        S* gwrow = gw + (static_cast<std::ptrdiff_t>(l) * h + i) * w;
        for (int j = 0; j < span.j0; ++j) gwrow[j] += arow[0] * gorow[j];
        if (len > 0)
          RowMap<S>(gwrow + span.j0, len) +=
              ConstRowMap<S>(arow + span.j0 + dx, len) * ConstRowMap<S>(gorow + span.j0, len);
        for (int j = span.j1; j < w; ++j) gwrow[j] += arow[w - 1] * gorow[j];
      }
    }
  });
}

// d(loss)/d(a): scatter through the window; channel-parallel.
template <class S>
void mix_backward_neigh(const S* wts, const S* go, S* ga, int channels, int h, int w, int size) {
  const int rad = size / 2;
  parallel_for(0, channels, [&](int c) {
    for (int l = 0; l < size * size; ++l) {
      const int dy = l / size - rad, dx = l % size - rad;
      const auto span = shift_span(w, dx);
      const int len = span.j1 - span.j0;
      for (int i = 0; i < h; ++i) {
        const int ci = clamp_index(i + dy, h);
        const S* wrow = wts + (static_cast<std::ptrdiff_t>(l) * h + i) * w;
        const S* gorow = go + (static_cast<std::ptrdiff_t>(c) * h + i) * w;
        S* garow = ga + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
        S border_lo = S(0), border_hi = S(0);
        for (int j = 0; j < span.j0; ++j) border_lo += wrow[j] * gorow[j];
        if (len > 0)
          RowMap<S>(garow + span.j0 + dx, len) +=
              ConstRowMap<S>(wrow + span.j0, len) * ConstRowMap<S>(gorow + span.j0, len);
        for (int j = span.j1; j < w; ++j) border_hi += wrow[j] * gorow[j];
        garow[0] += border_lo;
        garow[w - 1] += border_hi;
      }
    }
  });
}

}  // namespace detail

// Batched per-neighbor correlation logits, z[l](i,j) = <a-neighborhood_l, b(i,j)>.
template <class S>
Tensor<S> corr_logits(const Tensor<S>& a, const Tensor<S>& b, int size) {
  detail::check_same_chw(a, b, "corr_logits");
  detail::check_window_size(size, "corr_logits");
  const int channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  Tensor<S> z = Tensor<S>::zeros({size * size, h, w});
  detail::corr_logits_forward(a.data(), b.data(), z.data(), channels, h, w, size);
  if (Graph<S>* g = detail::recording_graph<S>({a, b})) {
    g->record("corr_logits", {a, b}, z, [a, b, z, channels, h, w, size]() {
      if (a.requires_grad())
        detail::corr_logits_backward_neigh(b.data(), z.grad(), a.grad(), channels, h, w, size);
      if (b.requires_grad())
        detail::corr_logits_backward_target(a.data(), z.grad(), b.grad(), channels, h, w, size);
    });
  }
  return z;
}

// Per-pixel convex combination of the a-neighborhood under (L,H,W) weights.
template <class S>
Tensor<S> neighborhood_mix(const Tensor<S>& a, const Tensor<S>& weights, int size) {
  detail::check_window_size(size, "neighborhood_mix");
  if (a.rank() != 3 || weights.rank() != 3 || weights.dim(0) != size * size ||
      weights.dim(1) != a.dim(1) || weights.dim(2) != a.dim(2))
    throw ArgumentError("neighborhood_mix: weights " + shape_str(weights.shape()) +
                        " do not match map " + shape_str(a.shape()) + " at size " +
                        std::to_string(size));
  const int channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  detail::mix_forward(a.data(), weights.data(), out.data(), channels, h, w, size);
  if (Graph<S>* g = detail::recording_graph<S>({a, weights})) {
    g->record("neighborhood_mix", {a, weights}, out, [a, weights, out, channels, h, w, size]() {
      if (weights.requires_grad())
        detail::mix_backward_weights(a.data(), out.grad(), weights.grad(), channels, h, w, size);
      if (a.requires_grad())
        detail::mix_backward_neigh(weights.data(), out.grad(), a.grad(), channels, h, w, size);
    });
  }
  return out;
}

// Explicit (C,L,H,W) gather of replicate-padded windows.
template <class S>
NeighborhoodStack<S> unfold(const FeatureMap<S>& f, int size) {
  detail::check_window_size(size, "unfold");
  const Tensor<S>& x = f.tensor;
  if (x.rank() != 3) throw ArgumentError("unfold: feature map must be (C,H,W)");
  const int channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int l_count = size * size, rad = size / 2;
  Tensor<S> stack = Tensor<S>::zeros({channels, l_count, h, w});
  parallel_for(0, channels, [&](int c) {
    for (int l = 0; l < l_count; ++l) {
      const int dy = l / size - rad, dx = l % size - rad;
      const auto span = detail::shift_span(w, dx);
      for (int i = 0; i < h; ++i) {
        const int ci = detail::clamp_index(i + dy, h);
        const S* srow = x.data() + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
        S* drow = stack.data() + ((static_cast<std::ptrdiff_t>(c) * l_count + l) * h + i) * w;
        for (int j = 0; j < span.j0; ++j) drow[j] = srow[0];
        for (int j = span.j0; j < span.j1; ++j) drow[j] = srow[j + dx];
        for (int j = span.j1; j < w; ++j) drow[j] = srow[w - 1];
      }
    }
  });
  if (Graph<S>* g = detail::recording_graph<S>({x})) {
    g->record("unfold", {x}, stack, [x, stack, channels, h, w, size, l_count]() {
      if (!x.requires_grad()) return;
      const int rad2 = size / 2;
      parallel_for(0, channels, [&](int c) {
        for (int l = 0; l < l_count; ++l) {
          const int dy = l / size - rad2, dx = l % size - rad2;
          const auto span = detail::shift_span(w, dx);
          for (int i = 0; i < h; ++i) {
            const int ci = detail::clamp_index(i + dy, h);
            S* grow = x.grad() + (static_cast<std::ptrdiff_t>(c) * h + ci) * w;
            const S* srow =
                stack.grad() + ((static_cast<std::ptrdiff_t>(c) * l_count + l) * h + i) * w;
            for (int j = 0; j < span.j0; ++j) grow[0] += srow[j];
            for (int j = span.j0; j < span.j1; ++j) grow[j + dx] += srow[j];
            for (int j = span.j1; j < w; ++j) grow[w - 1] += srow[j];
          }
        }
      });
    });
  }
  return NeighborhoodStack<S>{stack, size};
}

// z[l](i,j) = sum_c stack[c][l](i,j) * target[c](i,j); accepts hand-built
// stacks of any L.
template <class S>
Tensor<S> stack_dot(const Tensor<S>& stack, const Tensor<S>& target) {
  if (stack.rank() != 4 || target.rank() != 3 || stack.dim(0) != target.dim(0) ||
      stack.dim(2) != target.dim(1) || stack.dim(3) != target.dim(2))
    throw ArgumentError("stack_dot: stack " + shape_str(stack.shape()) +
                        " does not match target " + shape_str(target.shape()));
  const int channels = stack.dim(0), l_count = stack.dim(1), h = stack.dim(2), w = stack.dim(3);
  Tensor<S> z = Tensor<S>::zeros({l_count, h, w});
  parallel_for(0, h, [&](int i) {
    for (int c = 0; c < channels; ++c) {
      const S* trow = target.data() + (static_cast<std::ptrdiff_t>(c) * h + i) * w;
      for (int l = 0; l < l_count; ++l) {
        const S* srow = stack.data() + ((static_cast<std::ptrdiff_t>(c) * l_count + l) * h + i) * w;
        S* zrow = z.data() + (static_cast<std::ptrdiff_t>(l) * h + i) * w;
        for (int j = 0; j < w; ++j) zrow[j] += srow[j] * trow[j];
      }
    }
  });
  if (Graph<S>* g = detail::recording_graph<S>({stack, target})) {
    g->record("stack_dot", {stack, target}, z, [stack, target, z, channels, l_count, h, w]() {
      parallel_for(0, channels, [&](int c) {
        for (int l = 0; l < l_count; ++l) {
          const std::ptrdiff_t s_off = (static_cast<std::ptrdiff_t>(c) * l_count + l) * h * w;
          const std::ptrdiff_t z_off = static_cast<std::ptrdiff_t>(l) * h * w;
          const std::ptrdiff_t t_off = static_cast<std::ptrdiff_t>(c) * h * w;
          for (int p = 0; p < h * w; ++p) {
            if (stack.requires_grad())
              stack.grad()[s_off + p] += z.grad()[z_off + p] * target.data()[t_off + p];
            if (target.requires_grad())
              target.grad()[t_off + p] += z.grad()[z_off + p] * stack.data()[s_off + p];
          }
        }
      });
    });
  }
  return z;
}

// Filter weights from an explicit neighborhood stack and its cross-domain
// target map: softmax over the per-neighbor correlation logits.
template <class S>
FilterWeights<S> s2g_weights(const NeighborhoodStack<S>& source_stack, const FeatureMap<S>& guide) {
  return FilterWeights<S>{softmax_axis0(stack_dot(source_stack.tensor, guide.tensor))};
}

template <class S>
FilterWeights<S> g2s_weights(const NeighborhoodStack<S>& guide_stack, const FeatureMap<S>& source) {
  return FilterWeights<S>{softmax_axis0(stack_dot(guide_stack.tensor, source.tensor))};
}

namespace detail {

template <class S>
Tensor<S> modulate_impl(const Tensor<S>& neigh, const Tensor<S>& target, int size, const char* op) {
  check_same_chw(neigh, target, op);
  check_window_size(size, op);
  Tensor<S> weights = softmax_axis0(corr_logits(neigh, target, size));
  return neighborhood_mix(neigh, weights, size);
}

}  // namespace detail

// Source-to-guide modulation: each source pixel becomes the weighted
// combination of its n x n source neighborhood, weighted by correlation with
// the counterpart guide pixel.
template <class S>
FeatureMap<S> s2g_modulate(const FeatureMap<S>& source, const FeatureMap<S>& guide, int n) {
  return FeatureMap<S>{detail::modulate_impl(source.tensor, guide.tensor, n, "s2g_modulate"),
                       Domain::source_to_guide};
}

// Guide-to-source modulation: mirror of s2g with the roles swapped.
template <class S>
FeatureMap<S> g2s_modulate(const FeatureMap<S>& guide, const FeatureMap<S>& source, int m) {
  return FeatureMap<S>{detail::modulate_impl(guide.tensor, source.tensor, m, "g2s_modulate"),
                       Domain::guide_to_source};
}

// Self-target variant: the cross-domain target is replaced by the map's own
// center pixel (non-local-style filtering within one domain).
template <class S>
FeatureMap<S> self_modulate(const FeatureMap<S>& f, int size) {
  return FeatureMap<S>{detail::modulate_impl(f.tensor, f.tensor, size, "self_modulate"),
                       f.domain};
}

enum class TargetMode { cross, self };

// Literal per-pixel oracle: builds each neighborhood matrix explicitly and
// evaluates the weights and the combination with plain loops. Forward only.
template <class S>
FeatureMap<S> reference_modulate(const FeatureMap<S>& fa, const FeatureMap<S>& fb, int size,
                                 TargetMode mode) {
  detail::check_same_chw(fa.tensor, fb.tensor, "reference_modulate");
  detail::check_window_size(size, "reference_modulate");
  const Tensor<S>& a = fa.tensor;
  const Tensor<S>& b = fb.tensor;
  const int channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  const int l_count = size * size, rad = size / 2;
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  std::vector<S> neigh(static_cast<std::size_t>(channels) * l_count);
  std::vector<S> target(static_cast<std::size_t>(channels));
  std::vector<S> logits(static_cast<std::size_t>(l_count));
  std::vector<S> wts(static_cast<std::size_t>(l_count));
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int l = 0; l < l_count; ++l) {
        const int yy = detail::clamp_index(i + l / size - rad, h);
        const int xx = detail::clamp_index(j + l % size - rad, w);
        for (int c = 0; c < channels; ++c) neigh[c * l_count + l] = a.at(c, yy, xx);
      }
      for (int c = 0; c < channels; ++c)
        target[c] = (mode == TargetMode::cross) ? b.at(c, i, j) : a.at(c, i, j);
      for (int l = 0; l < l_count; ++l) {
        S acc = S(0);
        for (int c = 0; c < channels; ++c) acc += neigh[c * l_count + l] * target[c];
        logits[l] = acc;
      }
      detail::softmax_forward(logits.data(), wts.data(), l_count, 1);
      for (int c = 0; c < channels; ++c) {
        S acc = S(0);
        for (int l = 0; l < l_count; ++l) acc += neigh[c * l_count + l] * wts[l];
        out.at(c, i, j) = acc;
      }
    }
  }
  Domain domain = (mode == TargetMode::self)
                      ? fa.domain
                      : (fa.domain == Domain::guide ? Domain::guide_to_source
                                                    : Domain::source_to_guide);
  return FeatureMap<S>{out, domain};
}

}  // namespace mmsr
