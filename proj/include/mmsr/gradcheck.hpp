#pragma once

// Central finite-difference validation of every differentiable primitive and
// the modulation ops (f64, h = 1e-5, relative error < 1e-4). The oracle side
// only ever evaluates forward passes; it never reads the backward rules it
// checks.

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mmsr/modulation.hpp"
#include "mmsr/ops.hpp"
#include "mmsr/rng.hpp"
#include "mmsr/tensor.hpp"

namespace mmsr {

// Test-only scalarizer: dot product with a fixed coefficient vector, giving
// the checked op a dense, non-degenerate cotangent.
template <class S>
Tensor<S> weighted_sum(const Tensor<S>& x, const std::vector<S>& coeffs) {
  if (static_cast<int>(coeffs.size()) != x.numel())
    throw ArgumentError("weighted_sum: coefficient count mismatch");
  S acc = S(0);
  for (int i = 0; i < x.numel(); ++i) acc += coeffs[static_cast<std::size_t>(i)] * x.data()[i];
  Tensor<S> y = Tensor<S>::scalar(acc);
  if (Graph<S>* g = detail::recording_graph<S>({x})) {
    g->record("weighted_sum", {x}, y, [x, y, coeffs]() {
      if (!x.requires_grad()) return;
      for (int i = 0; i < x.numel(); ++i)
        x.grad()[i] += coeffs[static_cast<std::size_t>(i)] * y.grad()[0];
    });
  }
  return y;
}

struct GradCheckResult {
  std::string op;
  int cases = 0;
  double max_err = 0.0;
  bool pass = true;
};

namespace gradcheck_detail {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

// Compares recorded gradients of `fn(inputs)` against central differences for
// every element of every input. `fn` must be a pure function of `inputs`.
inline double max_grad_error(const std::function<Tensor<double>()>& fn,
                             const std::vector<Tensor<double>>& inputs, Rng& rng) {
  Graph<double> graph;
  for (const auto& t : inputs) graph.attach(t);

  graph.set_recording(false);
  Tensor<double> probe = fn();
  graph.set_recording(true);
  std::vector<double> coeffs(static_cast<std::size_t>(probe.numel()));
  for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);

  Tensor<double> loss = weighted_sum(fn(), coeffs);
  graph.backward(loss);

  std::vector<std::vector<double>> grads;
  for (const auto& t : inputs) {
    grads.emplace_back(t.grad(), t.grad() + t.numel());
  }

  graph.set_recording(false);
  auto eval = [&]() { return weighted_sum(fn(), coeffs).value(); };
  double worst = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    const Tensor<double>& t = inputs[ti];
    for (int i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + kStep;
      const double hi = eval();
      t.data()[i] = saved - kStep;
      const double lo = eval();
      t.data()[i] = saved;
      const double fd = (hi - lo) / (2.0 * kStep);
      const double ad = grads[ti][static_cast<std::size_t>(i)];
      const double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Keeps samples away from the relu/l1 kinks so the finite difference stays on
// one side of the nondifferentiable point.
inline Tensor<double> random_tensor_off_kink(Rng& rng, Shape shape, double margin = 1e-3) {
  Tensor<double> t = random_tensor(rng, std::move(shape));
  for (int i = 0; i < t.numel(); ++i)
    while (std::abs(t.data()[i]) < margin) t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace gradcheck_detail

// Runs `configs` random instances of every differentiable op; aggregates the
// worst relative error per op.
inline std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, int configs = 20) {
  namespace gd = gradcheck_detail;
  Rng rng(derive_seed(seed, 0x67726164ULL));
  std::vector<GradCheckResult> results;

  auto run_op = [&](const std::string& name,
                    const std::function<double(Rng&)>& one_case) {
    GradCheckResult res;
    res.op = name;
    res.cases = configs;
    for (int c = 0; c < configs; ++c) res.max_err = std::max(res.max_err, one_case(rng));
    res.pass = res.max_err < gd::kTol;
    results.push_back(res);
  };

  run_op("relu", [](Rng& r) {
    auto x = gd::random_tensor_off_kink(r, {r.uniform_int(1, 3), r.uniform_int(2, 5), r.uniform_int(2, 5)});
    return gd::max_grad_error([&]() { return relu(x); }, {x}, r);
  });

  run_op("add", [](Rng& r) {
    Shape shape{r.uniform_int(1, 3), r.uniform_int(2, 4), r.uniform_int(2, 4)};
    auto a = gd::random_tensor(r, shape);
    auto b = gd::random_tensor(r, shape);
    return gd::max_grad_error([&]() { return add(a, b); }, {a, b}, r);
  });

  run_op("sum", [](Rng& r) {
    auto x = gd::random_tensor(r, {r.uniform_int(2, 6)});
    return gd::max_grad_error([&]() { return sum(x); }, {x}, r);
  });

  run_op("softmax", [](Rng& r) {
    auto x = gd::random_tensor(r, {r.uniform_int(1, 8)}, -2.0, 2.0);
    return gd::max_grad_error([&]() { return softmax(x); }, {x}, r);
  });

  run_op("l1_loss", [](Rng& r) {
    Shape shape{r.uniform_int(1, 2), r.uniform_int(2, 4), r.uniform_int(2, 4)};
    auto a = gd::random_tensor(r, shape);
    auto b = Tensor<double>::zeros(shape);
    // keep |a - b| clear of the tie
    for (int i = 0; i < b.numel(); ++i) {
      const double off = r.uniform(0.05, 0.5);
      b.data()[i] = a.data()[i] + (r.uniform() < 0.5 ? -off : off);
    }
    return gd::max_grad_error([&]() { return l1_loss(a, b); }, {a, b}, r);
  });

  run_op("conv2d", [](Rng& r) {
    const int c_in = r.uniform_int(1, 3), c_out = r.uniform_int(1, 3);
    const int k = 2 * r.uniform_int(0, 2) + 1;
    auto x = gd::random_tensor(r, {c_in, r.uniform_int(2, 5), r.uniform_int(2, 5)});
    auto w = gd::random_tensor(r, {c_out, c_in, k, k});
    auto b = gd::random_tensor(r, {c_out});
    return gd::max_grad_error([&]() { return conv2d(x, w, b); }, {x, w, b}, r);
  });

  run_op("bilinear_upsample", [](Rng& r) {
    const int factor = r.uniform_int(1, 3);
    auto x = gd::random_tensor(r, {r.uniform_int(1, 3), r.uniform_int(2, 4), r.uniform_int(2, 4)});
    return gd::max_grad_error([&]() { return bilinear_upsample(x, factor); }, {x}, r);
  });

  run_op("avg_pool_down", [](Rng& r) {
    const int factor = r.uniform_int(1, 3);
    auto x = gd::random_tensor(
        r, {r.uniform_int(1, 3), factor * r.uniform_int(1, 3), factor * r.uniform_int(1, 3)});
    return gd::max_grad_error([&]() { return avg_pool_down(x, factor); }, {x}, r);
  });

  run_op("concat_channels", [](Rng& r) {
    const int h = r.uniform_int(2, 4), w = r.uniform_int(2, 4);
    auto a = gd::random_tensor(r, {r.uniform_int(1, 2), h, w});
    auto b = gd::random_tensor(r, {r.uniform_int(1, 2), h, w});
    return gd::max_grad_error([&]() { return concat_channels(a, b); }, {a, b}, r);
  });

  run_op("unfold", [](Rng& r) {
    const int size = 2 * r.uniform_int(0, 2) + 1;
    auto x = gd::random_tensor(r, {r.uniform_int(1, 2), r.uniform_int(3, 5), r.uniform_int(3, 5)});
    return gd::max_grad_error(
        [&]() { return unfold(FeatureMap<double>{x, Domain::source}, size).tensor; }, {x}, r);
  });

  run_op("stack_dot", [](Rng& r) {
    const int c = r.uniform_int(1, 3), l = r.uniform_int(1, 5);
    const int h = r.uniform_int(2, 4), w = r.uniform_int(2, 4);
    auto stack = gd::random_tensor(r, {c, l, h, w});
    auto target = gd::random_tensor(r, {c, h, w});
    return gd::max_grad_error([&]() { return stack_dot(stack, target); }, {stack, target}, r);
  });

  run_op("s2g_modulate", [](Rng& r) {
    const int size = 2 * r.uniform_int(0, 2) + 1;
    Shape shape{r.uniform_int(1, 3), r.uniform_int(3, 6), r.uniform_int(3, 6)};
    auto fs = gd::random_tensor(r, shape);
    auto fg = gd::random_tensor(r, shape);
    return gd::max_grad_error(
        [&]() {
          return s2g_modulate(FeatureMap<double>{fs, Domain::source},
                              FeatureMap<double>{fg, Domain::guide}, size)
              .tensor;
        },
        {fs, fg}, r);
  });

  run_op("g2s_modulate", [](Rng& r) {
    const int size = 2 * r.uniform_int(0, 2) + 1;
    Shape shape{r.uniform_int(1, 3), r.uniform_int(3, 6), r.uniform_int(3, 6)};
    auto fg = gd::random_tensor(r, shape);
    auto fs = gd::random_tensor(r, shape);
    return gd::max_grad_error(
        [&]() {
          return g2s_modulate(FeatureMap<double>{fg, Domain::guide},
                              FeatureMap<double>{fs, Domain::source}, size)
              .tensor;
        },
        {fg, fs}, r);
  });

  run_op("self_modulate", [](Rng& r) {
    const int size = 2 * r.uniform_int(0, 2) + 1;
    auto f = gd::random_tensor(r, {r.uniform_int(1, 3), r.uniform_int(3, 5), r.uniform_int(3, 5)});
    return gd::max_grad_error(
        [&]() { return self_modulate(FeatureMap<double>{f, Domain::source}, size).tensor; }, {f},
        r);
  });

  return results;
}

}  // namespace mmsr
