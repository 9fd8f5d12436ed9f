#pragma once

// Throughput harness comparing the literal per-pixel reference filter with
// the optimized batched kernels, forward path only.

#include <chrono>
#include <cstdint>

#include "mmsr/modulation.hpp"
#include "mmsr/rng.hpp"

namespace mmsr {

struct BenchResult {
  int channels = 0, size = 0, height = 0, width = 0;
  double naive_pixels_per_s = 0.0;
  double optimized_pixels_per_s = 0.0;
  double speedup = 0.0;
};

namespace detail {

template <class Fn>
double best_pixels_per_s(Fn&& fn, int pixels, double min_seconds) {
  using clock = std::chrono::steady_clock;
  double best = 0.0;
  double spent = 0.0;
  int reps = 0;
  while (spent < min_seconds || reps < 3) {
    const auto t0 = clock::now();
    fn();
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    best = std::max(best, pixels / std::max(dt, 1e-9));
    spent += dt;
    ++reps;
  }
  return best;
}

}  // namespace detail

inline BenchResult bench_modulation(int channels, int size, int height, int width,
                                    std::uint64_t seed = 0, double min_seconds = 0.3) {
  Rng rng(derive_seed(seed, 0x62656e6368ULL));
  FeatureMap<float> fs{Tensor<float>::zeros({channels, height, width}), Domain::source};
  FeatureMap<float> fg{Tensor<float>::zeros({channels, height, width}), Domain::guide};
  for (int i = 0; i < fs.tensor.numel(); ++i) {
    fs.tensor.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    fg.tensor.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }

  BenchResult res;
  res.channels = channels;
  res.size = size;
  res.height = height;
  res.width = width;
  const int pixels = height * width;
  volatile float sink = 0.0f;  // keep the results live
  res.naive_pixels_per_s = detail::best_pixels_per_s(
      [&]() {
        auto out = reference_modulate(fs, fg, size, TargetMode::cross);
        sink = out.tensor.data()[0];
      },
      pixels, min_seconds);
  res.optimized_pixels_per_s = detail::best_pixels_per_s(
      [&]() {
        auto out = s2g_modulate(fs, fg, size);
        sink = out.tensor.data()[0];
      },
      pixels, min_seconds);
  (void)sink;
  res.speedup = res.optimized_pixels_per_s / res.naive_pixels_per_s;
  return res;
}

}  // namespace mmsr
