#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mmsr/image.hpp"
#include "mmsr/rng.hpp"

// Synthetic cross-modal pair generator. The source is piecewise smooth
// (low-frequency waves plus sharp convex-polygon steps); the guide recolors
// the same structure through per-channel gamma curves and adds guide-only
// polygons and high-frequency texture, so the pair has both shared edges and
// discrepancy patterns.

namespace mmsr {

namespace {

struct Polygon {
  std::vector<double> vx, vy;  // convex, counter-clockwise
};

Polygon random_polygon(Rng& rng, int size) {
  Polygon poly;
  const double cx = rng.uniform(0.15, 0.85) * size;
  const double cy = rng.uniform(0.15, 0.85) * size;
  const double radius = rng.uniform(0.12, 0.32) * size;
  const int verts = rng.uniform_int(3, 6);
  std::vector<double> angles(verts);
  for (auto& a : angles) a = rng.uniform(0.0, 2.0 * M_PI);
  std::sort(angles.begin(), angles.end());
  for (int v = 0; v < verts; ++v) {
    const double r = radius * rng.uniform(0.6, 1.0);
    poly.vx.push_back(cx + r * std::cos(angles[v]));
    poly.vy.push_back(cy + r * std::sin(angles[v]));
  }
  return poly;
}

bool inside(const Polygon& poly, double x, double y) {
  const std::size_t n = poly.vx.size();
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double cross = (poly.vx[j] - poly.vx[i]) * (y - poly.vy[i]) -
                         (poly.vy[j] - poly.vy[i]) * (x - poly.vx[i]);
    if (cross > 0) has_pos = true;
    if (cross < 0) has_neg = true;
  }
  return !(has_pos && has_neg);
}

struct Wave {
  double fx, fy, phase, amp;
};

Wave random_wave(Rng& rng, double freq_lo, double freq_hi, double amp_lo, double amp_hi) {
  Wave wv;
  wv.fx = rng.uniform(freq_lo, freq_hi) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  wv.fy = rng.uniform(freq_lo, freq_hi) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  wv.phase = rng.uniform(0.0, 2.0 * M_PI);
  wv.amp = rng.uniform(amp_lo, amp_hi);
  return wv;
}

double eval_waves(const std::vector<Wave>& waves, double x, double y, int size) {
  double v = 0.0;
  for (const auto& wv : waves)
    v += wv.amp * std::cos(2.0 * M_PI * (wv.fx * x + wv.fy * y) / size + wv.phase);
  return v;
}

// Affine rescale of one plane to [lo, hi]; keeps edges that clamping would flatten.
void rescale_plane(float* p, int count, float lo, float hi) {
  float mn = p[0], mx = p[0];
  for (int i = 1; i < count; ++i) {
    mn = std::min(mn, p[i]);
    mx = std::max(mx, p[i]);
  }
  const float span = mx - mn;
  if (span < 1e-12f) {
    std::fill(p, p + count, 0.5f * (lo + hi));
    return;
  }
  const float a = (hi - lo) / span;
  for (int i = 0; i < count; ++i) p[i] = lo + (p[i] - mn) * a;
}

}  // namespace

SynthPair synth_pair(std::uint64_t seed, int size, int scale) {
  if (size < 2 || scale < 1 || size % scale != 0)
    throw ArgumentError("synth_pair: size " + std::to_string(size) +
                        " must be positive and divisible by scale " + std::to_string(scale));
  Rng rng(derive_seed(seed, 0x73796e7468ULL));

  std::vector<Wave> base_waves;
  for (int k = 0; k < 3; ++k) base_waves.push_back(random_wave(rng, 0.4, 1.8, 0.06, 0.16));

  const int shared_count = rng.uniform_int(4, 6);
  std::vector<Polygon> shared_polys;
  std::vector<double> shared_steps;
  for (int p = 0; p < shared_count; ++p) {
    shared_polys.push_back(random_polygon(rng, size));
    const double mag = rng.uniform(0.2, 0.42);
    shared_steps.push_back(rng.uniform() < 0.5 ? -mag : mag);
  }

  SynthPair pair;
  pair.hr_source = make_image(size, size, 1, 1.0f);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      double v = 0.5 + eval_waves(base_waves, j, i, size);
      for (int p = 0; p < shared_count; ++p)
        if (inside(shared_polys[p], j + 0.5, i + 0.5)) v += shared_steps[p];
      pair.hr_source.at(0, i, j) = static_cast<float>(v);
    }
  rescale_plane(pair.hr_source.data.data(), size * size, 0.08f, 0.92f);

  // Guide: per-channel gamma recoloring of the source structure plus
  // channel-specific smooth bases, guide-only polygons, and texture.
  const int extra_count = rng.uniform_int(3, 4);
  std::vector<Polygon> extra_polys;
  for (int p = 0; p < extra_count; ++p) extra_polys.push_back(random_polygon(rng, size));
  std::vector<std::array<double, 3>> extra_steps;
  for (int p = 0; p < extra_count; ++p) {
    std::array<double, 3> st;
    for (int c = 0; c < 3; ++c) {
      const double mag = rng.uniform(0.18, 0.38);
      st[c] = rng.uniform() < 0.5 ? -mag : mag;
    }
    extra_steps.push_back(st);
  }
  std::vector<Wave> texture_waves;
  for (int k = 0; k < 2; ++k) texture_waves.push_back(random_wave(rng, 3.0, 6.0, 0.03, 0.07));

  pair.guide = make_image(size, size, 3, 255.0f);
  for (int c = 0; c < 3; ++c) {
    const double gamma = rng.uniform(0.45, 2.2);
    const double weight = rng.uniform(0.35, 0.7) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    std::vector<Wave> channel_base;
    for (int k = 0; k < 2; ++k) channel_base.push_back(random_wave(rng, 0.3, 1.2, 0.04, 0.1));
    const double tex_gain = rng.uniform(0.6, 1.4);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        const double s = pair.hr_source.at(0, i, j);
        double v = 0.5 + eval_waves(channel_base, j, i, size) + weight * std::pow(s, gamma);
        for (int p = 0; p < extra_count; ++p)
          if (inside(extra_polys[p], j + 0.5, i + 0.5)) v += extra_steps[p][c];
        v += tex_gain * eval_waves(texture_waves, j, i, size);
        pair.guide.at(c, i, j) = static_cast<float>(v);
      }
    rescale_plane(pair.guide.data.data() + static_cast<std::size_t>(c) * size * size,
                  size * size, 0.05f, 0.95f);
  }

  pair.lr_source = degrade_pool(pair.hr_source, scale);
  return pair;
}

}  // namespace mmsr
