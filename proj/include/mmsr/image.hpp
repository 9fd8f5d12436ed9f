#pragma once

// Raster image with normalized [0,1] samples plus the original container
// maximum for denormalization. Planar (C,H,W) row-major storage, matching
// the tensor layout. Formats: binary PGM (P5, maxval 255 or 65535,
// big-endian 16-bit), binary PPM (P6, maxval 255), and F32R — a raw float
// raster for lossless round-trips.

#include <cstdint>
#include <string>
#include <vector>

#include "mmsr/tensor.hpp"

namespace mmsr {

struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;  // 1 or 3
  std::vector<float> data;  // (C,H,W) row-major, values in [0,1]
  float dynamic_range = 255.0f;

  float& at(int c, int i, int j) { return data[(c * height + i) * width + j]; }
  float at(int c, int i, int j) const { return data[(c * height + i) * width + j]; }
  int pixel_count() const { return height * width; }
};

Image make_image(int height, int width, int channels, float dynamic_range);

// Format detected from content (load) / file extension (save).
Image load_image(const std::string& path);
void save_image(const std::string& path, const Image& img);

// Parses an in-memory buffer; FormatError carries the failing byte offset.
Image decode_image(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_image(const Image& img, const std::string& format);

// Non-overlapping scale x scale block means (plain float path, no autodiff).
Image degrade_pool(const Image& hr, int scale);

// i.i.d. Gaussian noise with sigma on the 0-255 intensity scale, clipped to [0,1].
Image add_gaussian_noise(const Image& img, double sigma255, std::uint64_t seed);

struct SynthPair {
  Image hr_source;  // ground truth, 1 channel
  Image guide;      // 3 channels
  Image lr_source;  // degrade_pool(hr_source, scale)
};

// Deterministic piecewise-smooth source with sharp polygonal edges; the guide
// recolors the same edge structure nonlinearly and adds guide-only polygons
// and texture (structures absent from the source).
SynthPair synth_pair(std::uint64_t seed, int size, int scale);

template <class S>
Tensor<S> image_to_tensor(const Image& img) {
  Tensor<S> t = Tensor<S>::zeros({img.channels, img.height, img.width});
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(img.data[i]);
  return t;
}

template <class S>
Image tensor_to_image(const Tensor<S>& t, float dynamic_range, bool clamp01 = true) {
  Image img = make_image(t.dim(1), t.dim(2), t.dim(0), dynamic_range);
  for (int i = 0; i < t.numel(); ++i) {
    float v = static_cast<float>(t.data()[i]);
    if (clamp01) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    img.data[static_cast<std::size_t>(i)] = v;
  }
  return img;
}

}  // namespace mmsr
