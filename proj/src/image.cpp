#include "mmsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mmsr/errors.hpp"
#include "mmsr/rng.hpp"

namespace mmsr {

Image make_image(int height, int width, int channels, float dynamic_range) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3))
    throw ArgumentError("image: invalid geometry " + std::to_string(height) + "x" +
                        std::to_string(width) + "x" + std::to_string(channels));
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.dynamic_range = dynamic_range;
  img.data.assign(static_cast<std::size_t>(channels) * height * width, 0.0f);
  return img;
}

namespace {

// Cursor over an in-memory file; all reads are bounds-checked and report the
// byte offset on failure.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool eof() const { return pos_ >= bytes_.size(); }

  std::uint8_t byte() {
    if (eof()) throw FormatError("unexpected end of file", pos_);
    return bytes_[pos_++];
  }

  std::uint8_t peek() const {
    if (eof()) throw FormatError("unexpected end of file", pos_);
    return bytes_[pos_];
  }

  void read(void* dst, std::size_t count) {
    if (pos_ + count > bytes_.size())
      throw FormatError("truncated data: need " + std::to_string(count) + " bytes", pos_);
    std::memcpy(dst, bytes_.data() + pos_, count);
    pos_ += count;
  }

  std::uint32_t u32_le() {
    std::uint8_t b[4];
    read(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  // PNM token: skips whitespace and '#' comments, then reads digits.
  int pnm_int() {
    for (;;) {
      if (eof()) throw FormatError("unexpected end of header", pos_);
      const std::uint8_t c = peek();
      if (c == '#') {
        while (!eof() && byte() != '\n') {
        }
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
    if (!std::isdigit(peek()))
      throw FormatError("expected integer in header", pos_);
    long value = 0;
    while (!eof() && std::isdigit(peek())) {
      value = value * 10 + (byte() - '0');
      if (value > 1000000000L) throw FormatError("header integer out of range", pos_);
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates the maxval from the raster.
  void pnm_raster_separator() {
    const std::uint8_t c = byte();
    if (!std::isspace(c)) throw FormatError("expected single whitespace before raster", pos_ - 1);
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

constexpr std::size_t kMaxPixels = 1u << 26;  // 64M samples; rejects absurd headers

Image decode_pnm(const std::vector<std::uint8_t>& bytes, int channels) {
  ByteReader r(bytes);
  r.byte();
  r.byte();  // magic, already checked
  const int width = r.pnm_int();
  const int height = r.pnm_int();
  const std::size_t maxval_offset = r.offset();
  const int maxval = r.pnm_int();
  if (width < 1 || height < 1)
    throw FormatError("invalid dimensions " + std::to_string(width) + "x" + std::to_string(height),
                      maxval_offset);
  if (static_cast<std::size_t>(width) * height > kMaxPixels)
    throw FormatError("image too large", maxval_offset);
  if (channels == 1 && maxval != 255 && maxval != 65535)
    throw FormatError("unsupported PGM maxval " + std::to_string(maxval), maxval_offset);
  if (channels == 3 && maxval != 255)
    throw FormatError("unsupported PPM maxval " + std::to_string(maxval), maxval_offset);
  r.pnm_raster_separator();

  Image img = make_image(height, width, channels, static_cast<float>(maxval));
  const float inv = 1.0f / static_cast<float>(maxval);
  const std::size_t samples = static_cast<std::size_t>(channels) * height * width;
  if (maxval > 255) {
    std::vector<std::uint8_t> raw(samples * 2);
    r.read(raw.data(), raw.size());
    // interleaved big-endian -> planar
    std::size_t s = 0;
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j)
        for (int c = 0; c < channels; ++c, ++s) {
          const unsigned v = (static_cast<unsigned>(raw[2 * s]) << 8) | raw[2 * s + 1];
          img.at(c, i, j) = static_cast<float>(v) * inv;
        }
  } else {
    std::vector<std::uint8_t> raw(samples);
    r.read(raw.data(), raw.size());
    std::size_t s = 0;
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j)
        for (int c = 0; c < channels; ++c, ++s) img.at(c, i, j) = static_cast<float>(raw[s]) * inv;
  }
  return img;
}

Image decode_f32r(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.read(magic, 4);
  const std::size_t geom_offset = r.offset();
  const std::uint32_t height = r.u32_le();
  const std::uint32_t width = r.u32_le();
  const std::uint32_t channels = r.u32_le();
  if (height < 1 || width < 1 || (channels != 1 && channels != 3))
    throw FormatError("invalid F32R geometry " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels),
                      geom_offset);
  if (static_cast<std::size_t>(height) * width > kMaxPixels)
    throw FormatError("image too large", geom_offset);
  // F32R stores normalized data; its container scale is 1.
  Image img = make_image(static_cast<int>(height), static_cast<int>(width),
                         static_cast<int>(channels), 1.0f);
  r.read(img.data.data(), img.data.size() * sizeof(float));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    if (!std::isfinite(img.data[i]))
      throw FormatError("non-finite sample", geom_offset + 12 + i * sizeof(float));
  return img;
}

}  // namespace

Image decode_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2) throw FormatError("file too short", 0);
  if (bytes[0] == 'P' && bytes[1] == '5') return decode_pnm(bytes, 1);
  if (bytes[0] == 'P' && bytes[1] == '6') return decode_pnm(bytes, 3);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "F32R", 4) == 0) return decode_f32r(bytes);
  throw FormatError("unrecognized magic", 0);
}

std::vector<std::uint8_t> encode_image(const Image& img, const std::string& format) {
  std::vector<std::uint8_t> out;
  if (format == "f32r") {
    out.insert(out.end(), {'F', '3', '2', 'R'});
    append_u32_le(out, static_cast<std::uint32_t>(img.height));
    append_u32_le(out, static_cast<std::uint32_t>(img.width));
    append_u32_le(out, static_cast<std::uint32_t>(img.channels));
    const auto* raw = reinterpret_cast<const std::uint8_t*>(img.data.data());
    out.insert(out.end(), raw, raw + img.data.size() * sizeof(float));
    return out;
  }
  if (format == "pgm" || format == "ppm") {
    const int channels = format == "pgm" ? 1 : 3;
    if (img.channels != channels)
      throw ArgumentError("cannot encode " + std::to_string(img.channels) + "-channel image as " +
                          format);
    const long maxval = std::lround(img.dynamic_range);
    if (maxval != 255 && !(channels == 1 && maxval == 65535))
      throw ArgumentError("dynamic range " + std::to_string(img.dynamic_range) +
                          " is not representable as " + format);
    const std::string header = (channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) +
                               " " + std::to_string(img.height) + "\n" + std::to_string(maxval) +
                               "\n";
    out.insert(out.end(), header.begin(), header.end());
    for (int i = 0; i < img.height; ++i)
      for (int j = 0; j < img.width; ++j)
        for (int c = 0; c < channels; ++c) {
          const float v = std::min(1.0f, std::max(0.0f, img.at(c, i, j)));
          const unsigned q = static_cast<unsigned>(std::lround(v * static_cast<float>(maxval)));
          if (maxval > 255) {
            out.push_back(static_cast<std::uint8_t>(q >> 8));
            out.push_back(static_cast<std::uint8_t>(q & 0xff));
          } else {
            out.push_back(static_cast<std::uint8_t>(q));
          }
        }
    return out;
  }
  throw ArgumentError("unknown image format '" + format + "' (pgm, ppm, f32r)");
}

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.byte_offset());
  }
}

namespace {
std::string path_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || dot + 1 >= path.size()) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}
}  // namespace

void save_image(const std::string& path, const Image& img) {
  const auto bytes = encode_image(img, path_extension(path));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("write failed for '" + path + "'");
}

Image degrade_pool(const Image& hr, int scale) {
  if (scale < 1) throw ArgumentError("degrade_pool: scale must be >= 1");
  if (hr.height % scale != 0 || hr.width % scale != 0)
    throw ArgumentError("degrade_pool: " + std::to_string(hr.height) + "x" +
                        std::to_string(hr.width) + " not divisible by " + std::to_string(scale));
  Image lr = make_image(hr.height / scale, hr.width / scale, hr.channels, hr.dynamic_range);
  const float inv = 1.0f / static_cast<float>(scale * scale);
  for (int c = 0; c < hr.channels; ++c)
    for (int i = 0; i < lr.height; ++i)
      for (int j = 0; j < lr.width; ++j) {
        float acc = 0.0f;
        for (int bi = 0; bi < scale; ++bi)
          for (int bj = 0; bj < scale; ++bj) acc += hr.at(c, i * scale + bi, j * scale + bj);
        lr.at(c, i, j) = acc * inv;
      }
  return lr;
}

Image add_gaussian_noise(const Image& img, double sigma255, std::uint64_t seed) {
  if (sigma255 < 0) throw ArgumentError("add_gaussian_noise: sigma must be >= 0");
  Image out = img;
  if (sigma255 == 0) return out;
  Rng rng(derive_seed(seed, 0x6e6f697365ULL));
  const double sigma = sigma255 / 255.0;
  for (auto& v : out.data) {
    const double noisy = static_cast<double>(v) + rng.normal() * sigma;
    v = static_cast<float>(std::min(1.0, std::max(0.0, noisy)));
  }
  return out;
}

}  // namespace mmsr
