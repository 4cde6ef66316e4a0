#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gshead {

// Dense H x W x C image, values in [0, 1], row-major, channels innermost.
struct Image {
  int height = 0, width = 0, channels = 3;
  std::vector<double> px;

  Image() = default;
  Image(int h, int w, int c = 3, double fill = 0.0)
      : height(h), width(w), channels(c), px(size_t(h) * w * c, fill) {}

  double at(int i, int j, int c) const { return px[size_t((i * width + j) * channels + c)]; }
  double& at(int i, int j, int c) { return px[size_t((i * width + j) * channels + c)]; }
  size_t size() const { return px.size(); }
};

double image_mse(const Image& a, const Image& b);

// 8-bit RGB PNG. The encoder emits uncompressed (stored) deflate blocks and
// no row filtering, which keeps output byte-deterministic; the decoder reads
// that subset (any standard filter, stored blocks only).
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const uint8_t> bytes);
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace gshead
