#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convit/tensor.hpp"

namespace convit {

// 8-bit RGB raster, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height*width*3

  bool empty() const { return pixels.empty(); }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  std::uint8_t& at(int y, int x, int c) {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
};

// 8-bit grayscale raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height*width
};

// Binary PPM (P6, maxval 255). Comments and arbitrary whitespace accepted in
// the header; malformed content raises ParseError, stream failures IoError.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

// Binary PGM (P5, maxval 255).
GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);

// Min-max normalize to 0..255 (a constant map renders as all zeros) and
// nearest-neighbor upscale to out_h x out_w.
template <typename S>
GrayImage render_heatmap(const Tensor<S>& values, int out_h, int out_w) {
  if (values.rank() != 2) throw ShapeError("render_heatmap: values must be [H,W]");
  if (out_h < 1 || out_w < 1) throw ConfigError("render_heatmap: output dims must be >= 1");
  const int H = values.dim(0), W = values.dim(1);
  const auto& v = values.value();
  S lo = v[0], hi = v[0];
  for (S x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  GrayImage out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.assign(static_cast<std::size_t>(out_h) * out_w, 0);
  if (!(hi > lo)) return out;  // constant map -> all zeros
  const double scale = 255.0 / (static_cast<double>(hi) - static_cast<double>(lo));
  for (int y = 0; y < out_h; ++y) {
    const int sy = static_cast<int>((static_cast<std::int64_t>(y) * H) / out_h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = static_cast<int>((static_cast<std::int64_t>(x) * W) / out_w);
      const double val =
          (static_cast<double>(v[static_cast<std::size_t>(sy * W + sx)]) - lo) * scale;
      out.pixels[static_cast<std::size_t>(y) * out_w + x] =
          static_cast<std::uint8_t>(val + 0.5);
    }
  }
  return out;
}

template <typename S>
void emit_heatmap(const Tensor<S>& values, const std::string& path, int out_h, int out_w) {
  write_pgm(render_heatmap(values, out_h, out_w), path);
}

}  // namespace convit
