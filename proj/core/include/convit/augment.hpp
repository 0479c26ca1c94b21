#pragma once

#include <algorithm>
#include <array>
#include <tuple>
#include <vector>

#include "convit/geometry.hpp"
#include "convit/netpbm.hpp"
#include "convit/rng.hpp"
#include "convit/tensor.hpp"

namespace convit {

// Mirror columns with probability p; box x-coordinates map to
// (W - x_max, W - x_min). Consumes exactly one bernoulli draw.
inline std::pair<Image, BoundingBox> horizontal_flip(const Image& img, const BoundingBox& box,
                                                     SplitMix64& rng, double p = 0.5) {
  if (!rng.bernoulli(p)) return {img, box};
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  BoundingBox b = box;
  b.x_min = img.width - box.x_max;
  b.x_max = img.width - box.x_min;
  return {out, b};
}

namespace detail {

inline std::pair<Image, BoundingBox> crop_at(const Image& img, const BoundingBox& box, int oy,
                                             int ox, int out_h, int out_w) {
  Image out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.resize(static_cast<std::size_t>(out_h) * out_w * 3);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
  // Box' = intersection with the crop window, translated to crop coords.
  BoundingBox b;
  b.x_min = std::max(box.x_min, static_cast<double>(ox)) - ox;
  b.y_min = std::max(box.y_min, static_cast<double>(oy)) - oy;
  b.x_max = std::min(box.x_max, static_cast<double>(ox + out_w)) - ox;
  b.y_max = std::min(box.y_max, static_cast<double>(oy + out_h)) - oy;
  return {out, b};
}

}  // namespace detail

// Uniformly sample crop origins, rejecting candidates that keep less than
// keep_fraction of the box's area (<= 1000 attempts, then center-crop
// fallback; never fails).
inline std::pair<Image, BoundingBox> random_crop_keep_box(const Image& img,
                                                          const BoundingBox& box, int out_h,
                                                          int out_w, double keep_fraction,
                                                          SplitMix64& rng) {
  if (out_h < 1 || out_w < 1 || out_h > img.height || out_w > img.width)
    throw ConfigError("crop: output size must fit inside the image");
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
    throw ConfigError("crop: keep fraction must lie in (0, 1]");
  validate_box(box);
  const int max_oy = img.height - out_h, max_ox = img.width - out_w;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int oy = max_oy > 0 ? static_cast<int>(rng.next_int(max_oy + 1)) : 0;
    const int ox = max_ox > 0 ? static_cast<int>(rng.next_int(max_ox + 1)) : 0;
    const BoundingBox window{static_cast<double>(ox), static_cast<double>(oy),
                             static_cast<double>(ox + out_w), static_cast<double>(oy + out_h)};
    if (intersection_area(window, box) / box.area() >= keep_fraction)
      return detail::crop_at(img, box, oy, ox, out_h, out_w);
  }
  return detail::crop_at(img, box, max_oy / 2, max_ox / 2, out_h, out_w);
}

// Deterministic center crop (eval path). The box is clipped to the window.
inline std::pair<Image, BoundingBox> center_crop(const Image& img, const BoundingBox& box,
                                                 int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || out_h > img.height || out_w > img.width)
    throw ConfigError("crop: output size must fit inside the image");
  return detail::crop_at(img, box, (img.height - out_h) / 2, (img.width - out_w) / 2, out_h,
                         out_w);
}

// lambda ~ Beta(alpha, alpha); x_mix = l*x1 + (1-l)*x2, same for labels.
template <typename S>
std::tuple<std::vector<S>, std::vector<S>, double> mixup(const std::vector<S>& x1,
                                                         const std::vector<S>& y1,
                                                         const std::vector<S>& x2,
                                                         const std::vector<S>& y2, double alpha,
                                                         SplitMix64& rng) {
  if (alpha <= 0.0) throw ConfigError("mixup: alpha must be > 0");
  if (x1.size() != x2.size() || y1.size() != y2.size())
    throw ShapeError("mixup: paired samples must share shapes");
  const double l = rng.beta(alpha, alpha);
  std::vector<S> x(x1.size()), y(y1.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<S>(l * x1[i] + (1.0 - l) * x2[i]);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = static_cast<S>(l * y1[i] + (1.0 - l) * y2[i]);
  return {std::move(x), std::move(y), l};
}

// uint8 RGB -> float vector in [H*W*3], normalized per channel:
// v = (p/255 - mean[c]) / std[c].
template <typename S>
std::vector<S> image_to_values(const Image& img, const std::array<double, 3>& mean,
                               const std::array<double, 3>& stddev) {
  for (double s : stddev)
    if (!(s > 0.0)) throw ConfigError("normalize: pixel std must be > 0");
  std::vector<S> out(static_cast<std::size_t>(img.height) * img.width * 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    out[i] = static_cast<S>((img.pixels[i] / 255.0 - mean[static_cast<std::size_t>(c)]) /
                            stddev[static_cast<std::size_t>(c)]);
  }
  return out;
}

}  // namespace convit
