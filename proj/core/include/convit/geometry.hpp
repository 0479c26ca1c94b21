#pragma once

#include <algorithm>
#include <string>

#include "convit/errors.hpp"

namespace convit {

// Pixel-coordinate axis-aligned box (person region, shape extent, crop).
struct BoundingBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
};

inline void validate_box(const BoundingBox& b) {
  if (!(b.x_max > b.x_min) || !(b.y_max > b.y_min))
    throw BoxError("box: requires x_max > x_min and y_max > y_min, got [" +
                   std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
                   std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "]");
}

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline bool boxes_intersect(const BoundingBox& a, const BoundingBox& b) {
  return intersection_area(a, b) > 0.0;
}

}  // namespace convit
