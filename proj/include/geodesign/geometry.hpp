#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "geodesign/error.hpp"

namespace geodesign {

/// A point in the plane, in projected study units. Distances are Euclidean;
/// callers working with geographic data must project first.
struct Location {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

inline double distance(const Location& a, const Location& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline void validate(const Location& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw InvalidArgument("location coordinates must be finite");
  }
}

struct Rectangle {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 1.0;
  double ymax = 1.0;

  [[nodiscard]] double width() const { return xmax - xmin; }
  [[nodiscard]] double height() const { return ymax - ymin; }
  [[nodiscard]] double diameter() const { return std::hypot(width(), height()); }

  static Rectangle unit_square() { return {}; }
};

/// Study region: either a continuous rectangle or an explicit finite
/// candidate set.
class Region {
 public:
  explicit Region(Rectangle bounds) : value_(bounds) {
    if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0)) {
      throw InvalidArgument("region rectangle must have positive area");
    }
  }

  explicit Region(std::vector<Location> candidates) : value_(std::move(candidates)) {
    const auto& c = std::get<std::vector<Location>>(value_);
    if (c.empty()) throw InvalidArgument("candidate set must be nonempty");
    for (const auto& p : c) validate(p);
    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return c[a].x != c[b].x ? c[a].x < c[b].x : c[a].y < c[b].y;
    });
    for (std::size_t k = 1; k < order.size(); ++k) {
      if (c[order[k - 1]] == c[order[k]]) {
        throw InvalidArgument("candidate set contains duplicate location at indices " +
                              std::to_string(std::min(order[k - 1], order[k])) + " and " +
                              std::to_string(std::max(order[k - 1], order[k])));
      }
    }
  }

  [[nodiscard]] bool is_rectangle() const { return std::holds_alternative<Rectangle>(value_); }
  [[nodiscard]] const Rectangle& rectangle() const { return std::get<Rectangle>(value_); }
  [[nodiscard]] const std::vector<Location>& candidates() const {
    return std::get<std::vector<Location>>(value_);
  }

 private:
  std::variant<Rectangle, std::vector<Location>> value_;
};

/// k-by-k grid of cell centres covering the rectangle. Spacing is width/k
/// and no point lies on the boundary. Points are ordered row by row, x
/// varying fastest.
inline std::vector<Location> regular_grid(const Rectangle& bounds, int k) {
  if (k < 2) throw InvalidArgument("regular_grid requires k >= 2");
  Region check(bounds);
  std::vector<Location> out;
  out.reserve(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
  const double dx = bounds.width() / k;
  const double dy = bounds.height() / k;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      out.push_back({bounds.xmin + (i + 0.5) * dx, bounds.ymin + (j + 0.5) * dy});
    }
  }
  return out;
}

inline std::vector<Location> regular_grid(const Region& region, int k) {
  if (!region.is_rectangle()) throw InvalidArgument("regular_grid requires a rectangular region");
  return regular_grid(region.rectangle(), k);
}

/// Diameter of the bounding box of a point set.
inline double bounding_diameter(std::span<const Location> points) {
  if (points.empty()) return 0.0;
  double xmin = points[0].x, xmax = points[0].x, ymin = points[0].y, ymax = points[0].y;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  return std::hypot(xmax - xmin, ymax - ymin);
}

}  // namespace geodesign
