#pragma once

#include <array>

namespace relfuse {

// Axis-aligned box in absolute pixel corner form.
struct Box {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (xmin + xmax); }
  double center_y() const { return 0.5 * (ymin + ymax); }
  bool has_positive_area() const { return width() > 0.0 && height() > 0.0; }

  std::array<double, 4> as_array() const { return {xmin, ymin, xmax, ymax}; }

  friend bool operator==(const Box&, const Box&) = default;
};

// True when the corners are finite and ordered.
bool is_valid(const Box& b);

// Intersection over union. Zero whenever either box has zero area.
double iou(const Box& a, const Box& b);

// Tight enclosing box of both inputs (the phrase box).
Box union_box(const Box& a, const Box& b);

}  // namespace relfuse
