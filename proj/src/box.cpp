#include "relfuse/box.hpp"

#include <algorithm>
#include <cmath>

namespace relfuse {

bool is_valid(const Box& b) {
  return std::isfinite(b.xmin) && std::isfinite(b.ymin) &&
         std::isfinite(b.xmax) && std::isfinite(b.ymax) && b.xmin <= b.xmax &&
         b.ymin <= b.ymax;
}

double iou(const Box& a, const Box& b) {
  if (!a.has_positive_area() || !b.has_positive_area()) return 0.0;
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

Box union_box(const Box& a, const Box& b) {
  return {std::min(a.xmin, b.xmin), std::min(a.ymin, b.ymin),
          std::max(a.xmax, b.xmax), std::max(a.ymax, b.ymax)};
}

}  // namespace relfuse
