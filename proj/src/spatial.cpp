#include "relfuse/spatial.hpp"

#include <cmath>
#include <stdexcept>

#include "relfuse/errors.hpp"

namespace relfuse {

std::array<double, 4> box_delta(const Box& b1, const Box& b2) {
  if (!b1.has_positive_area() || !b2.has_positive_area())
    throw std::domain_error("box_delta needs boxes with positive width and height");
  const double w2 = b2.width();
  const double h2 = b2.height();
  return {(b1.center_x() - b2.center_x()) / w2,
          (b1.center_y() - b2.center_y()) / h2, std::log(b1.width() / w2),
          std::log(b1.height() / h2)};
}

std::array<double, 5> normalized_coords(const Box& b, double width,
                                        double height) {
  if (!(width > 0.0) || !(height > 0.0))
    throw std::domain_error("image size must be positive");
  return {b.xmin / width, b.ymin / height, b.xmax / width, b.ymax / height,
          b.area() / (width * height)};
}

SpatialFeature spatial_feature(const Box& sub, const Box& obj, double width,
                               double height) {
  const Box phrase = union_box(sub, obj);
  SpatialFeature f{};
  auto put = [&f, pos = std::size_t{0}](const auto& part) mutable {
    for (double v : part) f[pos++] = v;
  };
  put(box_delta(sub, obj));
  put(box_delta(sub, phrase));
  put(box_delta(phrase, obj));
  put(normalized_coords(sub, width, height));
  put(normalized_coords(obj, width, height));
  return f;
}

std::vector<double> spatial_logits(const Mlp& mlp, const SpatialFeature& f) {
  if (mlp.in_dim() != kSpatialFeatureDim)
    throw DimensionError("spatial mlp must take 22 inputs");
  return predict(mlp, f);
}

}  // namespace relfuse
