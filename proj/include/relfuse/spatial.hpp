#pragma once

#include <array>
#include <vector>

#include "relfuse/box.hpp"
#include "relfuse/numcore.hpp"

namespace relfuse {

inline constexpr std::size_t kSpatialFeatureDim = 22;

// <delta(S,O), delta(S,P), delta(P,O), coords(S), coords(O)>, with P the
// union box of S and O.
using SpatialFeature = std::array<double, kSpatialFeatureDim>;

// Center offsets scaled by b2's size, then log size ratios. Throws
// std::domain_error when either box has zero width or height.
std::array<double, 4> box_delta(const Box& b1, const Box& b2);

// (xmin/W, ymin/H, xmax/W, ymax/H, area/(W*H)).
std::array<double, 5> normalized_coords(const Box& b, double width,
                                        double height);

SpatialFeature spatial_feature(const Box& sub, const Box& obj, double width,
                               double height);

std::vector<double> spatial_logits(const Mlp& mlp, const SpatialFeature& f);

}  // namespace relfuse
