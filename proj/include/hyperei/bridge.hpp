#pragma once

#include "cube.hpp"
#include "diff/tensor.hpp"

// Adapters between the value types (HsiCube / SpatialMask) and graph
// tensors. The BSQ cube layout coincides with the row-major [1,C,H,W]
// flattening, so these are straight copies.

namespace hei {

template <class S>
diff::Tensor<S> cube_to_tensor(const HsiCube& cube) {
  diff::VecX<S> v(cube.size());
  for (Eigen::Index i = 0; i < cube.size(); ++i) v[i] = static_cast<S>(cube.data[i]);
  return diff::Tensor<S>::from_values({1, cube.bands, cube.height, cube.width}, std::move(v));
}

template <class S>
HsiCube tensor_to_cube(const diff::Tensor<S>& t) {
  if (t.shape().size() != 4 || t.dim(0) != 1)
    throw ShapeError("tensor_to_cube: expected [1,C,H,W], got " + diff::shape_str(t.shape()));
  HsiCube cube(int(t.dim(2)), int(t.dim(3)), int(t.dim(1)));
  for (Eigen::Index i = 0; i < cube.size(); ++i) cube.data[i] = static_cast<float>(t.values()[i]);
  return cube;
}

// [1,1,H,W] constant gate; multiplying broadcasts over the channel dim.
template <class S>
diff::Tensor<S> mask_to_tensor(const SpatialMask& mask) {
  diff::VecX<S> v(mask.size());
  for (Eigen::Index i = 0; i < mask.size(); ++i) v[i] = static_cast<S>(mask.bits[i]);
  return diff::Tensor<S>::from_values({1, 1, mask.height, mask.width}, std::move(v));
}

}  // namespace hei
