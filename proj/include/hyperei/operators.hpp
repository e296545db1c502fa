#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cube.hpp"
#include "rng.hpp"

namespace hei {

// Cyclic spatial shift by (dx, dy) pixels; offsets are reduced modulo the
// image dimensions at application time, so a shift is an exact permutation
// of samples and inverse(g) simply negates the offsets.
struct GroupAction {
  int dx = 0;
  int dy = 0;
  bool operator==(const GroupAction&) const = default;
};

constexpr GroupAction inverse(GroupAction g) { return {-g.dx, -g.dy}; }
constexpr GroupAction compose(GroupAction g, GroupAction h) { return {g.dx + h.dx, g.dy + h.dy}; }

// Shift group of size T: offsets dx, dy each range over {0, ..., T-1}.
struct GroupConfig {
  int size = 7;
};

inline void validate(const GroupConfig& cfg) {
  if (cfg.size < 2)
    throw ConfigError("group size must be at least 2; with T=1 the equivariance term is vacuous");
}

// y[b,i,j] = mask[i,j] * x[b,i,j] for every band.
HsiCube apply_mask(const HsiCube& cube, const SpatialMask& mask);

// out[b,i,j] = in[b, (i - dy) mod H, (j - dx) mod W]; content moves by
// (+dx, +dy) with wraparound.
HsiCube apply_shift(const HsiCube& cube, GroupAction g);

// Uniform over the T^2 - 1 non-identity offsets (identity resampled away:
// it would make the equivariance term a tautology).
GroupAction sample_group(Rng& rng, const GroupConfig& cfg);

// All T^2 - 1 non-identity actions, row-major order over (dy, dx).
std::vector<GroupAction> all_actions(const GroupConfig& cfg);

// ---------------------------------------------------------------------------
// Explicit matrix forms. These exist as verification oracles for small
// grids only; vec() is the row-major flattening of a single band, and the
// builders refuse grids beyond H*W = 4096.
// ---------------------------------------------------------------------------

using OperatorMatrix = Eigen::MatrixXd;

// (#observed) x (H*W) selection matrix: mask_matrix * vec(band) lists the
// observed entries in scan order.
OperatorMatrix mask_matrix(const SpatialMask& mask);

// (H*W) x (H*W) permutation with shift_matrix(g) * vec(x) = vec(apply_shift(x, g)).
OperatorMatrix shift_matrix(GroupAction g, int height, int width);

// The virtual operator of the shifted measurement: mask_matrix * shift_matrix(inverse(g)).
OperatorMatrix virtual_operator(const SpatialMask& mask, GroupAction g, int height, int width);

struct CoverageReport {
  Eigen::Index stacked_rank = 0;
  bool full = false;
  Eigen::Index missing_dims = 0;
};

// Stacks the real operator M together with the virtual operators M o T_g^-1
// for every supplied action and computes the numerical rank of the pile
// (singular values above 1e-8 relative to the largest). Reconstruction from
// the group is identifiable iff the stack spans all H*W dimensions.
CoverageReport nullspace_coverage(const SpatialMask& mask,
                                  const std::vector<GroupAction>& actions, int height, int width);

}  // namespace hei
