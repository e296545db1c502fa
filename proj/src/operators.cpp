#include "hyperei/operators.hpp"

#include <Eigen/SVD>

namespace hei {

namespace {

constexpr Eigen::Index kMatrixGuard = 4096;            // max H*W for explicit matrices
constexpr Eigen::Index kStackGuard = Eigen::Index(1) << 24;  // max entries in a stacked pile

inline int mod(int v, int m) { return ((v % m) + m) % m; }

void check_guard(int height, int width, const char* what) {
  if (height <= 0 || width <= 0) throw ConfigError(std::string(what) + ": dimensions must be positive");
  if (Eigen::Index(height) * width > kMatrixGuard)
    throw CapacityError(std::string(what) + ": H*W exceeds the " + std::to_string(kMatrixGuard) +
                        " size guard for explicit matrices");
}

}  // namespace

HsiCube apply_mask(const HsiCube& cube, const SpatialMask& mask) {
  if (cube.height != mask.height || cube.width != mask.width)
    throw ShapeError("apply_mask: cube is " + std::to_string(cube.height) + "x" +
                     std::to_string(cube.width) + " but mask is " + std::to_string(mask.height) +
                     "x" + std::to_string(mask.width));
  HsiCube out = cube;
  const Eigen::Index plane = cube.plane();
  for (int b = 0; b < cube.bands; ++b) {
    float* dst = out.data.data() + Eigen::Index(b) * plane;
    for (Eigen::Index p = 0; p < plane; ++p)
      if (!mask.bits[p]) dst[p] = 0.0f;
  }
  return out;
}

HsiCube apply_shift(const HsiCube& cube, GroupAction g) {
  const int h = cube.height, w = cube.width;
  const int dy = mod(g.dy, h), dx = mod(g.dx, w);
  if (dy == 0 && dx == 0) return cube;
  HsiCube out(h, w, cube.bands);
  for (int b = 0; b < cube.bands; ++b) {
    const float* src = cube.data.data() + Eigen::Index(b) * cube.plane();
    float* dst = out.data.data() + Eigen::Index(b) * cube.plane();
    for (int i = 0; i < h; ++i) {
      const int si = mod(i - dy, h);
      for (int j = 0; j < w; ++j) dst[Eigen::Index(i) * w + j] = src[Eigen::Index(si) * w + mod(j - dx, w)];
    }
  }
  return out;
}

GroupAction sample_group(Rng& rng, const GroupConfig& cfg) {
  validate(cfg);
  for (;;) {
    const int dx = static_cast<int>(rng.next_below(std::uint64_t(cfg.size)));
    const int dy = static_cast<int>(rng.next_below(std::uint64_t(cfg.size)));
    if (dx != 0 || dy != 0) return {dx, dy};
  }
}

std::vector<GroupAction> all_actions(const GroupConfig& cfg) {
  validate(cfg);
  std::vector<GroupAction> out;
  out.reserve(std::size_t(cfg.size) * cfg.size - 1);
  for (int dy = 0; dy < cfg.size; ++dy)
    for (int dx = 0; dx < cfg.size; ++dx)
      if (dx != 0 || dy != 0) out.push_back({dx, dy});
  return out;
}

OperatorMatrix mask_matrix(const SpatialMask& mask) {
  check_guard(mask.height, mask.width, "mask_matrix");
  const Eigen::Index n = mask.size();
  const Eigen::Index rows = mask.observed_count();
  OperatorMatrix m = OperatorMatrix::Zero(rows, n);
  Eigen::Index r = 0;
  for (Eigen::Index p = 0; p < n; ++p)
    if (mask.bits[p]) m(r++, p) = 1.0;
  return m;
}

OperatorMatrix shift_matrix(GroupAction g, int height, int width) {
  check_guard(height, width, "shift_matrix");
  const int dy = mod(g.dy, height), dx = mod(g.dx, width);
  const Eigen::Index n = Eigen::Index(height) * width;
  OperatorMatrix m = OperatorMatrix::Zero(n, n);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      const Eigen::Index p = Eigen::Index(i) * width + j;
      const Eigen::Index q = Eigen::Index(mod(i - dy, height)) * width + mod(j - dx, width);
      m(p, q) = 1.0;
    }
  return m;
}

OperatorMatrix virtual_operator(const SpatialMask& mask, GroupAction g, int height, int width) {
  if (mask.height != height || mask.width != width)
    throw ShapeError("virtual_operator: mask dimensions disagree with requested grid");
  return mask_matrix(mask) * shift_matrix(inverse(g), height, width);
}

CoverageReport nullspace_coverage(const SpatialMask& mask,
                                  const std::vector<GroupAction>& actions, int height,
                                  int width) {
  check_guard(height, width, "nullspace_coverage");
  if (mask.height != height || mask.width != width)
    throw ShapeError("nullspace_coverage: mask dimensions disagree with requested grid");
  const Eigen::Index n = Eigen::Index(height) * width;
  const Eigen::Index block = mask.observed_count();
  const Eigen::Index rows = block * Eigen::Index(actions.size() + 1);
  if (rows * n > kStackGuard)
    throw CapacityError("nullspace_coverage: stacked pile exceeds the size guard; "
                        "use fewer actions or a smaller grid");

  OperatorMatrix pile(rows, n);
  pile.topRows(block) = mask_matrix(mask);
  for (std::size_t a = 0; a < actions.size(); ++a)
    pile.middleRows(block * Eigen::Index(a + 1), block) =
        virtual_operator(mask, actions[a], height, width);

  CoverageReport report;
  if (rows == 0) {
    report.missing_dims = n;
    return report;
  }
  Eigen::BDCSVD<OperatorMatrix> svd(pile);
  const auto& sv = svd.singularValues();
  const double tol = 1e-8 * sv(0);
  report.stacked_rank = (sv.array() > tol).count();
  report.full = report.stacked_rank == n;
  report.missing_dims = n - report.stacked_rank;
  return report;
}

}  // namespace hei
