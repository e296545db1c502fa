#include "hyperei/cube.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyperei/rng.hpp"

namespace hei {

HsiCube normalize(const HsiCube& cube) {
  if (cube.size() == 0) throw DegenerateInputError("normalize: empty cube");
  if (!cube.all_finite()) throw DegenerateInputError("normalize: cube contains non-finite values");
  const float lo = cube.data.minCoeff();
  const float hi = cube.data.maxCoeff();
  if (lo == hi) throw DegenerateInputError("normalize: constant cube has no dynamic range");
  HsiCube out = cube;
  out.data = (cube.data - lo) / (hi - lo);
  return out;
}

namespace {

// Mirror index with edge repetition ("symmetric"): ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i = ((i % period) + period) % period;
  return i < n ? i : period - 1 - i;
}

// Separable Gaussian low-pass on a row-major H x W plane, symmetric boundary.
void gaussian_blur(std::vector<double>& plane, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    kernel[t + radius] = std::exp(-0.5 * (t * t) / (sigma * sigma));
    ksum += kernel[t + radius];
  }
  for (double& k : kernel) k /= ksum;

  std::vector<double> tmp(plane.size());
  // horizontal
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += kernel[t + radius] * plane[std::size_t(i) * w + mirror(j + t, w)];
      tmp[std::size_t(i) * w + j] = acc;
    }
  }
  // vertical
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += kernel[t + radius] * tmp[std::size_t(mirror(i + t, h)) * w + j];
      plane[std::size_t(i) * w + j] = acc;
    }
  }
}

}  // namespace

HsiCube synth_cube(const CubeSpec& spec) {
  if (spec.height <= 0 || spec.width <= 0 || spec.bands <= 0)
    throw ConfigError("synth_cube: dimensions must be positive");
  if (spec.rank <= 0) throw ConfigError("synth_cube: rank must be positive");
  if (spec.rank > spec.bands)
    throw ConfigError("synth_cube: rank (" + std::to_string(spec.rank) +
                      ") must not exceed bands (" + std::to_string(spec.bands) + ")");
  if (spec.smoothness < 0.0) throw ConfigError("synth_cube: smoothness must be nonnegative");

  Rng rng(spec.seed);
  const std::size_t plane = std::size_t(spec.height) * spec.width;

  std::vector<std::vector<double>> abundance(spec.rank);
  for (int r = 0; r < spec.rank; ++r) {
    abundance[r].resize(plane);
    for (std::size_t p = 0; p < plane; ++p) abundance[r][p] = rng.next_unit();
  }
  std::vector<std::vector<double>> signature(spec.rank);
  for (int r = 0; r < spec.rank; ++r) {
    signature[r].resize(spec.bands);
    for (int b = 0; b < spec.bands; ++b) signature[r][b] = rng.next_real(0.1, 1.0);
  }
  for (int r = 0; r < spec.rank; ++r)
    gaussian_blur(abundance[r], spec.height, spec.width, spec.smoothness);

  HsiCube cube(spec.height, spec.width, spec.bands);
  double maxval = 0.0;
  std::vector<double> acc(plane * spec.bands, 0.0);
  for (int r = 0; r < spec.rank; ++r)
    for (int b = 0; b < spec.bands; ++b)
      for (std::size_t p = 0; p < plane; ++p)
        acc[std::size_t(b) * plane + p] += abundance[r][p] * signature[r][b];
  for (const double v : acc) maxval = std::max(maxval, v);
  for (Eigen::Index k = 0; k < cube.size(); ++k)
    cube.data[k] = static_cast<float>(acc[std::size_t(k)] / maxval);
  return cube;
}

namespace {

void require_some_observed(const SpatialMask& mask, const char* what) {
  if (mask.observed_count() == 0)
    throw ConfigError(std::string(what) + ": mask observes no pixels");
}

}  // namespace

SpatialMask make_stripe_mask(int height, int width, const std::vector<ColRange>& cols) {
  if (height <= 0 || width <= 0) throw ConfigError("stripe mask: dimensions must be positive");
  if (cols.empty()) throw ConfigError("stripe mask: no column ranges given");
  SpatialMask mask(height, width);
  for (const auto& r : cols) {
    if (r.begin < 0 || r.end > width || r.begin >= r.end)
      throw ConfigError("stripe mask: column range [" + std::to_string(r.begin) + "," +
                        std::to_string(r.end) + ") outside 0.." + std::to_string(width));
    for (int i = 0; i < height; ++i)
      for (int j = r.begin; j < r.end; ++j) mask.at(i, j) = 0;
  }
  require_some_observed(mask, "stripe mask");
  return mask;
}

SpatialMask make_rect_mask(int height, int width, int x0, int y0, int rect_w, int rect_h) {
  if (height <= 0 || width <= 0) throw ConfigError("rect mask: dimensions must be positive");
  if (rect_w <= 0 || rect_h <= 0) throw ConfigError("rect mask: rectangle must be non-empty");
  if (x0 < 0 || y0 < 0 || x0 + rect_w > width || y0 + rect_h > height)
    throw ConfigError("rect mask: rectangle exceeds image bounds");
  SpatialMask mask(height, width);
  for (int i = y0; i < y0 + rect_h; ++i)
    for (int j = x0; j < x0 + rect_w; ++j) mask.at(i, j) = 0;
  require_some_observed(mask, "rect mask");
  return mask;
}

SpatialMask make_random_mask(int height, int width, double ratio, std::uint64_t seed) {
  if (height <= 0 || width <= 0) throw ConfigError("random mask: dimensions must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("random mask: ratio must lie in (0,1)");
  const Eigen::Index n = Eigen::Index(height) * width;
  const Eigen::Index k = static_cast<Eigen::Index>(std::llround(ratio * double(n)));
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  SpatialMask mask(height, width);
  for (Eigen::Index t = 0; t < k; ++t) mask.bits[idx[std::size_t(t)]] = 0;
  require_some_observed(mask, "random mask");
  return mask;
}

}  // namespace hei
