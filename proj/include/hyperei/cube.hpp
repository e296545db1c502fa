#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "errors.hpp"

namespace hei {

using BandArray = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BandView = Eigen::Map<const BandArray>;
using BandViewMut = Eigen::Map<BandArray>;

// Dense hyperspectral cube, band-sequential (BSQ) layout:
//   data[(b*height + i)*width + j]  ==  value of band b at row i, column j.
// Each band plane is therefore a contiguous row-major H x W image.
struct HsiCube {
  int height = 0;
  int width = 0;
  int bands = 0;
  Eigen::ArrayXf data;

  HsiCube() = default;
  HsiCube(int h, int w, int c)
      : height(h), width(w), bands(c), data(Eigen::ArrayXf::Zero(Eigen::Index(h) * w * c)) {}

  Eigen::Index plane() const { return Eigen::Index(height) * width; }
  Eigen::Index size() const { return plane() * bands; }

  float& at(int b, int i, int j) { return data[(Eigen::Index(b) * height + i) * width + j]; }
  float at(int b, int i, int j) const { return data[(Eigen::Index(b) * height + i) * width + j]; }

  BandView band(int b) const { return BandView(data.data() + Eigen::Index(b) * plane(), height, width); }
  BandViewMut band_mut(int b) { return BandViewMut(data.data() + Eigen::Index(b) * plane(), height, width); }

  bool all_finite() const { return data.isFinite().all(); }
  bool same_dims(const HsiCube& o) const {
    return height == o.height && width == o.width && bands == o.bands;
  }
};

// Binary observation map shared by all bands: bits[i*width + j] is 1 where
// the pixel was observed and 0 where every band is missing.
struct SpatialMask {
  int height = 0;
  int width = 0;
  Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> bits;

  SpatialMask() = default;
  SpatialMask(int h, int w)
      : height(h), width(w),
        bits(Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>::Ones(Eigen::Index(h) * w)) {}

  Eigen::Index size() const { return Eigen::Index(height) * width; }
  std::uint8_t at(int i, int j) const { return bits[Eigen::Index(i) * width + j]; }
  std::uint8_t& at(int i, int j) { return bits[Eigen::Index(i) * width + j]; }
  Eigen::Index observed_count() const {
    return (bits.cast<Eigen::Index>()).sum();
  }
};

// Recipe for the synthetic low-rank test cubes: `rank` smooth abundance
// maps mixed with `rank` nonnegative spectral signatures.
struct CubeSpec {
  int height = 0;
  int width = 0;
  int bands = 0;
  int rank = 1;
  double smoothness = 2.0;  // Gaussian blur sigma applied to abundance maps
  std::uint64_t seed = 0;
};

// Affine global min-max map onto [0,1]. Throws DegenerateInputError on a
// constant cube. Idempotent up to float rounding.
HsiCube normalize(const HsiCube& cube);

// Deterministic synthetic cube. Construction (all draws from Rng(seed)):
//   1. rank abundance maps, H*W uniform [0,1) draws each (row-major),
//      blurred with a Gaussian of sigma = smoothness (symmetric boundary);
//   2. rank spectral signatures, `bands` uniform [0.1, 1) draws each;
//   3. cube[b,i,j] = sum_r abundance[r](i,j) * signature[r](b);
//   4. scaled by 1/max so values land in [0,1].
// Step 4 is a pure scaling, not an affine min-max, so the (H*W) x bands
// spectral matrix keeps numerical rank exactly `rank`.
HsiCube synth_cube(const CubeSpec& spec);

// Half-open column interval [begin, end) for stripe masks.
struct ColRange {
  int begin = 0;
  int end = 0;
};

SpatialMask make_stripe_mask(int height, int width, const std::vector<ColRange>& cols);
SpatialMask make_rect_mask(int height, int width, int x0, int y0, int rect_w, int rect_h);
// Zeroes exactly llround(ratio * H * W) pixels, drawn without replacement
// via a seeded shuffle.
SpatialMask make_random_mask(int height, int width, double ratio, std::uint64_t seed);

}  // namespace hei
