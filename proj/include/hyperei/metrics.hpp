#pragma once

#include <optional>
#include <vector>

#include "cube.hpp"

namespace hei {

enum class Region { Full, MaskedOnly };

struct BandScore {
  int band = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct QualityReport {
  double mpsnr = 0.0;  // arithmetic mean of per-band psnr (dB)
  double mssim = 0.0;  // arithmetic mean of per-band ssim
  std::vector<BandScore> per_band;
  Region region = Region::Full;
  // In masked-only reports the psnr column is restricted to masked pixels
  // but ssim stays full-frame (a windowed statistic has no meaning on
  // scattered pixels); this flag records that caveat.
  bool ssim_full_frame = true;
};

// 10*log10(peak^2 / mse), capped at 100 dB so identical inputs stay finite.
double psnr(BandView a, BandView b, double peak);

// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01*peak)^2,
// C2=(0.03*peak)^2, symmetric boundary handling. Needs min(H,W) >= 11.
double ssim(BandView a, BandView b, double peak);

// Per-band scores and their means, peak fixed at 1.0 for normalized cubes.
// With region == MaskedOnly a mask is required and psnr is computed over
// masked (missing) pixels only.
QualityReport evaluate(const HsiCube& x_hat, const HsiCube& reference,
                       const SpatialMask* mask = nullptr, Region region = Region::Full);

}  // namespace hei
