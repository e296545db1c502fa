#include "hyperei/metrics.hpp"

#include <cmath>

namespace hei {

namespace {

constexpr double kPsnrCap = 100.0;
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

double mse_full(BandView a, BandView b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double d = double(a(i, j)) - double(b(i, j));
      acc += d * d;
    }
  return acc / double(a.size());
}

// symmetric (edge-repeating) mirror: -1 -> 0, -2 -> 1, n -> n-1, ...
int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i = ((i % period) + period) % period;
  return i < n ? i : period - 1 - i;
}

using Plane = Eigen::ArrayXXd;

// separable Gaussian filter with symmetric boundary
Plane gauss_filter(const Plane& in) {
  static const auto kernel = [] {
    std::array<double, kWindow> k{};
    double s = 0.0;
    for (int t = 0; t < kWindow; ++t) {
      const double d = t - (kWindow - 1) / 2.0;
      k[std::size_t(t)] = std::exp(-0.5 * d * d / (kSigma * kSigma));
      s += k[std::size_t(t)];
    }
    for (auto& v : k) v /= s;
    return k;
  }();
  const int h = int(in.rows()), w = int(in.cols()), r = (kWindow - 1) / 2;
  Plane tmp(h, w), out(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += kernel[std::size_t(t + r)] * in(i, mirror(j + t, w));
      tmp(i, j) = acc;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += kernel[std::size_t(t + r)] * tmp(mirror(i + t, h), j);
      out(i, j) = acc;
    }
  return out;
}

void check_shapes(BandView a, BandView b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": band shapes disagree");
}

}  // namespace

double psnr(BandView a, BandView b, double peak) {
  check_shapes(a, b, "psnr");
  if (peak <= 0.0) throw ConfigError("psnr: peak must be positive");
  const double mse = mse_full(a, b);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(BandView a, BandView b, double peak) {
  check_shapes(a, b, "ssim");
  if (peak <= 0.0) throw ConfigError("ssim: peak must be positive");
  if (a.rows() < kWindow || a.cols() < kWindow)
    throw ConfigError("ssim: image must be at least " + std::to_string(kWindow) + "x" +
                      std::to_string(kWindow));
  const double c1 = 0.01 * peak * 0.01 * peak;
  const double c2 = 0.03 * peak * 0.03 * peak;

  const Plane pa = a.cast<double>();
  const Plane pb = b.cast<double>();
  const Plane mu_a = gauss_filter(pa);
  const Plane mu_b = gauss_filter(pb);
  const Plane var_a = gauss_filter(pa * pa) - mu_a * mu_a;
  const Plane var_b = gauss_filter(pb * pb) - mu_b * mu_b;
  const Plane cov = gauss_filter(pa * pb) - mu_a * mu_b;

  const Plane num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
  const Plane den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
  return (num / den).mean();
}

QualityReport evaluate(const HsiCube& x_hat, const HsiCube& reference, const SpatialMask* mask,
                       Region region) {
  if (!x_hat.same_dims(reference))
    throw ShapeError("evaluate: cube dimensions disagree");
  if (region == Region::MaskedOnly) {
    if (!mask) throw ConfigError("evaluate: masked-only region requires a mask");
    if (mask->height != x_hat.height || mask->width != x_hat.width)
      throw ShapeError("evaluate: mask dimensions disagree with cubes");
    if (mask->observed_count() == mask->size())
      throw ConfigError("evaluate: mask has no masked pixels to restrict to");
  }

  constexpr double peak = 1.0;
  QualityReport report;
  report.region = region;
  report.per_band.reserve(std::size_t(x_hat.bands));
  double psnr_acc = 0.0, ssim_acc = 0.0;
  for (int b = 0; b < x_hat.bands; ++b) {
    BandScore score;
    score.band = b;
    if (region == Region::MaskedOnly) {
      double acc = 0.0;
      Eigen::Index cnt = 0;
      for (Eigen::Index p = 0; p < mask->size(); ++p)
        if (!mask->bits[p]) {
          const double d = double(x_hat.data[Eigen::Index(b) * x_hat.plane() + p]) -
                           double(reference.data[Eigen::Index(b) * x_hat.plane() + p]);
          acc += d * d;
          ++cnt;
        }
      const double mse = acc / double(cnt);
      score.psnr = mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
    } else {
      score.psnr = psnr(x_hat.band(b), reference.band(b), peak);
    }
    score.ssim = ssim(x_hat.band(b), reference.band(b), peak);
    psnr_acc += score.psnr;
    ssim_acc += score.ssim;
    report.per_band.push_back(score);
  }
  report.mpsnr = psnr_acc / double(x_hat.bands);
  report.mssim = ssim_acc / double(x_hat.bands);
  return report;
}

}  // namespace hei
