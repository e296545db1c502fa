#include <doctest.h>

#include "hyperei/metrics.hpp"
#include "hyperei/operators.hpp"
#include "testutil.hpp"

using namespace hei;

TEST_CASE("psnr: pinned values and the 100 dB cap") {
  HsiCube a(12, 12, 1), b(12, 12, 1);
  CHECK(psnr(a.band(0), b.band(0), 1.0) == 100.0);

  b.data.setConstant(0.1f);  // mse 0.01 up to float32 rounding of 0.1
  CHECK(psnr(a.band(0), b.band(0), 1.0) == doctest::Approx(20.0).epsilon(1e-7));

  b.data.setConstant(1e-9f);  // tiny but nonzero mse still capped
  CHECK(psnr(a.band(0), b.band(0), 1.0) == 100.0);

  CHECK_THROWS_AS(psnr(a.band(0), b.band(0), 0.0), ConfigError);
}

TEST_CASE("psnr: matches the one-line reference on 50 random pairs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const HsiCube a = testutil::random_cube(11, 13, 1, 2 * seed);
    const HsiCube b = testutil::random_cube(11, 13, 1, 2 * seed + 1);
    CHECK(psnr(a.band(0), b.band(0), 1.0) ==
          doctest::Approx(testutil::reference_psnr(a, b, 0, 1.0)).epsilon(1e-9));
  }
}

TEST_CASE("psnr: strictly decreases as nested perturbations grow") {
  const HsiCube ref = testutil::random_cube(16, 16, 1, 5);
  double prev = 101.0;
  for (int k = 1; k <= 6; ++k) {
    HsiCube noisy = ref;
    noisy.data += 0.002f * float(k);
    const double p = psnr(noisy.band(0), ref.band(0), 1.0);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim: identical bands give exactly 1") {
  const HsiCube a = testutil::random_cube(14, 17, 1, 9);
  CHECK(ssim(a.band(0), a.band(0), 1.0) == 1.0);
}

TEST_CASE("ssim: anticorrelated binary band scores negative") {
  HsiCube a(16, 16, 1), b(16, 16, 1);
  Rng rng(4);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data[i] = rng.next_unit() < 0.5 ? 0.0f : 1.0f;
    b.data[i] = 1.0f - a.data[i];
  }
  CHECK(ssim(a.band(0), b.band(0), 1.0) < 0.0);
  CHECK(ssim(a.band(0), b.band(0), 1.0) ==
        doctest::Approx(testutil::reference_ssim(a, b, 0, 1.0)).epsilon(1e-6));
}

TEST_CASE("ssim: symmetric in its arguments") {
  const HsiCube a = testutil::random_cube(13, 12, 1, 6);
  const HsiCube b = testutil::random_cube(13, 12, 1, 7);
  CHECK(ssim(a.band(0), b.band(0), 1.0) ==
        doctest::Approx(ssim(b.band(0), a.band(0), 1.0)).epsilon(1e-12));
}

TEST_CASE("ssim: approaches 1 as the perturbation vanishes") {
  const HsiCube ref = testutil::random_cube(16, 16, 1, 8);
  auto perturbed = [&](float eps) {
    HsiCube n = ref;
    Rng rng(99);
    for (Eigen::Index i = 0; i < n.size(); ++i)
      n.data[i] += eps * float(rng.next_real(-1.0, 1.0));
    return n;
  };
  const double s3 = ssim(perturbed(1e-3f).band(0), ref.band(0), 1.0);
  const double s4 = ssim(perturbed(1e-4f).band(0), ref.band(0), 1.0);
  CHECK(s3 < s4);
  CHECK(s4 > 0.9999);
  CHECK(s3 > 0.99);
}

TEST_CASE("ssim: refuses images under the window size") {
  const HsiCube tiny = testutil::random_cube(10, 14, 1, 3);
  CHECK_THROWS_AS(ssim(tiny.band(0), tiny.band(0), 1.0), ConfigError);
}

TEST_CASE("ssim: matches the windowed reference on 50 random pairs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const HsiCube a = testutil::random_cube(12, 15, 1, 1000 + 2 * seed);
    const HsiCube b = testutil::random_cube(12, 15, 1, 1001 + 2 * seed);
    CHECK(ssim(a.band(0), b.band(0), 1.0) ==
          doctest::Approx(testutil::reference_ssim(a, b, 0, 1.0)).epsilon(1e-6));
  }
}

TEST_CASE("evaluate: identical cubes, mean arithmetic, shape guard") {
  const HsiCube ref = testutil::random_cube(16, 16, 4, 20);
  const QualityReport perfect = evaluate(ref, ref);
  CHECK(perfect.mpsnr == 100.0);
  CHECK(perfect.mssim == 1.0);
  REQUIRE(perfect.per_band.size() == 4);

  HsiCube other = testutil::random_cube(16, 16, 4, 21);
  const QualityReport rep = evaluate(other, ref);
  double psum = 0, ssum = 0;
  for (const auto& row : rep.per_band) {
    psum += row.psnr;
    ssum += row.ssim;
  }
  CHECK(rep.mpsnr == doctest::Approx(psum / 4).epsilon(1e-12));
  CHECK(rep.mssim == doctest::Approx(ssum / 4).epsilon(1e-12));
  CHECK(rep.per_band[2].psnr == testutil::reference_psnr(other, ref, 2, 1.0));

  const HsiCube wrong = testutil::random_cube(16, 8, 4, 22);
  CHECK_THROWS_AS(evaluate(wrong, ref), ShapeError);
}

TEST_CASE("evaluate: degraded input scores far below the reference row") {
  const HsiCube ref = synth_cube({32, 32, 8, 3, 2.0, 7});
  const SpatialMask mask = make_stripe_mask(32, 32, {{14, 18}});
  const HsiCube degraded = apply_mask(ref, mask);
  const QualityReport rep = evaluate(degraded, ref, &mask);
  CHECK(rep.mpsnr < 40.0);
  CHECK(rep.mssim < 0.99);
  CHECK(rep.mpsnr > 0.0);
}

TEST_CASE("evaluate: masked-only restricts psnr but keeps ssim full-frame") {
  const HsiCube ref = testutil::random_cube(16, 16, 2, 30);
  const SpatialMask mask = make_rect_mask(16, 16, 4, 4, 5, 5);
  HsiCube recon = ref;
  // corrupt one masked pixel and one observed pixel by the same amount
  recon.at(0, 5, 5) += 0.25f;   // masked (inside the rect)
  recon.at(0, 1, 1) += 0.25f;   // observed

  const QualityReport full = evaluate(recon, ref, &mask, Region::Full);
  const QualityReport masked = evaluate(recon, ref, &mask, Region::MaskedOnly);
  CHECK(masked.region == Region::MaskedOnly);
  CHECK(masked.ssim_full_frame);

  // masked-only mse: one error over 25 pixels; full-frame: two errors over 256
  const double mse_masked = 0.25 * 0.25 / 25.0;
  const double mse_full = 2 * 0.25 * 0.25 / 256.0;
  CHECK(masked.per_band[0].psnr ==
        doctest::Approx(10 * std::log10(1.0 / mse_masked)).epsilon(1e-6));
  CHECK(full.per_band[0].psnr == doctest::Approx(10 * std::log10(1.0 / mse_full)).epsilon(1e-6));
  // ssim identical between the two reports (both full-frame)
  CHECK(masked.per_band[0].ssim == full.per_band[0].ssim);
  CHECK(masked.per_band[1].psnr == 100.0);  // band 1 untouched

  CHECK_THROWS_AS(evaluate(recon, ref, nullptr, Region::MaskedOnly), ConfigError);
  SpatialMask all_observed(16, 16);
  CHECK_THROWS_AS(evaluate(recon, ref, &all_observed, Region::MaskedOnly), ConfigError);
}
