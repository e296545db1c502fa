#include <doctest.h>

#include <algorithm>
#include <set>

#include "hyperei/operators.hpp"
#include "testutil.hpp"

using namespace hei;

TEST_CASE("apply_mask: definition, identity, idempotence, projection") {
  const HsiCube x = testutil::random_cube(6, 7, 3, 1);
  SpatialMask ones(6, 7);
  CHECK((apply_mask(x, ones).data == x.data).all());

  const SpatialMask mask = make_stripe_mask(6, 7, {{2, 4}});
  const HsiCube y = apply_mask(x, mask);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 7; ++j)
        CHECK(y.at(b, i, j) == (mask.at(i, j) ? x.at(b, i, j) : 0.0f));

  CHECK((apply_mask(y, mask).data == y.data).all());  // M(Mx) = Mx
  CHECK(y.data.square().sum() <= x.data.square().sum());

  SpatialMask wrong(5, 7);
  CHECK_THROWS_AS(apply_mask(x, wrong), ShapeError);
}

TEST_CASE("apply_shift: identity, inverse, conservation") {
  const HsiCube x = testutil::random_cube(5, 8, 2, 2);
  CHECK((apply_shift(x, {0, 0}).data == x.data).all());

  const GroupAction g{1, 0};
  CHECK((apply_shift(apply_shift(x, g), inverse(g)).data == x.data).all());
  const GroupAction h{3, 4};
  CHECK((apply_shift(apply_shift(x, h), inverse(h)).data == x.data).all());
  CHECK(inverse(inverse(h)) == h);

  // shifts permute samples: per band, the value multiset is exactly
  // preserved (and so the sum, up to float reassociation)
  const HsiCube s = apply_shift(x, {2, 3});
  for (int b = 0; b < 2; ++b) {
    CHECK(s.band(b).sum() == doctest::Approx(x.band(b).sum()).epsilon(1e-5));
    std::vector<float> vx(x.band(b).data(), x.band(b).data() + x.plane());
    std::vector<float> vs(s.band(b).data(), s.band(b).data() + s.plane());
    std::sort(vx.begin(), vx.end());
    std::sort(vs.begin(), vs.end());
    CHECK(vx == vs);
  }

  // shifted content lands where expected
  CHECK(apply_shift(x, {1, 2}).at(0, 2, 1) == x.at(0, 0, 0));
}

TEST_CASE("group law: composition adds offsets") {
  const HsiCube x = testutil::random_cube(6, 6, 1, 3);
  const GroupAction g{2, 1}, h{5, 4};
  const HsiCube lhs = apply_shift(x, compose(g, h));
  const HsiCube rhs = apply_shift(apply_shift(x, h), g);
  CHECK((lhs.data == rhs.data).all());
  // offsets reduce modulo dims
  CHECK((apply_shift(x, {6, 6}).data == x.data).all());
  CHECK((apply_shift(x, {-1, -1}).data == apply_shift(x, {5, 5}).data).all());
}

TEST_CASE("sample_group: excludes identity, covers T^2-1 actions") {
  GroupConfig cfg{2};
  Rng rng(7);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 500; ++i) {
    const GroupAction g = sample_group(rng, cfg);
    CHECK((g.dx != 0 || g.dy != 0));
    CHECK(g.dx >= 0);
    CHECK(g.dx < 2);
    CHECK(g.dy >= 0);
    CHECK(g.dy < 2);
    seen.insert({g.dx, g.dy});
  }
  CHECK(seen == std::set<std::pair<int, int>>{{0, 1}, {1, 0}, {1, 1}});

  CHECK_THROWS_AS(sample_group(rng, GroupConfig{1}), ConfigError);

  // deterministic per rng state
  Rng r1(99), r2(99);
  for (int i = 0; i < 100; ++i) CHECK(sample_group(r1, cfg) == sample_group(r2, cfg));
}

TEST_CASE("sample_group: empirical distribution uniform (chi-square oracle)") {
  const GroupConfig cfg{7};
  const int cells = 7 * 7;
  auto tally = [&](long draws, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<long> counts(std::size_t(cells), 0);
    for (long i = 0; i < draws; ++i) {
      const GroupAction g = sample_group(rng, cfg);
      ++counts[std::size_t(g.dy * 7 + g.dx)];
    }
    return counts;
  };

  // chi-square at 10^6 draws; 99.9th percentile of chi-square(47) ~ 84.0.
  // (A per-cell 1% bound is not meaningful at 10^6 draws: one cell's
  // relative sigma is already 0.69%, so even a perfect sampler exceeds 1%
  // somewhere with overwhelming probability.)
  {
    const auto counts = tally(1'000'000, 12345);
    CHECK(counts[0] == 0);  // identity never drawn
    const double expected = 1'000'000.0 / (cells - 1);
    double chi2 = 0.0;
    for (int c = 1; c < cells; ++c)
      chi2 += (counts[std::size_t(c)] - expected) * (counts[std::size_t(c)] - expected) / expected;
    CHECK(chi2 < 84.0);
  }

  // per-cell 1% relative bound, at a draw count where 1% means 4.6 sigma
  {
    const long draws = 10'000'000;
    const auto counts = tally(draws, 777);
    const double expected = double(draws) / (cells - 1);
    for (int c = 1; c < cells; ++c)
      CHECK(std::abs(counts[std::size_t(c)] - expected) / expected < 0.01);
  }
}

TEST_CASE("mask_matrix: selection structure") {
  SpatialMask ones(2, 2);
  CHECK(mask_matrix(ones).isApprox(Eigen::MatrixXd::Identity(4, 4)));

  SpatialMask m3(2, 2);
  m3.bits[2] = 0;  // one missing pixel of four
  const OperatorMatrix mm = mask_matrix(m3);
  CHECK(mm.rows() == 3);
  CHECK(mm.cols() == 4);
  CHECK(testutil::gaussian_rank(mm) == 3);
  // entries in {0,1}, exactly one 1 per row
  for (Eigen::Index r = 0; r < mm.rows(); ++r) {
    CHECK(mm.row(r).sum() == 1.0);
    CHECK(((mm.row(r).array() == 0.0) || (mm.row(r).array() == 1.0)).all());
  }
}

TEST_CASE("mask_matrix: product equals apply_mask then dropping masked entries") {
  const SpatialMask mask = make_random_mask(5, 6, 0.3, 4);
  const OperatorMatrix mm = mask_matrix(mask);
  for (std::uint64_t seed : {10ull, 11ull}) {
    const HsiCube x = testutil::random_cube(5, 6, 1, seed);
    const Eigen::VectorXd prod = mm * testutil::vec_band(x, 0);
    const HsiCube masked = apply_mask(x, mask);
    Eigen::Index r = 0;
    for (Eigen::Index p = 0; p < mask.size(); ++p)
      if (mask.bits[p]) CHECK(prod[r++] == doctest::Approx(double(masked.data[p])).epsilon(1e-12));
    CHECK(r == prod.size());
  }
}

TEST_CASE("shift_matrix: permutation structure and equivalence") {
  CHECK(shift_matrix({0, 0}, 3, 4).isApprox(Eigen::MatrixXd::Identity(12, 12)));

  const GroupAction g{2, 1};
  const OperatorMatrix sm = shift_matrix(g, 4, 5);
  CHECK((sm.rowwise().sum().array() == 1.0).all());
  CHECK((sm.colwise().sum().array() == 1.0).all());
  CHECK((sm * shift_matrix(inverse(g), 4, 5)).isApprox(Eigen::MatrixXd::Identity(20, 20)));

  const HsiCube x = testutil::random_cube(4, 5, 1, 21);
  const Eigen::VectorXd shifted = sm * testutil::vec_band(x, 0);
  CHECK(shifted.isApprox(testutil::vec_band(apply_shift(x, g), 0)));
}

TEST_CASE("virtual_operator: Eq-style identities") {
  const SpatialMask mask = make_stripe_mask(4, 4, {{1, 2}});
  CHECK(virtual_operator(mask, {0, 0}, 4, 4).isApprox(mask_matrix(mask)));

  const GroupAction g{1, 2};
  const OperatorMatrix vo = virtual_operator(mask, g, 4, 4);
  // M~ vec(T_g x) = M vec(x)
  for (std::uint64_t seed : {31ull, 32ull}) {
    const HsiCube x = testutil::random_cube(4, 4, 1, seed);
    const Eigen::VectorXd lhs = vo * testutil::vec_band(apply_shift(x, g), 0);
    const Eigen::VectorXd rhs = mask_matrix(mask) * testutil::vec_band(x, 0);
    CHECK(lhs.isApprox(rhs, 1e-12));
  }

  // rows are distinct standard basis vectors
  std::set<Eigen::Index> hit;
  for (Eigen::Index r = 0; r < vo.rows(); ++r) {
    CHECK(vo.row(r).sum() == 1.0);
    Eigen::Index col;
    CHECK(vo.row(r).maxCoeff(&col) == 1.0);
    CHECK(hit.insert(col).second);
  }

  // matrix identity: M * S(g^-1) * S(g) = M exactly
  const OperatorMatrix lhs = mask_matrix(mask) * shift_matrix(inverse(g), 4, 4) * shift_matrix(g, 4, 4);
  CHECK((lhs - mask_matrix(mask)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("matrix builders enforce the size guard") {
  SpatialMask big(65, 64);
  CHECK_THROWS_AS(mask_matrix(big), CapacityError);
  CHECK_THROWS_AS(shift_matrix({1, 0}, 65, 64), CapacityError);
  CHECK_THROWS_AS(nullspace_coverage(big, {{1, 0}}, 65, 64), CapacityError);
}

TEST_CASE("nullspace_coverage: worked 4x4 examples (rank oracle)") {
  // all-ones mask is already full rank with any group
  SpatialMask ones(4, 4);
  const auto full = nullspace_coverage(ones, {{1, 1}}, 4, 4);
  CHECK(full.full);
  CHECK(full.stacked_rank == 16);
  CHECK(full.missing_dims == 0);

  // one dead column, one horizontal shift: the shifted copies observe it
  const SpatialMask one_col = make_stripe_mask(4, 4, {{1, 2}});
  const auto covered = nullspace_coverage(one_col, {{1, 0}}, 4, 4);
  CHECK(covered.full);
  CHECK(covered.stacked_rank == 16);

  // two dead columns, same single shift: one column stays unseen
  const SpatialMask two_cols = make_stripe_mask(4, 4, {{1, 3}});
  const auto uncovered = nullspace_coverage(two_cols, {{1, 0}}, 4, 4);
  CHECK(!uncovered.full);
  CHECK(uncovered.missing_dims > 0);
  CHECK(uncovered.missing_dims == 4);

  // cross-check both ranks against the elimination oracle
  auto stack_rank = [](const SpatialMask& mask, const std::vector<GroupAction>& actions) {
    OperatorMatrix pile(mask_matrix(mask).rows() * Eigen::Index(actions.size() + 1), 16);
    pile.topRows(mask_matrix(mask).rows()) = mask_matrix(mask);
    for (std::size_t a = 0; a < actions.size(); ++a)
      pile.middleRows(mask_matrix(mask).rows() * Eigen::Index(a + 1), mask_matrix(mask).rows()) =
          virtual_operator(mask, actions[a], 4, 4);
    return testutil::gaussian_rank(pile);
  };
  CHECK(stack_rank(one_col, {{1, 0}}) == covered.stacked_rank);
  CHECK(stack_rank(two_cols, {{1, 0}}) == uncovered.stacked_rank);
}

TEST_CASE("nullspace_coverage: default shift group spans stripe masks of width < 7") {
  const auto group = all_actions(GroupConfig{7});
  CHECK(group.size() == 48);
  for (int width = 1; width <= 6; ++width) {
    const SpatialMask mask = make_stripe_mask(8, 8, {{1, 1 + width}});
    const auto report = nullspace_coverage(mask, group, 8, 8);
    CHECK(report.full);
  }
  // non-square grid too
  const SpatialMask mask = make_stripe_mask(9, 11, {{2, 8}});
  CHECK(nullspace_coverage(mask, group, 9, 11).full);
  // width 7 with the T=7 group leaves a dead column
  const SpatialMask wide = make_stripe_mask(8, 8, {{0, 7}});
  CHECK(!nullspace_coverage(wide, group, 8, 8).full);
}
