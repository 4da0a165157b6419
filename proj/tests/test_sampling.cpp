#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "tsdq/sampling.hpp"

using namespace tsdq;

TEST_CASE("equispaced masks follow the floor rule") {
  const AngleMask m = equispaced_mask(4, 8);
  CHECK(m.indices == std::vector<int>{0, 2, 4, 6});
  const AngleMask m2 = equispaced_mask(12, 60);
  for (int j = 0; j < 12; ++j) CHECK(m2.indices[static_cast<std::size_t>(j)] == 5 * j);
}

TEST_CASE("uniform subsets hit every subset at the right frequency") {
  MaskDistribution dist{MaskKind::kUniformSubset, 2, 4};
  RngStream rng(99);
  std::map<std::vector<int>, long> counts;
  const long n = 100000;
  for (long i = 0; i < n; ++i) {
    RngStream draw = rng.fork(static_cast<std::uint64_t>(i));
    counts[sample_mask(dist, draw).indices] += 1;
  }
  CHECK(counts.size() == 6);
  for (const auto& [sub, c] : counts) {
    CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 6.0) < 0.01);
  }
}

TEST_CASE("full-size uniform subset is always the full index set") {
  MaskDistribution dist{MaskKind::kUniformSubset, 5, 5};
  RngStream rng(3);
  for (int i = 0; i < 50; ++i) {
    RngStream draw = rng.fork(static_cast<std::uint64_t>(i));
    CHECK(sample_mask(dist, draw).indices == std::vector<int>{0, 1, 2, 3, 4});
  }
}

TEST_CASE("masks always satisfy the AngleMask invariants") {
  MaskDistribution dist{MaskKind::kUniformSubset, 7, 23};
  RngStream rng(17);
  for (int i = 0; i < 10000; ++i) {
    RngStream draw = rng.fork(static_cast<std::uint64_t>(i));
    const AngleMask m = sample_mask(dist, draw);
    CHECK_NOTHROW(m.validate());
    CHECK(m.count() == 7);
  }
}

TEST_CASE("complementary split basics") {
  MaskDistribution tiny{MaskKind::kComplementarySplit, 2, 2};
  RngStream rng(5);
  RngStream draw = rng.fork(0);
  auto [a, b] = split_complementary(tiny, draw);
  std::set<int> all(a.indices.begin(), a.indices.end());
  all.insert(b.indices.begin(), b.indices.end());
  CHECK(all == std::set<int>{0, 1});

  MaskDistribution dist{MaskKind::kComplementarySplit, 4, 6};
  for (int i = 0; i < 10000; ++i) {
    RngStream d = rng.fork(static_cast<std::uint64_t>(i) + 1);
    auto [m1, m2] = split_complementary(dist, d);
    CHECK(m1.count() == 2);
    CHECK(m2.count() == 2);
    std::set<int> u(m1.indices.begin(), m1.indices.end());
    for (int idx : m2.indices) CHECK(u.insert(idx).second);  // disjoint
    CHECK(u.size() == 4);
  }

  MaskDistribution odd{MaskKind::kComplementarySplit, 3, 6};
  RngStream d2 = rng.fork(999);
  CHECK_THROWS_AS(split_complementary(odd, d2), std::invalid_argument);
}

TEST_CASE("complementary halves are marginally uniform over 2-subsets") {
  MaskDistribution dist{MaskKind::kComplementarySplit, 4, 6};
  RngStream rng(31);
  std::map<std::vector<int>, long> first, second;
  const long n = 100000;
  for (long i = 0; i < n; ++i) {
    RngStream draw = rng.fork(static_cast<std::uint64_t>(i));
    auto [a, b] = split_complementary(dist, draw);
    first[a.indices] += 1;
    second[b.indices] += 1;
  }
  CHECK(first.size() == 15);
  CHECK(second.size() == 15);
  for (const auto& [sub, c] : first) {
    CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 15.0) < 0.01);
  }
  for (const auto& [sub, c] : second) {
    CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 15.0) < 0.01);
  }
}

TEST_CASE("weight diagonal values") {
  MaskDistribution paper{MaskKind::kUniformSubset, 16, 384};
  const WeightDiagonal w = compute_weight_diagonal(paper);
  for (double v : w.per_angle) CHECK(v == doctest::Approx(std::sqrt(24.0)).epsilon(1e-14));

  MaskDistribution full{MaskKind::kUniformSubset, 384, 384};
  for (double v : compute_weight_diagonal(full).per_angle) {
    CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
  }

  MaskDistribution fixed{MaskKind::kEquispacedFixed, 2, 4};
  const WeightDiagonal wf = compute_weight_diagonal(fixed);
  CHECK(wf.per_angle == std::vector<double>{1.0, 0.0, 1.0, 0.0});
}

TEST_CASE("expected_mask_gram: exact enumeration and Monte Carlo") {
  MaskDistribution paper{MaskKind::kUniformSubset, 16, 384};
  // Closed form from the uniform-sampling identity.
  MaskDistribution small{MaskKind::kUniformSubset, 2, 6};
  const std::vector<double> exact = expected_mask_gram(small, GramMode::kExact);
  for (double v : exact) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const std::int64_t n_draws = 1000000;
  const std::vector<double> mc =
      expected_mask_gram(small, GramMode::kMonteCarlo, n_draws, 123);
  const double p = 1.0 / 3.0;
  const double bound = 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n_draws));
  for (std::size_t i = 0; i < mc.size(); ++i) CHECK(std::abs(mc[i] - exact[i]) < bound);

  // Budget guard: C(384, 16) blows past the enumeration budget.
  CHECK_THROWS_WITH_AS(expected_mask_gram(paper, GramMode::kExact),
                       doctest::Contains("monte-carlo"), std::invalid_argument);
}

TEST_CASE("weighted residual norm matches a dense W on a toy instance") {
  MaskDistribution dist{MaskKind::kUniformSubset, 2, 4};
  const WeightDiagonal w = compute_weight_diagonal(dist);
  AngleMask mask;
  mask.indices = {1, 3};
  mask.n_angles_total = 4;
  const int n_det = 3;
  Sinogram z(2, n_det);
  RngStream rng(77);
  for (auto& v : z.data) v = rng.next_gaussian();

  // Dense W = M' Wbar (M' Wbar)^T acting on the masked vector.
  double expected = 0.0;
  for (int j = 0; j < 2; ++j) {
    const double wj = w.for_angle(mask.indices[static_cast<std::size_t>(j)]);
    for (int d = 0; d < n_det; ++d) {
      const double zi = z.at(j, d);
      expected += zi * (wj * wj) * zi;
    }
  }
  CHECK(weighted_residual_norm_sq(z, mask, w) == doctest::Approx(expected).epsilon(1e-12));

  Sinogram zero(2, n_det);
  CHECK(weighted_residual_norm_sq(zero, mask, w) == 0.0);

  WeightDiagonal ones;
  ones.n_angles_total = 4;
  ones.per_angle = {1.0, 1.0, 1.0, 1.0};
  CHECK(weighted_residual_norm_sq(z, mask, ones) ==
        doctest::Approx(dot(z.data, z.data)).epsilon(1e-14));
}

TEST_CASE("weighting identity: E[M^T W M] = I for uniform subsets") {
  for (int n : {6, 8}) {
    for (int s : {2, 3}) {
      MaskDistribution dist{MaskKind::kUniformSubset, s, n};
      const WeightDiagonal w = compute_weight_diagonal(dist);
      const std::vector<double> gram = expected_mask_gram(dist, GramMode::kExact);
      for (int k = 0; k < n; ++k) {
        const double wk = w.per_angle[static_cast<std::size_t>(k)];
        CHECK(wk * wk * gram[static_cast<std::size_t>(k)] ==
              doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("mask CSV round trip") {
  AngleMask m;
  m.indices = {0, 7, 13};
  m.n_angles_total = 20;
  CHECK(m.to_csv_field() == "0,7,13");
  const AngleMask back = mask_from_csv_field("0,7,13", 20);
  CHECK(back.indices == m.indices);
  CHECK_THROWS_AS(mask_from_csv_field("5,5", 20), std::invalid_argument);
}
