#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "subradius/domination.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

using namespace subradius;

namespace {

Matrix rot(double theta) {
  Matrix m(2, 2);
  m << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return m;
}

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 * 2.0 - 1.0;
}

Matrix random_invertible(std::mt19937_64& rng, int d, double min_abs_det = 0.05) {
  for (;;) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = unit_draw(rng);
    if (std::abs(m.determinant()) >= min_abs_det) return m;
  }
}

// Exhaustive reference profile straight from dense SVDs of plain products.
struct BruteProfile {
  std::vector<double> max_ratio;
  std::vector<Word> witness;
};

BruteProfile brute_profile(const MatrixSet& set, int k, int n_max) {
  BruteProfile out;
  out.max_ratio.assign(static_cast<std::size_t>(n_max), -1.0);
  out.witness.assign(static_cast<std::size_t>(n_max), Word{});
  const int K = set.size();
  for (int len = 1; len <= n_max; ++len) {
    std::vector<int> idx(static_cast<std::size_t>(len), 0);
    for (;;) {
      const Word w{idx};
      Eigen::JacobiSVD<Matrix> svd(product(set, w));
      const auto& sv = svd.singularValues();
      const double r = sv(k) / sv(k - 1);
      if (r > out.max_ratio[static_cast<std::size_t>(len - 1)]) {
        out.max_ratio[static_cast<std::size_t>(len - 1)] = r;
        out.witness[static_cast<std::size_t>(len - 1)] = w;
      }
      int p = len - 1;
      while (p >= 0 && idx[static_cast<std::size_t>(p)] == K - 1) {
        idx[static_cast<std::size_t>(p)] = 0;
        --p;
      }
      if (p < 0) break;
      ++idx[static_cast<std::size_t>(p)];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("ratio profile matches exhaustive SVD enumeration") {
  std::mt19937_64 rng(907111);
  for (int trial = 0; trial < 12; ++trial) {
    const int d = 2 + trial % 2;  // alternate 2x2 and 3x3
    MatrixSet set(d, {random_invertible(rng, d), random_invertible(rng, d)});
    const int n_max = 6;
    for (int k = 1; k < d; ++k) {
      const RatioProfile prof = ratio_profile(set, k, n_max);
      const BruteProfile ref = brute_profile(set, k, n_max);
      REQUIRE(prof.complete);
      for (int n = 1; n <= n_max; ++n) {
        const double got = prof.max_ratio[static_cast<std::size_t>(n - 1)];
        const double want = ref.max_ratio[static_cast<std::size_t>(n - 1)];
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
        // The recorded witness must itself attain the maximum.
        Eigen::JacobiSVD<Matrix> svd(product(set, prof.witness[static_cast<std::size_t>(n - 1)]));
        const auto& sv = svd.singularValues();
        CHECK(sv(k) / sv(k - 1) == doctest::Approx(want).epsilon(1e-9));
        CHECK(prof.witness[static_cast<std::size_t>(n - 1)].length() == n);
      }
    }
  }
}

TEST_CASE("profile is independent of the worker count") {
  std::mt19937_64 rng(424242);
  MatrixSet set(2, {random_invertible(rng, 2), random_invertible(rng, 2)});
  BracketConfig seq;
  seq.threads = 1;
  BracketConfig par;
  par.threads = 4;
  const RatioProfile a = ratio_profile(set, 1, 7, seq);
  const RatioProfile b = ratio_profile(set, 1, 7, par);
  REQUIRE(a.complete);
  REQUIRE(b.complete);
  for (int n = 0; n < 7; ++n) {
    CHECK(a.max_ratio[static_cast<std::size_t>(n)] == b.max_ratio[static_cast<std::size_t>(n)]);
    CHECK(a.witness[static_cast<std::size_t>(n)] == b.witness[static_cast<std::size_t>(n)]);
  }
}

TEST_CASE("exterior power reduction: k-domination profile equals lifted 1-profile") {
  std::mt19937_64 rng(5150);
  MatrixSet set(3, {random_invertible(rng, 3), random_invertible(rng, 3)});
  const MatrixSet lifted = lift_set(set, 2);
  const RatioProfile direct = ratio_profile(set, 2, 6);
  const RatioProfile reduced = ratio_profile(lifted, 1, 6);
  for (int n = 0; n < 6; ++n) {
    CHECK(direct.max_ratio[static_cast<std::size_t>(n)] ==
          doctest::Approx(reduced.max_ratio[static_cast<std::size_t>(n)]).epsilon(1e-9));
  }
}

TEST_CASE("singleton diag(2, 1/8): profile 16^-n, dominated and certified") {
  MatrixSet set(2, {diag2(2.0, 0.125)}, {"stretch"});
  const DominationReport rep = test_domination(set, 1, 12);
  for (int n = 1; n <= 12; ++n) {
    CHECK(rep.profile.max_ratio[static_cast<std::size_t>(n - 1)] ==
          doctest::Approx(std::pow(16.0, -n)).epsilon(1e-11));
  }
  CHECK(rep.slope == doctest::Approx(std::log(1.0 / 16.0)).epsilon(0.01));
  CHECK(rep.tau_fit == doctest::Approx(1.0 / 16.0).epsilon(0.01));
  CHECK(rep.r_squared >= 0.999);
  CHECK(rep.verdict == DominationVerdict::Dominated);
  REQUIRE(rep.multicone.has_value());
  CHECK(rep.certified);

  const DominationIndex idx = least_domination_index(set);
  CHECK(idx.ell == 1);
  REQUIRE(idx.per_k.size() == 1);
}

TEST_CASE("multicone for diag(2, 1/8): strict, around angle 0, narrow") {
  MatrixSet set(2, {diag2(2.0, 0.125)});
  const Multicone mc = find_multicone_2d(set);
  REQUIRE(mc.found);
  CHECK(mc.margin > 0.0);
  CHECK(mc.cone.contains(0.0, 1e-12));
  CHECK(mc.cone.total_length() <= kPi / 4.0);  // half-width at most pi/8
  CHECK(!mc.cone.is_full());
  CHECK(!mc.cone.empty());
  // The standalone margin evaluation agrees with the search result.
  CHECK(multicone_margin(set, mc.cone) == doctest::Approx(mc.margin).epsilon(1e-12));
}

TEST_CASE("pair with identity is not 1-dominated, index 2") {
  MatrixSet set(2, {diag2(2.0, 0.125), Matrix::Identity(2, 2)}, {"stretch", "id"});
  const DominationReport rep = test_domination(set, 1, 10);
  CHECK(rep.verdict == DominationVerdict::NotDominated);
  REQUIRE(rep.witness.has_value());
  // The identity word keeps the ratio at exactly 1 and is the shortest witness.
  CHECK(*rep.witness == Word{{1}});
  const DominationIndex idx = least_domination_index(set, 10);
  CHECK(idx.ell == 2);
  REQUIRE(idx.per_k.size() == 1);
  CHECK(idx.per_k[0].verdict == DominationVerdict::NotDominated);
}

TEST_CASE("rotation singleton: flat profile, no seeds for a cone") {
  MatrixSet set(2, {rot(kPi / 4.0)});
  const DominationReport rep = test_domination(set, 1, 8);
  for (int n = 1; n <= 8; ++n) {
    CHECK(rep.profile.max_ratio[static_cast<std::size_t>(n - 1)] >= 1.0 - 1e-12);
  }
  CHECK(rep.verdict == DominationVerdict::NotDominated);
  const Multicone mc = find_multicone_2d(set);
  CHECK(!mc.found);
  CHECK(mc.note.find("no real eigendirections") != std::string::npos);
}

TEST_CASE("reflection singleton: invariant cone exists but never strictly") {
  MatrixSet set(2, {diag2(1.0, -1.0)});
  const Multicone mc = find_multicone_2d(set);
  CHECK(!mc.found);
  CHECK(mc.note.find("invariant but not strictly") != std::string::npos);
  CHECK(mc.margin < 1e-7);
  CHECK(mc.margin >= -1e-9);
}

TEST_CASE("stretch plus quarter rotation: cone candidate blows up to the circle") {
  MatrixSet set(2, {diag2(2.0, 0.125), rot(kPi / 2.0)});
  const Multicone mc = find_multicone_2d(set);
  CHECK(!mc.found);
  CHECK(mc.note.find("whole projective circle") != std::string::npos);
}

TEST_CASE("triangular pair: dominated verdict certified by a strict multicone") {
  Matrix a2(2, 2);
  a2 << 2.0, 1.0, 0.25, 1.0;
  MatrixSet set(2, {diag2(2.0, 0.125), a2});
  const DominationReport rep = test_domination(set, 1, 12);
  CHECK(rep.verdict == DominationVerdict::Dominated);
  CHECK(rep.slope < 0.0);
  CHECK(rep.tau_fit < 1.0);
  REQUIRE(rep.multicone.has_value());
  CHECK(rep.multicone->found);
  CHECK(rep.multicone->margin > 0.0);
  CHECK(rep.certified);
}

TEST_CASE("positive matrices: strict cones, negative slopes, perturbation robustness") {
  std::mt19937_64 rng(783201);
  int found_count = 0;
  for (int trial = 0; trial < 10; ++trial) {
    // Entrywise-positive pairs leave the first quadrant invariant, so they are
    // 1-dominated with a comfortable margin.
    auto positive = [&]() {
      for (;;) {
        Matrix m(2, 2);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) m(i, j) = 0.2 + 1.8 * std::abs(unit_draw(rng));
        Eigen::JacobiSVD<Matrix> svd(m);
        if (svd.singularValues()(1) >= 0.3) return m;
      }
    };
    MatrixSet set(2, {positive(), positive()});
    const Multicone mc = find_multicone_2d(set);
    REQUIRE(mc.found);
    ++found_count;
    const DominationReport rep = test_domination(set, 1, 10);
    CHECK(rep.slope < 0.0);
    CHECK(rep.verdict == DominationVerdict::Dominated);

    // A strict cone with margin m survives perturbations an order smaller.
    Matrix e(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) e(i, j) = unit_draw(rng);
    e *= (mc.margin / 10.0) / operator_norm(e);
    MatrixSet bumped(2, {set.matrix(0) + e, set.matrix(1) - e});
    CHECK(find_multicone_2d(bumped).found);
  }
  CHECK(found_count == 10);
}

TEST_CASE("diag(3,3,1): least domination index 2 with slope log 1/3") {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 3.0;
  m(1, 1) = 3.0;
  m(2, 2) = 1.0;
  MatrixSet set(3, {m});
  const DominationIndex idx = least_domination_index(set, 12);
  CHECK(idx.ell == 2);
  REQUIRE(idx.per_k.size() == 2);
  CHECK(idx.per_k[0].verdict == DominationVerdict::NotDominated);
  CHECK(idx.per_k[1].verdict == DominationVerdict::Dominated);
  CHECK(idx.per_k[1].slope == doctest::Approx(std::log(1.0 / 3.0)).epsilon(0.01));
}

TEST_CASE("budget truncation is reported") {
  MatrixSet set(2, {diag2(2.0, 0.125), rot(0.3)});
  BracketConfig cfg;
  cfg.budget = 3;
  const RatioProfile prof = ratio_profile(set, 1, 8, cfg);
  CHECK(!prof.complete);
}

TEST_CASE("argument validation") {
  MatrixSet set(2, {diag2(2.0, 0.125)});
  CHECK_THROWS_AS(ratio_profile(set, 0, 5), std::invalid_argument);
  CHECK_THROWS_AS(ratio_profile(set, 2, 5), std::invalid_argument);
  CHECK_THROWS_AS(ratio_profile(set, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(test_domination(set, 1, 5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(multicone_margin(set, ArcUnion{}), std::invalid_argument);
  CHECK_THROWS_AS(multicone_margin(set, ArcUnion::full()), std::invalid_argument);
  Matrix m3 = Matrix::Identity(3, 3) * 2.0;
  MatrixSet set3(3, {m3});
  CHECK_THROWS_AS(find_multicone_2d(set3), std::invalid_argument);
  CHECK_THROWS_AS(multicone_margin(set3, ArcUnion{{Arc{0.0, 0.1}}}), std::invalid_argument);
}
