#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rbx/oracles.hpp"
#include "rbx/random.hpp"

#include <cmath>

using namespace rbx;

namespace {

SymTensor2d random_strain(Rng& rng, double a = 0.1) {
  return {rng.uniform(-a, a), rng.uniform(-a, a), rng.uniform(-a, a)};
}

ElasticConstants random_constants(Rng& rng) {
  return {rng.uniform(0.5, 10.0), rng.uniform(0.5, 10.0), rng.uniform(0.0, 2.0)};
}

// Plane-strain tensor with prescribed trace T and deviatoric norm D, at a
// shape parameter c in [-1, 1] mixing normal-deviatoric and shear parts.
// For in-plane strain, dev_norm^2 = (a-b)^2/2 + 2 e12^2 + (a+b)^2/6 with
// T = a + b, so (a-b)^2/2 + 2 e12^2 = D^2 - T^2/6 must be non-negative.
SymTensor2d strain_with(double T, double D, double c) {
  const double q = D * D - T * T / 6.0;
  REQUIRE(q >= 0.0);
  const double diff = c * std::sqrt(2.0 * q);
  const double shear = std::sqrt(std::max(0.0, (q - diff * diff / 2.0) / 2.0));
  return {(T + diff) / 2.0, (T - diff) / 2.0, shear};
}

}  // namespace

TEST_CASE("yield_truth") {
  CHECK(yield_truth({0.5, 0.5}) == 0);
  CHECK(yield_truth({1.5, 0.0}) == 1);
  CHECK(yield_truth({1.0, 0.0}) == 0);

  SUBCASE("flips exactly where phi changes sign along rays") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      const double a = rng.uniform(0.0, 2.0 * M_PI);
      int prev = yield_truth({0.0, 0.0});
      double prev_phi = von_mises_phi(PrincipalStress2d{0.0, 0.0}, kYieldStress);
      for (int k = 1; k <= 300; ++k) {
        const double r = 0.01 * k;
        const PrincipalStress2d s{r * std::cos(a), r * std::sin(a)};
        const double phi = von_mises_phi(s, kYieldStress);
        const int label = yield_truth(s);
        CHECK(label == (phi > 0.0 ? 1 : 0));
        if (label != prev) CHECK(((prev_phi <= 0.0) != (phi <= 0.0)));
        prev = label;
        prev_phi = phi;
      }
    }
  }
}

TEST_CASE("microsphere_truth") {
  CHECK(microsphere_truth(SymTensor3d::identity()) == 1.0);
  CHECK(microsphere_truth(SymTensor3d::diagonal(4, 1, 1)) == 2.0);
}

TEST_CASE("damage split examples") {
  const ElasticConstants k;
  SUBCASE("zero strain") {
    const auto s = damage_split_closed(SymTensor2d{}, k);
    CHECK(s.psi_r == 0.0);
    CHECK(s.psi_d == 0.0);
    CHECK(s.psi_0 == 0.0);
  }
  SUBCASE("spherical expansion is admissible") {
    const SymTensor2d eps(0.01, 0.01, 0.0);
    const auto s = damage_split_closed(eps, k);
    CHECK(s.psi_r == 0.0);
    CHECK((s.eta_bar.matrix() - embed(eps).matrix()).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("pure compression keeps all energy residual") {
    const auto s = damage_split_closed(SymTensor2d(-0.01, -0.01, 0.0), k);
    CHECK(s.psi_r > 0.0);
    CHECK(s.psi_r <= s.psi_0 + 1e-15);
  }
  SUBCASE("invalid constants") {
    CHECK_THROWS_AS(damage_split_closed(SymTensor2d{}, ElasticConstants{0.0, 1.0, 1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(damage_split_closed(SymTensor2d{}, ElasticConstants{1.0, 1.0, -1.0}),
                    std::invalid_argument);
  }
}

TEST_CASE("energy split invariants over random strains and constants") {
  Rng rng(10000);
  for (int i = 0; i < 10000; ++i) {
    const ElasticConstants k = random_constants(rng);
    const SymTensor2d eps = random_strain(rng);
    const auto s = damage_split_closed(eps, k);
    REQUIRE(std::abs(s.psi_r + s.psi_d - s.psi_0) <= 1e-12 * std::max(1.0, s.psi_0));
    REQUIRE(s.psi_r >= 0.0);
    REQUIRE(s.psi_r <= s.psi_0 * (1.0 + 1e-12));
    REQUIRE(trace(s.eta_bar) >= k.gamma * dev_norm(s.eta_bar) - 1e-10);
    REQUIRE(std::abs(damage_objective(eps, s.eta_bar, k) - s.psi_r) <= 1e-12 * std::max(1e-6, s.psi_0));
  }
}

TEST_CASE("closed form agrees with the brute-force oracle") {
  const ElasticConstants k;
  Rng rng(606);
  for (int i = 0; i < 100; ++i) {
    const SymTensor2d eps = random_strain(rng);
    const auto closed = damage_split_closed(eps, k);
    const auto coarse = damage_split_bruteforce(eps, k, 40);
    const auto fine = damage_split_bruteforce(eps, k, 80);
    CHECK(coarse.all_admissible);
    CHECK(fine.all_admissible);
    // Superset grid: refining never raises the minimum.
    CHECK(fine.split.psi_r <= coarse.split.psi_r);
    // Brute force searches the admissible set, so it cannot beat the optimum.
    CHECK(fine.split.psi_r >= closed.psi_r - 1e-15);
    CHECK(fine.split.psi_r - closed.psi_r <= 2.0 * bruteforce_error_bound(fine, k));
    CHECK(coarse.split.psi_r - closed.psi_r <= 2.0 * bruteforce_error_bound(coarse, k));
  }
}

TEST_CASE("rotation invariance of the split") {
  Rng rng(7);
  const ElasticConstants k;
  for (int i = 0; i < 500; ++i) {
    const SymTensor2d eps = random_strain(rng);
    const SymTensor2d rot = rotate(eps, Rotation2d{rng.uniform(0.0, 2.0 * M_PI)});
    const auto a = damage_split_closed(eps, k), b = damage_split_closed(rot, k);
    CHECK(std::abs(a.psi_r - b.psi_r) <= 1e-14);
    CHECK(std::abs(a.psi_d - b.psi_d) <= 1e-14);
  }
}

TEST_CASE("psi_R is continuous across the cone boundary") {
  const ElasticConstants k;
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    // A point on T = gamma D, displaced along the trace axis.
    const double D = rng.uniform(0.01, 0.1);
    const double c = rng.uniform(-1.0, 1.0);
    auto jump = [&](double delta) {
      const double T0 = k.gamma * D;
      const auto inside = damage_split_closed(strain_with(T0 + delta, D, c), k);
      const auto outside = damage_split_closed(strain_with(T0 - delta, D, c), k);
      return std::abs(outside.psi_r - inside.psi_r);
    };
    const double j1 = jump(1e-4), j2 = jump(5e-5);
    CHECK(j2 < j1);
    CHECK(j2 <= 0.5 * j1 + 1e-18);
    CHECK(jump(1e-8) <= 1e-14);
  }
}

TEST_CASE("sufficiency witnesses") {
  const ElasticConstants k;
  Rng rng(9);
  SUBCASE("rotated strains share the split") {
    for (int i = 0; i < 200; ++i) {
      const SymTensor2d eps = random_strain(rng);
      CHECK(damage_sufficiency_witness(eps, rotate(eps, Rotation2d{rng.uniform(0, 2 * M_PI)}), k));
    }
  }
  SUBCASE("equal (T, D) at different shapes") {
    for (int i = 0; i < 200; ++i) {
      const double T = rng.uniform(-0.1, 0.1);
      const double D = std::abs(T) / std::sqrt(6.0) + rng.uniform(0.0, 0.1);
      const SymTensor2d a = strain_with(T, D, rng.uniform(-1, 1));
      const SymTensor2d b = strain_with(T, D, rng.uniform(-1, 1));
      CHECK(std::abs(trace(a) - trace(b)) <= 1e-14);
      CHECK(std::abs(dev_norm(a) - dev_norm(b)) <= 1e-14);
      CHECK(damage_sufficiency_witness(a, b, k));
    }
  }
  SUBCASE("deviatoric norm alone is insufficient") {
    const SymTensor2d a = strain_with(0.05, 0.05, 0.3);
    const SymTensor2d b = strain_with(-0.05, 0.05, 0.3);
    CHECK(std::abs(dev_norm(a) - dev_norm(b)) <= 1e-14);
    CHECK_FALSE(damage_sufficiency_witness_dev_only(a, b, k));
    CHECK(damage_sufficiency_witness(a, b, k));
  }
}

TEST_CASE("steelbar surrogate") {
  const SteelbarCurve curve;
  CHECK(curve(0.0) == 4.0e-3);
  CHECK(steelbar_surrogate({4.0, 2.0}) == doctest::Approx(210000.0 * 16.0 * curve(0.5)).epsilon(1e-15));
  CHECK(steelbar_surrogate({4.0, 1.0}) * 4.0 == doctest::Approx(steelbar_surrogate({8.0, 2.0})).epsilon(1e-15));
  // d -> 0 limit of the dimensionless force.
  CHECK(steelbar_surrogate({4.0, 1e-9}) / (kSteelYoungsModulus * 16.0) ==
        doctest::Approx(4.0e-3).epsilon(1e-8));

  SUBCASE("collapse onto the master curve") {
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
      const double x = rng.uniform(0.05, 0.95);
      const double w1 = rng.uniform(1.0, 8.0), w2 = rng.uniform(1.0, 8.0);
      const double f1 = steelbar_surrogate({w1, x * w1}) / (kSteelYoungsModulus * w1 * w1);
      const double f2 = steelbar_surrogate({w2, x * w2}) / (kSteelYoungsModulus * w2 * w2);
      CHECK(std::abs(f1 - f2) <= 1e-14);
    }
  }
  SUBCASE("invalid geometry") {
    CHECK_THROWS_AS(steelbar_surrogate({4.0, 4.0}), std::invalid_argument);
    CHECK_THROWS_AS(steelbar_surrogate({9.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(steelbar_surrogate({4.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(steelbar_surrogate({4.0, 1.0}, 0.0), std::invalid_argument);
  }
}
