#include <gtest/gtest.h>

#include <random>

#include "nilwalk/lie.hpp"
#include "oracles.hpp"

using namespace nilwalk;

namespace {

// Upper-triangular 4x4 algebra in a skewed basis, so the bracket of two
// layer-1 elements has a layer-3 tail and the two products differ.
struct SkewedAlgebra {
  std::vector<Eigen::MatrixXd> basis;
  AlgebraPtr algebra;

  SkewedAlgebra() {
    using oracle::unit;
    basis = {unit(4, 0, 1) + 0.7 * unit(4, 0, 2) - 0.4 * unit(4, 1, 3),
             unit(4, 1, 2) + 1.3 * unit(4, 1, 3) + 0.2 * unit(4, 0, 3),
             unit(4, 2, 3) - 0.5 * unit(4, 0, 2),
             unit(4, 0, 2) + 0.9 * unit(4, 0, 3),
             unit(4, 1, 3) - 0.6 * unit(4, 0, 3),
             unit(4, 0, 3)};
    algebra = algebra_from_matrices({3, 2, 1}, basis);
  }

  std::vector<double> matrix_product(const std::vector<double>& a, const std::vector<double>& b) const {
    Eigen::MatrixXd g = oracle::nilpotent_exp(oracle::combine(basis, a)) *
                        oracle::nilpotent_exp(oracle::combine(basis, b));
    return oracle::coords_in(basis, oracle::unipotent_log(g));
  }
};

GroupElement random_element(std::mt19937_64& rng, const AlgebraPtr& alg, double scale = 1.0) {
  return GroupElement(alg, oracle::uniform_vector(rng, alg->dim(), scale));
}

void expect_near(std::span<const double> a, std::span<const double> b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(Dynkin, DegreeTwoCoefficients) {
  // word bits: letter i at bit i, X = 0, Y = 1
  const auto& t = detail::dynkin_table();
  EXPECT_DOUBLE_EQ(t.coef[1][0], 1.0);
  EXPECT_DOUBLE_EQ(t.coef[1][1], 1.0);
  EXPECT_DOUBLE_EQ(t.coef[2][0b10], 0.25);   // XY
  EXPECT_DOUBLE_EQ(t.coef[2][0b01], -0.25);  // YX
}

TEST(Cbh, IdentityIsNeutral) {
  auto h = heisenberg_algebra();
  std::mt19937_64 rng(1);
  auto b = random_element(rng, h);
  auto e = GroupElement::identity(h);
  expect_near(cbh_product(e, b, false).coords(), b.coords(), 0.0);
  expect_near(cbh_product(b, e, true).coords(), b.coords(), 0.0);
}

TEST(Cbh, HeisenbergClosedForm) {
  auto h = heisenberg_algebra();
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_element(rng, h, 3.0);
    auto b = random_element(rng, h, 3.0);
    auto p = cbh_product(a, b, false);
    EXPECT_NEAR(p[0], a[0] + b[0], 1e-14);
    EXPECT_NEAR(p[1], a[1] + b[1], 1e-14);
    EXPECT_NEAR(p[2], a[2] + b[2] + 0.5 * (a[0] * b[1] - b[0] * a[1]), 1e-13);
  }
}

TEST(Cbh, HeisenbergMatchesMatrixProduct) {
  auto h = heisenberg_algebra();
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_element(rng, h, 2.0);
    auto b = random_element(rng, h, 2.0);
    // Second-kind coordinates are the matrix entries (x, y, z).
    auto ma = to_second_kind(a);
    auto mb = to_second_kind(b);
    std::vector<double> mp = {ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2] + ma[0] * mb[1]};
    auto p = cbh_product(a, b, false);
    expect_near(to_second_kind(p), mp, 1e-12);
    // Independent route: 3x3 matrix exp/log.
    Eigen::MatrixXd za = upper_triangular_matrix(3, a.coords());
    Eigen::MatrixXd zb = upper_triangular_matrix(3, b.coords());
    Eigen::MatrixXd lg = oracle::unipotent_log(oracle::nilpotent_exp(za) * oracle::nilpotent_exp(zb));
    EXPECT_NEAR(p[0], lg(0, 1), 1e-12);
    EXPECT_NEAR(p[1], lg(1, 2), 1e-12);
    EXPECT_NEAR(p[2], lg(0, 2), 1e-12);
  }
}

TEST(Cbh, UpperTriangularUpToStepFive) {
  std::mt19937_64 rng(4);
  for (int n = 2; n <= 6; ++n) {
    auto alg = upper_triangular_algebra(n);
    EXPECT_EQ(alg->step(), n - 1);
    for (int rep = 0; rep < 50; ++rep) {
      auto a = random_element(rng, alg);
      auto b = random_element(rng, alg);
      Eigen::MatrixXd lg = oracle::unipotent_log(oracle::nilpotent_exp(upper_triangular_matrix(n, a.coords())) *
                                                 oracle::nilpotent_exp(upper_triangular_matrix(n, b.coords())));
      auto p = cbh_product(a, b, false);
      Eigen::MatrixXd got = upper_triangular_matrix(n, p.coords());
      EXPECT_LT((got - lg).cwiseAbs().maxCoeff(), 1e-11) << "n=" << n;
    }
  }
}

TEST(Cbh, SkewedBasisMatchesMatrices) {
  SkewedAlgebra s;
  std::mt19937_64 rng(5);
  bool differs = false;
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_element(rng, s.algebra);
    auto b = random_element(rng, s.algebra);
    auto p = cbh_product(a, b, false);
    auto expected = s.matrix_product(log_element(a), log_element(b));
    expect_near(p.coords(), expected, 1e-11);
    auto q = cbh_product(a, b, true);
    if (std::abs(q[5] - p[5]) > 1e-6) differs = true;
  }
  EXPECT_TRUE(differs) << "test algebra should separate the two products";
}

TEST(Cbh, FirstTwoLayersOfBothProductsAgreeExactly) {
  SkewedAlgebra s;
  std::mt19937_64 rng(6);
  const auto& alg = *s.algebra;
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_element(rng, s.algebra);
    auto b = random_element(rng, s.algebra);
    auto p = cbh_product(a, b, false);
    auto q = cbh_product(a, b, true);
    for (int i = 0; i < alg.layer_end(2); ++i) EXPECT_EQ(p[i], q[i]);
  }
}

TEST(Cbh, Associativity) {
  std::mt19937_64 rng(7);
  SkewedAlgebra s;
  std::vector<AlgebraPtr> algebras = {heisenberg_algebra(), free_nilpotent_algebra(2, 3),
                                      free_nilpotent_algebra(3, 3), upper_triangular_algebra(6), s.algebra};
  for (const auto& alg : algebras)
    for (bool graded : {false, true})
      for (int rep = 0; rep < 1000; ++rep) {
        auto a = random_element(rng, alg);
        auto b = random_element(rng, alg);
        auto c = random_element(rng, alg);
        auto left = cbh_product(cbh_product(a, b, graded), c, graded);
        auto right = cbh_product(a, cbh_product(b, c, graded), graded);
        for (int i = 0; i < alg->dim(); ++i) ASSERT_NEAR(left[i], right[i], 1e-9);
      }
}

TEST(Cbh, MismatchedAlgebrasRejected) {
  auto a = GroupElement::identity(heisenberg_algebra());
  auto b = GroupElement::identity(free_nilpotent_algebra(2, 3));
  EXPECT_THROW(cbh_product(a, b, false), StructuralError);
}

TEST(Inverse, BothProductsGiveIdentity) {
  std::mt19937_64 rng(8);
  SkewedAlgebra s;
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_element(rng, s.algebra);
    for (bool graded : {false, true}) {
      auto p = cbh_product(a, inverse(a), graded);
      for (double x : p.coords()) EXPECT_NEAR(x, 0.0, 1e-12);
    }
  }
  auto e = GroupElement::identity(s.algebra);
  auto inv = inverse(e);
  for (double x : inv.coords()) EXPECT_EQ(x, 0.0);
}

TEST(Inverse, MatchesMatrixInverse) {
  std::mt19937_64 rng(9);
  auto h = heisenberg_algebra();
  for (int rep = 0; rep < 20; ++rep) {
    auto a = random_element(rng, h, 2.0);
    Eigen::MatrixXd m = oracle::nilpotent_exp(upper_triangular_matrix(3, a.coords())).inverse();
    Eigen::MatrixXd lg = oracle::unipotent_log(m);
    auto inv = inverse(a);
    EXPECT_NEAR(inv[0], lg(0, 1), 1e-12);
    EXPECT_NEAR(inv[1], lg(1, 2), 1e-12);
    EXPECT_NEAR(inv[2], lg(0, 2), 1e-12);
  }
}

TEST(Dilation, TrivialFactors) {
  std::mt19937_64 rng(10);
  auto alg = free_nilpotent_algebra(2, 3);
  auto a = random_element(rng, alg);
  expect_near(dilate(a, 1.0).coords(), a.coords(), 0.0);
  auto zero = dilate(a, 0.0);
  for (double x : zero.coords()) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(dilate(a, -0.5), DomainError);
}

TEST(Dilation, AutomorphismOfGradedProduct) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  SkewedAlgebra s;
  for (const auto& alg : {s.algebra, upper_triangular_algebra(5)})
    for (int rep = 0; rep < 200; ++rep) {
      auto a = random_element(rng, alg);
      auto b = random_element(rng, alg);
      double eps = u(rng);
      auto left = dilate(cbh_product(a, b, true), eps);
      auto right = cbh_product(dilate(a, eps), dilate(b, eps), true);
      expect_near(left.coords(), right.coords(), 1e-12 * std::max(1.0, std::pow(eps, alg->step())));
    }
}

TEST(HomNorm, ClosedFormAndAxioms) {
  auto h = heisenberg_algebra();
  GroupElement g(h, {3, 4, 5});
  EXPECT_NEAR(hom_norm(g).value, 5.0 + std::sqrt(5.0), 1e-15);
  EXPECT_EQ(hom_norm(GroupElement::identity(h)).value, 0.0);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  auto alg = free_nilpotent_algebra(3, 3);
  for (int rep = 0; rep < 200; ++rep) {
    auto a = random_element(rng, alg);
    double eps = u(rng);
    EXPECT_NEAR(hom_norm(dilate(a, eps)).value, eps * hom_norm(a).value, 1e-12 * (1 + eps));
    EXPECT_GT(hom_norm(a).value, 0.0);
  }
}

TEST(HomNorm, LayerMetric) {
  auto h = heisenberg_algebra();
  GroupElement g(h, {1, 1, 0});
  std::vector<Eigen::MatrixXd> metrics = {Eigen::Matrix2d{{2.0, 0.0}, {0.0, 7.0}}};
  EXPECT_NEAR(hom_norm(g, metrics).value, 3.0, 1e-15);
}

TEST(QuasiDistance, InvarianceAndScaling) {
  std::mt19937_64 rng(13);
  auto alg = free_nilpotent_algebra(2, 3);
  for (int rep = 0; rep < 200; ++rep) {
    auto a = random_element(rng, alg);
    auto b = random_element(rng, alg);
    auto g = random_element(rng, alg);
    EXPECT_EQ(quasi_distance(a, a), 0.0);
    EXPECT_NEAR(quasi_distance(cbh_product(g, a, true), cbh_product(g, b, true)), quasi_distance(a, b), 1e-12);
    EXPECT_NEAR(quasi_distance(dilate(a, 0.3), dilate(b, 0.3)), 0.3 * quasi_distance(a, b), 1e-12);
  }
}

TEST(SecondKind, RoundTrip) {
  std::mt19937_64 rng(14);
  SkewedAlgebra s;
  for (const auto& alg : {heisenberg_algebra(), free_nilpotent_algebra(2, 3), s.algebra})
    for (int rep = 0; rep < 50; ++rep) {
      auto c = oracle::uniform_vector(rng, alg->dim());
      expect_near(to_second_kind(from_second_kind(alg, c)), c, 1e-12);
    }
  // Heisenberg matrix entries: first kind z = matrix z - xy/2.
  auto g = from_second_kind(heisenberg_algebra(), std::vector<double>{2.0, 3.0, 1.0});
  EXPECT_NEAR(g[2], 1.0 - 3.0, 1e-15);
}

TEST(Validation, RejectsBadStructureConstants) {
  EXPECT_NO_THROW(make_algebra({2, 1, 1}, {{0, 1, {{2, 1.0}}}, {0, 2, {{3, 1.0}}}, {1, 2, {{3, 1.0}}}}));
  // beyond the step
  EXPECT_THROW(make_algebra({2, 1}, {{0, 1, {{2, 1.0}}}, {0, 2, {{2, 1.0}}}}), AlgebraError);
  // inconsistent antisymmetric pair
  EXPECT_THROW(make_algebra({2, 1}, {{0, 1, {{2, 1.0}}}, {1, 0, {{2, 1.0}}}}), AlgebraError);
  // bracket landing in a lower layer
  EXPECT_THROW(make_algebra({2, 1}, {{0, 1, {{0, 1.0}}}}), AlgebraError);
  EXPECT_NO_THROW(make_algebra({2, 1}, {{0, 1, {{2, 1.0}}}, {1, 0, {{2, -1.0}}}}));
}

TEST(Validation, JacobiViolationDetected) {
  // [e0,[e1,e2]] + [e1,[e2,e0]] + [e2,[e0,e1]] = X6 - X6 + X6 here.
  std::vector<BracketRule> rules = {
      {0, 1, {{3, 1.0}}}, {0, 2, {{4, 1.0}}}, {1, 2, {{5, 1.0}}},
      {0, 5, {{6, 1.0}}}, {1, 4, {{6, 1.0}}}, {2, 3, {{6, 1.0}}},
  };
  EXPECT_THROW(make_algebra({3, 3, 1}, rules), AlgebraError);
  rules = {{0, 1, {{3, 1.0}}}, {0, 2, {{4, 1.0}}}, {1, 2, {{5, 1.0}}},
           {0, 5, {{6, 1.0}}}, {1, 4, {{6, 1.0}}}};
  EXPECT_NO_THROW(make_algebra({3, 3, 1}, rules));
}
