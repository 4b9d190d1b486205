#include <gtest/gtest.h>

#include <array>
#include <random>

#include "fixtures.hpp"
#include "nilwalk/harmonic.hpp"

using namespace nilwalk;

namespace {

using DiceParams = std::array<double, 6>;  // ξ, η, ζ, α, β, γ

const std::vector<DiceParams> kDiceSets = {
    {0.1, 0.15, 0.25, 0.2, 0.3, 0.5},
    {0.2, 0.2, 0.1, 0.5, 0.25, 0.25},
    {0.05, 0.3, 0.15, 0.1, 0.6, 0.3},
};

VoltageGraph dice(const DiceParams& p) { return dice_preset(p[0], p[1], p[2], p[3], p[4], p[5]); }

}  // namespace

TEST(Realization, TriangularIsTrivial) {
  auto g = triangular_preset(0.25, 0.15, 0.2, 0.1, 0.2, 0.1);
  auto w = analyse_walk(g);
  for (double x : w.phi0.vertex_offsets[0].coords()) EXPECT_EQ(x, 0.0);
  for (int e = 0; e < g.edge_count(); ++e)
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(w.phi0.edge_increments[e][i], g.edge(e).voltage[i], 1e-15);
  EXPECT_LE(w.phi0.residual, 1e-15);
}

TEST(Realization, DiceClosedFormOffsets) {
  for (const auto& p : kDiceSets) {
    auto g = dice(p);
    auto w = analyse_walk(g);
    const double xi = p[0], zeta = p[2], alpha = p[3], beta = p[4], gamma = p[5];
    double r = ((alpha - gamma) - 2 * (zeta - xi)) / 4;
    const auto& y = w.phi0.vertex_offsets[1];
    const auto& z = w.phi0.vertex_offsets[2];
    EXPECT_NEAR(y[0], beta, 1e-12);
    EXPECT_NEAR(y[1], (3 * alpha + gamma + 2 * (zeta - xi)) / 4, 1e-12);
    EXPECT_NEAR(z[0], -beta, 1e-12);
    EXPECT_NEAR(z[1], -gamma - r, 1e-12);
    EXPECT_LE(w.phi0.residual, 1e-10);
  }
}

TEST(Realization, SymmetricBouquetHasZeroOffsets) {
  auto g = triangular_preset(0.2, 0.2, 0.15, 0.15, 0.15, 0.15);
  auto w = analyse_walk(g);
  EXPECT_EQ(w.phi0.residual, 0.0);
  EXPECT_TRUE(w.gamma.symmetric());
}

TEST(Realization, RandomGraphsResidualAndMartingale) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    auto g = fixtures::random_graph(rng, 2 + rep % 4);
    auto w = analyse_walk(g);
    EXPECT_LE(w.phi0.residual, 1e-10);
    EXPECT_LE(martingale_two_step_defect(g, w.phi0, w.gamma.rho), 1e-12);
    EXPECT_LE(frame_normalization_defect(g, w.measure, w.gamma, w.phi0, w.alb), 1e-10);
    EXPECT_LE((w.alb.metric * w.alb.gram - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::MatrixXd ortho = w.alb.frame.transpose() * w.alb.metric * w.alb.frame;
    EXPECT_LE((ortho - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
    // dΦ(ē) = dΦ(e)^{-1}
    for (int e = 0; e < g.edge_count(); ++e) {
      auto prod = cbh_product(w.phi0.edge_increments[e], w.phi0.edge_increments[g.edge(e).inverse], false);
      for (double x : prod.coords()) EXPECT_NEAR(x, 0.0, 1e-12);
    }
  }
  auto d = dice(kDiceSets[0]);
  auto wd = analyse_walk(d);
  EXPECT_LE(martingale_two_step_defect(d, wd.phi0, wd.gamma.rho), 1e-12);
}

TEST(Albanese, TriangularClosedForms) {
  const double xi = 0.25, xi_p = 0.15, eta = 0.2, eta_p = 0.1, zeta = 0.2, zeta_p = 0.1;
  auto g = triangular_preset(xi, xi_p, eta, eta_p, zeta, zeta_p);
  auto w = analyse_walk(g);
  const double xh = xi + xi_p, eh = eta + eta_p, zh = zeta + zeta_p;
  const double s = xh * eh + eh * zh + zh * xh;
  EXPECT_NEAR(w.alb.gram(0, 0), xh + zh, 1e-12);
  EXPECT_NEAR(w.alb.gram(0, 1), -zh, 1e-12);
  EXPECT_NEAR(w.alb.gram(1, 1), eh + zh, 1e-12);
  EXPECT_NEAR(1.0 / w.alb.volume, std::sqrt(s), 1e-12);
  const double vol2 = 1.0 / s;
  EXPECT_NEAR(w.alb.metric(0, 0), (eh + zh) * vol2, 1e-12);
  EXPECT_NEAR(w.alb.metric(0, 1), zh * vol2, 1e-12);
  EXPECT_NEAR(w.alb.metric(1, 1), (xh + zh) * vol2, 1e-12);
  // V1 = (ξ̂+ζ̂)^{1/2} X1 - ζ̂ (ξ̂+ζ̂)^{-1/2} X2,  V2 = (ξ̂+ζ̂)^{-1/2} vol^{-1} X2
  EXPECT_NEAR(w.alb.frame(0, 0), std::sqrt(xh + zh), 1e-12);
  EXPECT_NEAR(w.alb.frame(1, 0), -zh / std::sqrt(xh + zh), 1e-12);
  EXPECT_NEAR(w.alb.frame(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(w.alb.frame(1, 1), std::sqrt(s) / std::sqrt(xh + zh), 1e-12);
}

TEST(Albanese, DiceClosedForms) {
  for (const auto& p : kDiceSets) {
    auto g = dice(p);
    auto w = analyse_walk(g);
    const double xi = p[0], eta = p[1], zeta = p[2], alpha = p[3], beta = p[4], gamma = p[5];
    const double b = beta + 2 * eta - 4 * beta * eta;
    const double g22 = ((beta + 2 * eta) * (2 - beta - 2 * eta) + 4 * alpha * gamma + 16 * xi * zeta) / 8;
    EXPECT_NEAR(w.alb.gram(0, 0), b / 2, 1e-12);
    EXPECT_NEAR(w.alb.gram(0, 1), -b / 4, 1e-12);
    EXPECT_NEAR(w.alb.gram(1, 1), g22, 1e-12);
    double vol_inv = 0.25 * std::sqrt(b * ((beta + 2 * eta) - (beta * beta + 4 * eta * eta) + 4 * alpha * gamma +
                                           16 * xi * zeta));
    EXPECT_NEAR(1.0 / w.alb.volume, vol_inv, 1e-12);
    EXPECT_NEAR(w.alb.frame(0, 0), std::sqrt(b / 2), 1e-12);
    EXPECT_NEAR(w.alb.frame(1, 0), -0.5 * std::sqrt(b / 2), 1e-12);
    EXPECT_NEAR(w.alb.frame(1, 1), 1.0 / (std::sqrt(b / 2) * w.alb.volume), 1e-12);
  }
}

TEST(Albanese, DegenerateWalkRejected) {
  auto h = heisenberg_algebra();
  GroupElement g(h, {1, 0, 0});
  std::vector<Edge> e = {{"a", 0, 0, 1, g, 0.5}, {"b", 0, 0, 0, inverse(g), 0.5}};
  VoltageGraph gr(h, {"x"}, e);
  EXPECT_THROW(analyse_walk(gr), DegenerateWalkError);
}

TEST(Drift, TriangularClosedForm) {
  auto g = triangular_preset(0.25, 0.15, 0.2, 0.1, 0.2, 0.1);
  auto w = analyse_walk(g);
  ASSERT_EQ(w.beta.beta.size(), 1);
  EXPECT_NEAR(w.beta.beta[0], 0.05, 1e-12);
  ASSERT_TRUE(w.beta.beta_frame.has_value());
  EXPECT_NEAR((*w.beta.beta_frame)[0], 0.05 * w.alb.volume, 1e-12);
  EXPECT_NEAR((*w.beta.beta_bar)(0, 1), 0.05 * w.alb.volume, 1e-12);
  EXPECT_NEAR((*w.beta.beta_bar)(1, 0), -0.05 * w.alb.volume, 1e-12);
}

TEST(Drift, SymmetricWalkHasZeroDrift) {
  auto g = triangular_preset(0.2, 0.2, 0.15, 0.15, 0.15, 0.15);
  EXPECT_EQ(analyse_walk(g).beta.beta[0], 0.0);
  std::mt19937_64 rng(22);
  for (int rep = 0; rep < 5; ++rep) {
    auto r = fixtures::random_graph(rng, 3, true);
    EXPECT_NEAR(analyse_walk(r).beta.beta[0], 0.0, 1e-13);
  }
}

TEST(Drift, DiceClosedFormAndKappaInvariance) {
  for (const auto& p : kDiceSets) {
    auto g = dice(p);
    auto w = analyse_walk(g);
    const double eta = p[1], beta = p[4];
    EXPECT_NEAR(w.beta.beta[0], (beta - 2 * eta) / 8, 1e-12);
    EXPECT_NEAR((*w.beta.beta_frame)[0], (beta - 2 * eta) / 8 * w.alb.volume, 1e-12);
    for (auto kappa : std::vector<std::pair<double, double>>{{0.3, -1.7}, {5.0, 2.0}}) {
      auto h = g.algebra();
      std::vector<GroupElement> f = {GroupElement::identity(h), GroupElement(h, {0, 0, kappa.first}),
                                     GroupElement(h, {0, 0, kappa.second})};
      auto phi = translate_offsets(g, w.phi0, f);
      auto bk = drift_beta(g, w.measure, w.gamma, phi, w.alb);
      EXPECT_NEAR(bk.beta[0], w.beta.beta[0], 1e-12);
    }
  }
}

TEST(Drift, BetaShiftMatchesRecomputation) {
  for (const auto& p : kDiceSets) {
    auto g = dice(p);
    auto w = analyse_walk(g);
    auto h = g.algebra();
    GroupElement c(h, {0.7, -1.3, 0.0});
    auto phi_hat = translate_offsets(g, w.phi0, std::vector<GroupElement>(3, c));
    auto beta_hat = drift_beta(g, w.measure, w.gamma, phi_hat, w.alb);
    auto shift = beta_shift(w.phi0, phi_hat, w.gamma);
    EXPECT_NEAR(w.beta.beta[0], beta_hat.beta[0] + shift[0], 1e-12);
    EXPECT_EQ(beta_shift(w.phi0, w.phi0, w.gamma)[0], 0.0);
  }
  auto t = triangular_preset(0.25, 0.15, 0.2, 0.1, 0.2, 0.1);
  auto wt = analyse_walk(t);
  auto shifted = translate_offsets(t, wt.phi0, {GroupElement(t.algebra(), {1, 0, 0})});
  EXPECT_NEAR(beta_shift(wt.phi0, shifted, wt.gamma)[0], 0.0, 1e-15);
  EXPECT_NEAR(drift_beta(t, wt.measure, wt.gamma, shifted, wt.alb).beta[0], wt.beta.beta[0], 1e-12);

  auto other = triangular_preset(0.3, 0.1, 0.2, 0.1, 0.2, 0.1);
  auto wo = analyse_walk(other);
  EXPECT_THROW(beta_shift(wt.phi0, wo.phi0, wt.gamma), StructuralError);
}

TEST(Corrector, Cases) {
  auto g = dice(kDiceSets[0]);
  auto w = analyse_walk(g);
  auto h = g.algebra();
  auto zero = corrector(w.phi0, w.phi0);
  EXPECT_EQ(zero.max_norm, 0.0);

  std::vector<GroupElement> shifted;
  for (const auto& o : w.phi0.vertex_offsets) {
    std::vector<double> c(o.coords().begin(), o.coords().end());
    c[0] += 0.4;
    c[1] -= 0.1;
    shifted.emplace_back(h, c);
  }
  auto cst = corrector(make_realization(g, shifted), w.phi0);
  for (const auto& v : cst.values) {
    EXPECT_NEAR(v[0], 0.4, 1e-15);
    EXPECT_NEAR(v[1], -0.1, 1e-15);
  }

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<GroupElement> pert;
  std::vector<Eigen::Vector2d> deltas;
  for (const auto& o : w.phi0.vertex_offsets) {
    Eigen::Vector2d dlt(u(rng), u(rng));
    std::vector<double> c(o.coords().begin(), o.coords().end());
    c[0] += dlt[0];
    c[1] += dlt[1];
    pert.emplace_back(h, c);
    deltas.push_back(dlt);
  }
  auto cp = corrector(make_realization(g, pert), w.phi0);
  for (int v = 0; v < 3; ++v) EXPECT_LT((cp.values[v] - deltas[v]).norm(), 1e-15);

  auto bad = w.phi0.vertex_offsets;
  bad[1] = GroupElement(h, {bad[1][0], bad[1][1], bad[1][2] + 1.0});
  EXPECT_THROW(corrector(make_realization(g, bad), w.phi0), StructuralError);
}
