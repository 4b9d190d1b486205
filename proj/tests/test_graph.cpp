#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "nilwalk/graph.hpp"
#include "nilwalk/harmonic.hpp"

using namespace nilwalk;

TEST(Presets, Shapes) {
  auto t = triangular_preset(0.25, 0.15, 0.2, 0.1, 0.2, 0.1);
  EXPECT_EQ(t.vertex_count(), 1);
  EXPECT_EQ(t.edge_count(), 6);
  auto d = dice_preset(0.1, 0.15, 0.25, 0.2, 0.3, 0.5);
  EXPECT_EQ(d.vertex_count(), 3);
  EXPECT_EQ(d.edge_count(), 12);
  // γ3 = (-1, 1, 0) in matrix coordinates is (-1, 1, 1/2) in first-kind ones.
  EXPECT_DOUBLE_EQ(t.edge(4).voltage[2], 0.5);
}

TEST(Validation, DistinctErrors) {
  EXPECT_THROW(triangular_preset(0.25, 0.15, 0.2, 0.1, 0.1, 0.1), StochasticityError);
  EXPECT_THROW(dice_preset(0.1, 0.15, 0.25, 0.2, 0.3, 0.6), StochasticityError);

  auto h = heisenberg_algebra();
  GroupElement g(h, {1, 0, 0});
  // inverse voltage wrong
  std::vector<Edge> bad = {{"a", 0, 0, 1, g, 0.5}, {"b", 0, 0, 0, g, 0.5}};
  EXPECT_THROW(VoltageGraph(h, {"x"}, bad), InversePairingError);
  // pairing not an involution
  std::vector<Edge> bad2 = {{"a", 0, 0, 1, g, 0.4}, {"b", 0, 0, 2, inverse(g), 0.3}, {"c", 0, 0, 1, g, 0.3}};
  EXPECT_THROW(VoltageGraph(h, {"x"}, bad2), InversePairingError);
  // x -> y only with positive probability one way: y cannot return
  std::vector<Edge> red = {{"a", 0, 1, 1, g, 1.0}, {"b", 1, 0, 0, inverse(g), 0.0}, {"c", 1, 1, 3, g, 0.5},
                           {"d", 1, 1, 2, inverse(g), 0.5}};
  EXPECT_THROW(VoltageGraph(h, {"x", "y"}, red), ReducibilityError);
  try {
    triangular_preset(0.25, 0.15, 0.2, 0.1, 0.1, 0.1);
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.pointer(), "/graph/vertices/0");
  }
}

TEST(InvariantMeasure, Examples) {
  auto d = dice_preset(0.1, 0.15, 0.25, 0.2, 0.3, 0.5);
  auto m = invariant_measure(d);
  EXPECT_EQ(m.m[0], 0.5);
  EXPECT_EQ(m.m[1], 0.25);
  EXPECT_EQ(m.m[2], 0.25);
  auto t = triangular_preset(0.25, 0.15, 0.2, 0.1, 0.2, 0.1);
  EXPECT_EQ(invariant_measure(t).m[0], 1.0);

  auto h = heisenberg_algebra();
  GroupElement g(h, {1, 0, 0}), one = GroupElement::identity(h);
  std::vector<Edge> two = {{"a", 0, 1, 1, g, 0.5}, {"b", 1, 0, 0, inverse(g), 0.5},
                           {"c", 0, 0, 3, one, 0.5}, {"d", 0, 0, 2, one, 0.0},
                           {"e", 1, 1, 5, one, 0.25}, {"f", 1, 1, 4, one, 0.25}};
  auto m2 = invariant_measure(VoltageGraph(h, {"x", "y"}, two));
  EXPECT_NEAR(m2.m[0], 0.5, 1e-14);
  EXPECT_NEAR(m2.m[1], 0.5, 1e-14);
}

TEST(InvariantMeasure, RandomGraphsInvariants) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto g = fixtures::random_graph(rng, 2 + rep % 4);
    auto m = invariant_measure(g);
    double mass = 0.0, edge_mass = 0.0;
    for (double x : m.m) mass += x;
    for (double x : m.edge_measure) edge_mass += x;
    double head = 0.0;
    for (std::size_t v = 0; v + 1 < m.m.size(); ++v) head += m.m[v];
    EXPECT_EQ(head + m.m.back(), 1.0);
    EXPECT_NEAR(mass, 1.0, 1e-15);
    EXPECT_NEAR(edge_mass, 1.0, 1e-12);
    // m(x) = Σ_{e∈E_x} p(ē) m(t(e))
    for (int x = 0; x < g.vertex_count(); ++x) {
      double s = 0.0;
      for (int e : g.out_edges(x)) s += g.edge(g.edge(e).inverse).p * m.m[g.edge(e).terminus];
      EXPECT_NEAR(s, m.m[x], 1e-12);
    }
  }
}

TEST(HomologicalDirection, Examples) {
  auto t = triangular_preset(0.25, 0.15, 0.2, 0.1, 0.2, 0.1);
  auto mt = invariant_measure(t);
  auto gt = homological_direction(t, mt);
  EXPECT_NEAR(gt.rho.norm(), 0.0, 1e-15);
  EXPECT_FALSE(gt.symmetric());

  for (auto p : std::vector<std::array<double, 6>>{{0.1, 0.15, 0.25, 0.2, 0.3, 0.5}, {0.2, 0.2, 0.1, 0.5, 0.25, 0.25}}) {
    auto d = dice_preset(p[0], p[1], p[2], p[3], p[4], p[5]);
    auto m = invariant_measure(d);
    auto h = homological_direction(d, m);
    double r = ((p[3] - p[5]) - 2 * (p[2] - p[0])) / 4;
    EXPECT_NEAR(h.rho[0], 0.0, 1e-15);
    EXPECT_NEAR(h.rho[1], r, 1e-15);
    EXPECT_LT(h.balance_residual, 1e-12);
  }
}

TEST(HomologicalDirection, SymmetricIffZeroChain) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    auto rev = fixtures::random_graph(rng, 3, true);
    auto m = invariant_measure(rev);
    auto h = homological_direction(rev, m);
    EXPECT_TRUE(h.symmetric(1e-14));
    for (int e = 0; e < rev.edge_count(); ++e)
      EXPECT_NEAR(m.edge_measure[e], m.edge_measure[rev.edge(e).inverse], 1e-14);

    auto irr = fixtures::random_graph(rng, 3, false);
    auto mi = invariant_measure(irr);
    auto hi = homological_direction(irr, mi);
    bool m_symmetric = true;
    for (int e = 0; e < irr.edge_count(); ++e)
      if (std::abs(mi.edge_measure[e] - mi.edge_measure[irr.edge(e).inverse]) > 1e-14) m_symmetric = false;
    EXPECT_EQ(hi.symmetric(1e-14), m_symmetric);
    EXPECT_LT(hi.balance_residual, 1e-12);
  }
}

TEST(HomologicalDirection, IndependentOfRealization) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int rep = 0; rep < 10; ++rep) {
    auto g = fixtures::random_graph(rng, 4);
    auto m = invariant_measure(g);
    auto h = homological_direction(g, m);
    std::vector<GroupElement> offs;
    for (int v = 0; v < g.vertex_count(); ++v) offs.emplace_back(g.algebra(), std::vector<double>{u(rng), u(rng), u(rng)});
    auto phi = make_realization(g, offs);
    EXPECT_LT((first_layer_image(g, m, phi) - h.rho).cwiseAbs().maxCoeff(), 1e-12);
  }
}
