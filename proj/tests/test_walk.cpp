#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "nilwalk/walk.hpp"

using namespace nilwalk;

namespace {

VoltageGraph triangular() { return triangular_preset(0.25, 0.15, 0.2, 0.1, 0.2, 0.1); }
VoltageGraph dice_noncentered() { return dice_preset(0.1, 0.15, 0.25, 0.2, 0.3, 0.5); }

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * (v.size() - 1))];
}

}  // namespace

TEST(Walk, SingleStepIsOneOfTheIncrements) {
  auto g = triangular();
  auto w = analyse_walk(g);
  WalkConfig cfg;
  cfg.n = 1;
  cfg.paths = 1;
  cfg.seed = 4;
  auto ens = sample_walk(g, w.phi0, cfg);
  ASSERT_EQ(ens.time_count(), 2);
  for (double x : ens.at(0, 0)) EXPECT_EQ(x, 0.0);
  int matches = 0;
  for (const auto& inc : w.phi0.edge_increments) {
    bool same = true;
    for (int i = 0; i < 3; ++i) same = same && ens.at(0, 1)[i] == inc[i];
    matches += same;
  }
  EXPECT_EQ(matches, 1);
}

TEST(Walk, EdgeFrequenciesAtStationaryStart) {
  auto g = dice_noncentered();
  auto w = analyse_walk(g);
  WalkSampler s(g, w.phi0);
  auto rng = stream_rng(5, streams::walk, 0);
  const int draws = 2000000;
  std::vector<int> count(g.edge_count(), 0);
  for (int i = 0; i < draws; ++i) count[s.next_edge(rng, sample_start(g, w.measure.m, rng))]++;
  for (int e = 0; e < g.edge_count(); ++e) {
    double p = w.measure.edge_measure[e];
    double sd = std::sqrt(draws * p * (1 - p));
    EXPECT_LE(std::abs(count[e] - draws * p), 3 * sd + 1e-9) << "edge " << e;
  }
}

TEST(Walk, CenteredFirstLayerHasZeroMean) {
  auto g = dice_noncentered();
  auto w = analyse_walk(g);
  ASSERT_GT(std::abs(w.gamma.rho[1]), 0.1);
  WalkConfig cfg;
  cfg.n = 64;
  cfg.paths = 20000;
  cfg.seed = 6;
  cfg.center = true;
  cfg.keep_times = {1.0};
  auto ens = sample_walk(g, w.phi0, cfg);
  auto m = ens.marginal(0);
  for (int i = 0; i < 2; ++i) {
    double mean = m.col(i).mean();
    double sd = std::sqrt((m.col(i).array() - mean).square().sum() / (m.rows() - 1));
    EXPECT_LE(std::abs(mean), 3 * sd / std::sqrt(double(m.rows())));
  }
  // Without centering the first layer drifts like sqrt(n) ρ.
  cfg.center = false;
  auto raw = sample_walk(g, w.phi0, cfg);
  EXPECT_NEAR(raw.marginal(0).col(1).mean(), std::sqrt(64.0) * w.gamma.rho[1], 0.05);
}

TEST(Walk, ReproducibleAcrossThreadCounts) {
  auto g = dice_noncentered();
  auto w = analyse_walk(g);
  WalkConfig cfg;
  cfg.n = 32;
  cfg.paths = 500;
  cfg.seed = 7;
  cfg.center = true;
  auto a = sample_walk(g, w.phi0, cfg);
  auto b = sample_walk(g, w.phi0, cfg);
  cfg.threads = 3;
  auto c = sample_walk(g, w.phi0, cfg);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.data, c.data);
}

TEST(Walk, VertexSequenceMatchesGroupTrajectory) {
  auto g = dice_noncentered();
  auto w = analyse_walk(g);
  WalkConfig cfg;
  cfg.n = 50;
  cfg.paths = 20;
  cfg.seed = 8;
  cfg.dilate = false;
  cfg.record_vertices = true;
  auto ens = sample_walk(g, w.phi0, cfg);
  const auto& alg = *g.algebra();
  for (std::int64_t p = 0; p < ens.paths; ++p) {
    EXPECT_EQ(ens.vertices[p * ens.time_count()], g.base_vertex());
    for (int k = 0; k + 1 < ens.time_count(); ++k) {
      auto step = cbh_product(inverse(ens.element(p, k)), ens.element(p, k + 1), false);
      int v = ens.vertices[p * ens.time_count() + k];
      int found = -1;
      for (int e : g.out_edges(v)) {
        double diff = 0.0;
        for (int i = 0; i < alg.dim(); ++i) diff = std::max(diff, std::abs(step[i] - w.phi0.edge_increments[e][i]));
        if (diff < 1e-9) found = g.edge(e).terminus;
      }
      EXPECT_EQ(found, ens.vertices[p * ens.time_count() + k + 1]);
    }
  }
}

TEST(Interpolate, GridAndHorizontalSegments) {
  auto h = heisenberg_algebra();
  PathEnsemble ens;
  ens.algebra = h;
  ens.times = {0.0, 0.5, 1.0};
  ens.paths = 1;
  ens.data = {0, 0, 0, 2, -1, 0, 2.5, 1, 0.3};
  auto at_grid = interpolate(ens, 0.5);
  EXPECT_EQ(at_grid[0][0], 2.0);
  EXPECT_EQ(at_grid[0][1], -1.0);
  auto mid = interpolate(ens, 0.25);
  EXPECT_NEAR(mid[0][0], 1.0, 1e-15);
  EXPECT_NEAR(mid[0][1], -0.5, 1e-15);
  EXPECT_NEAR(mid[0][2], 0.0, 1e-15);
  for (double theta : {0.1, 0.3, 0.8}) {
    auto y = interpolate(ens, 0.5 * theta);
    double ratio = quasi_distance(ens.element(0, 0), y[0]) / quasi_distance(ens.element(0, 0), ens.element(0, 1));
    EXPECT_NEAR(ratio, theta, 1e-12);
  }
  EXPECT_THROW(interpolate(ens, 1.5), DomainError);
}

TEST(Holder, ConstantAndSingleStep) {
  auto h = heisenberg_algebra();
  PathEnsemble flat;
  flat.algebra = h;
  flat.times = {0.0, 0.5, 1.0};
  flat.paths = 1;
  flat.data.assign(9, 0.0);
  EXPECT_EQ(holder_stat(flat, 0.25)[0], 0.0);
  PathEnsemble one;
  one.algebra = h;
  one.times = {0.0, 1.0};
  one.paths = 1;
  one.data = {0, 0, 0, 3, 4, 0};
  EXPECT_NEAR(holder_stat(one, 0.4)[0], 5.0, 1e-14);
  EXPECT_THROW(holder_stat(one, 0.5), DomainError);
}

TEST(Holder, PercentileStableInN) {
  auto g = triangular_preset(0.2, 0.2, 0.15, 0.15, 0.15, 0.15);
  auto w = analyse_walk(g);
  for (double alpha : {0.1, 0.25, 0.4}) {
    std::vector<double> q;
    for (int n : {64, 256, 1024}) {
      WalkConfig cfg;
      cfg.n = n;
      cfg.paths = 200;
      cfg.seed = 9;
      auto ens = sample_walk(g, w.phi0, cfg);
      q.push_back(percentile(holder_stat(ens, alpha), 0.99));
    }
    for (double x : q) EXPECT_LE(std::abs(x - q.back()) / q.back(), 0.2) << "alpha " << alpha;
  }
}

TEST(Ergodic, StationaryValues) {
  auto g = triangular();
  auto w = analyse_walk(g);
  auto one = ergodic_average(g, w.phi0, [](int, const GroupElement&) { return 1.0; }, 10000, 1);
  EXPECT_EQ(one.average, 1.0);
  EXPECT_DOUBLE_EQ(one.stationary, 1.0);

  auto layer2 = [&](int, const GroupElement& inc) { return inc[2]; };
  auto b = ergodic_average(g, w.phi0, layer2, 2000000, 2);
  EXPECT_NEAR(b.stationary, w.beta.beta[0], 1e-14);
  EXPECT_LE(std::abs(b.gap), 4 * b.std_error);

  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      auto f = [&](int, const GroupElement& inc) {
        Eigen::Vector2d u(inc[0], inc[1]);
        Eigen::Vector2d v = w.alb.coframe * u;
        return v[i] * v[j];
      };
      auto r = ergodic_average(g, w.phi0, f, 1000000, 3 + i * 2 + j);
      EXPECT_NEAR(r.stationary, i == j ? 1.0 : 0.0, 1e-12);
      EXPECT_LE(std::abs(r.gap), 4 * r.std_error);
    }
}
