#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/errors.hpp"
#include "nilwalk/graph.hpp"
#include "nilwalk/harmonic.hpp"
#include "nilwalk/lie.hpp"
#include "nilwalk/parallel.hpp"
#include "nilwalk/random.hpp"

namespace nilwalk {

// Monte-Carlo sample of group-valued paths, stored only at the kept times.
struct PathEnsemble {
  AlgebraPtr algebra;
  std::vector<double> times;
  std::int64_t paths = 0;
  std::vector<double> data;    // ((path * times) + k) * dim + i
  std::vector<int> vertices;   // path * times + k, when recorded
  std::vector<std::pair<std::string, std::string>> metadata;

  int dim() const { return algebra->dim(); }
  int time_count() const { return static_cast<int>(times.size()); }

  std::span<const double> at(std::int64_t path, int k) const {
    return {data.data() + (path * time_count() + k) * dim(), static_cast<std::size_t>(dim())};
  }
  double* slot(std::int64_t path, int k) { return data.data() + (path * time_count() + k) * dim(); }

  GroupElement element(std::int64_t path, int k) const {
    auto s = at(path, k);
    return GroupElement(algebra, std::vector<double>(s.begin(), s.end()));
  }

  // paths × dim matrix of the values at time index k.
  Eigen::MatrixXd marginal(int k) const {
    Eigen::MatrixXd out(paths, dim());
    for (std::int64_t p = 0; p < paths; ++p) {
      auto s = at(p, k);
      for (int i = 0; i < dim(); ++i) out(p, i) = s[i];
    }
    return out;
  }

  int time_index(double t) const {
    for (int k = 0; k < time_count(); ++k)
      if (std::abs(times[k] - t) < 1e-12) return k;
    throw DomainError("time " + std::to_string(t) + " was not recorded");
  }

  std::string meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return v;
    return "";
  }
};

struct WalkConfig {
  int n = 1;                       // steps per unit time
  std::int64_t paths = 1;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  bool center = false;             // multiply by exp(-k rho) at step k
  bool dilate = true;              // apply tau_{n^{-1/2}}
  std::vector<double> keep_times;  // empty: the whole grid k/n
  bool record_vertices = false;
  bool stationary_start = false;   // start from m instead of the base vertex
  int threads = 1;
};

namespace detail {

// Walker's alias method over the out-edges of one vertex.
struct AliasTable {
  std::vector<int> edges;
  std::vector<double> prob;
  std::vector<int> alias;

  AliasTable() = default;
  AliasTable(std::vector<int> out, const std::vector<double>& weights) : edges(std::move(out)) {
    const int k = static_cast<int>(edges.size());
    prob.assign(k, 0.0);
    alias.assign(k, 0);
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<double> scaled(k);
    std::vector<int> small, large;
    for (int i = 0; i < k; ++i) {
      scaled[i] = weights[i] * k / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      int s = small.back(), l = large.back();
      small.pop_back();
      prob[s] = scaled[s];
      alias[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (int i : large) prob[i] = 1.0, alias[i] = i;
    for (int i : small) prob[i] = 1.0, alias[i] = i;
  }

  // One 64-bit draw: high half picks the column, low half the coin.
  int sample(std::uint64_t r) const {
    std::uint64_t col = ((r >> 32) * static_cast<std::uint64_t>(edges.size())) >> 32;
    double coin = static_cast<double>(r & 0xffffffffu) * (1.0 / 4294967296.0);
    return edges[coin < prob[col] ? col : alias[col]];
  }
};

}  // namespace detail

// Edge sampler plus lifted increments for one walk and one realization.
class WalkSampler {
 public:
  WalkSampler(const VoltageGraph& g, const Realization& phi) : graph_(&g), dim_(g.algebra()->dim()) {
    if (static_cast<int>(phi.edge_increments.size()) != g.edge_count())
      throw StructuralError("realization does not match the graph");
    for (int v = 0; v < g.vertex_count(); ++v) {
      std::vector<double> w;
      for (int e : g.out_edges(v)) w.push_back(g.edge(e).p);
      tables_.emplace_back(g.out_edges(v), w);
    }
    for (const auto& inc : phi.edge_increments) increments_.insert(increments_.end(), inc.coords().begin(), inc.coords().end());
    terminus_.resize(g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) terminus_[e] = g.edge(e).terminus;
  }

  int next_edge(std::mt19937_64& rng, int vertex) const { return tables_[vertex].sample(rng()); }
  int terminus(int e) const { return terminus_[e]; }
  const double* increment(int e) const { return increments_.data() + static_cast<std::size_t>(e) * dim_; }
  const VoltageGraph& graph() const { return *graph_; }

 private:
  const VoltageGraph* graph_;
  int dim_;
  std::vector<detail::AliasTable> tables_;
  std::vector<double> increments_;
  std::vector<int> terminus_;
};

inline int sample_start(const VoltageGraph& g, const std::vector<double>& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng), acc = 0.0;
  for (int v = 0; v < g.vertex_count(); ++v) {
    acc += m[v];
    if (x < acc) return v;
  }
  return g.vertex_count() - 1;
}

// Step index [n t] for each requested time; the whole grid when none given.
inline std::vector<std::int64_t> kept_steps(int n, double horizon, const std::vector<double>& keep, std::vector<double>& times) {
  const std::int64_t total = std::llround(n * horizon);
  std::vector<std::int64_t> steps;
  times.clear();
  if (keep.empty()) {
    for (std::int64_t k = 0; k <= total; ++k) {
      steps.push_back(k);
      times.push_back(static_cast<double>(k) / n);
    }
    return steps;
  }
  for (double t : keep) {
    if (!(t >= 0.0 && t <= horizon + 1e-12)) throw DomainError("kept time outside [0, horizon]");
    steps.push_back(static_cast<std::int64_t>(std::floor(n * t + 1e-9)));
    times.push_back(t);
  }
  return steps;
}

// X_k = dΦ(e_1) ... dΦ(e_k), read out as τ_{n^{-1/2}}(X_k exp(-k ρ)).
inline PathEnsemble sample_walk(const VoltageGraph& g, const Realization& phi, const WalkConfig& cfg,
                                const Eigen::VectorXd* rho = nullptr) {
  if (cfg.n < 1) throw DomainError("n must be at least 1");
  if (cfg.paths < 1) throw DomainError("paths must be at least 1");
  if (!(cfg.horizon > 0)) throw DomainError("horizon must be positive");
  const auto& alg = *g.algebra();
  const int dim = alg.dim();
  Eigen::VectorXd rho_vec;
  InvariantMeasure meas;
  if (cfg.center || cfg.stationary_start) meas = invariant_measure(g);
  if (cfg.center) rho_vec = rho ? *rho : homological_direction(g, meas).rho;

  PathEnsemble ens;
  ens.algebra = g.algebra();
  auto steps = kept_steps(cfg.n, cfg.horizon, cfg.keep_times, ens.times);
  ens.paths = cfg.paths;
  ens.data.assign(static_cast<std::size_t>(cfg.paths) * steps.size() * dim, 0.0);
  if (cfg.record_vertices) ens.vertices.assign(static_cast<std::size_t>(cfg.paths) * steps.size(), 0);
  const std::int64_t last = *std::max_element(steps.begin(), steps.end());
  // Sorted visiting order of kept steps.
  std::vector<int> order(steps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return steps[a] < steps[b]; });

  WalkSampler sampler(g, phi);
  const double eps = cfg.dilate ? 1.0 / std::sqrt(static_cast<double>(cfg.n)) : 1.0;

  parallel_for(cfg.paths, cfg.threads, [&](std::int64_t path) {
    auto rng = stream_rng(cfg.seed, streams::walk, static_cast<std::uint64_t>(path));
    int v = cfg.stationary_start ? sample_start(g, meas.m, rng) : g.base_vertex();
    std::array<double, kMaxDim> x{};
    std::array<double, kMaxDim> shift{};
    std::size_t next = 0;
    auto emit = [&](std::int64_t k) {
      while (next < order.size() && steps[order[next]] == k) {
        int idx = order[next++];
        double* out = ens.slot(path, idx);
        if (cfg.center) {
          std::fill(shift.begin(), shift.begin() + dim, 0.0);
          for (int i = 0; i < rho_vec.size(); ++i) shift[i] = -static_cast<double>(k) * rho_vec[i];
          alg.cbh(x.data(), shift.data(), out, false);
        } else {
          std::copy(x.begin(), x.begin() + dim, out);
        }
        dilate_coords(alg, out, eps);
        if (cfg.record_vertices) ens.vertices[path * ens.time_count() + idx] = v;
      }
    };
    emit(0);
    for (std::int64_t k = 1; k <= last; ++k) {
      int e = sampler.next_edge(rng, v);
      alg.cbh(x.data(), sampler.increment(e), x.data(), false);
      v = sampler.terminus(e);
      emit(k);
    }
  });

  ens.metadata = {{"generator", "walk"},
                  {"seed", std::to_string(cfg.seed)},
                  {"stream", std::to_string(streams::walk)},
                  {"n", std::to_string(cfg.n)},
                  {"paths", std::to_string(cfg.paths)},
                  {"center", cfg.center ? "true" : "false"}};
  return ens;
}

// Log-linear interpolation in the limit group (graded product).
inline std::vector<GroupElement> interpolate(const PathEnsemble& ens, double t) {
  const auto& times = ens.times;
  if (times.empty() || !(t >= times.front() - 1e-15 && t <= times.back() + 1e-15))
    throw DomainError("interpolation time outside the recorded range");
  int k = 0;
  while (k + 1 < ens.time_count() && times[k + 1] <= t) ++k;
  std::vector<GroupElement> out;
  const auto& alg = *ens.algebra;
  const int dim = alg.dim();
  for (std::int64_t p = 0; p < ens.paths; ++p) {
    auto a = ens.at(p, k);
    std::vector<double> value(a.begin(), a.end());
    if (times[k] != t) {
      double theta = (t - times[k]) / (times[k + 1] - times[k]);
      auto b = ens.at(p, k + 1);
      std::array<double, kMaxDim> neg{}, step{};
      for (int i = 0; i < dim; ++i) neg[i] = -a[i];
      alg.cbh(neg.data(), b.data(), step.data(), true);
      for (int i = 0; i < dim; ++i) step[i] *= theta;
      alg.cbh(a.data(), step.data(), value.data(), true);
    }
    out.emplace_back(ens.algebra, std::move(value));
  }
  return out;
}

// Per path: sup over recorded pairs s < t of d(Y_s, Y_t) / (t - s)^alpha.
inline std::vector<double> holder_stat(const PathEnsemble& ens, double alpha, int threads = 1) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 1/2)");
  std::vector<double> out(ens.paths, 0.0);
  const auto& alg = *ens.algebra;
  const int nt = ens.time_count();
  // (t_j - t_i)^alpha, tabulated by lag on a uniform grid.
  bool uniform = true;
  for (int k = 1; k < nt; ++k)
    uniform = uniform && std::abs((ens.times[k] - ens.times[k - 1]) - (ens.times[1] - ens.times[0])) < 1e-12;
  std::vector<double> lag_pow(nt, 0.0);
  if (uniform)
    for (int l = 1; l < nt; ++l) lag_pow[l] = std::pow(l * (ens.times[1] - ens.times[0]), alpha);
  parallel_for(ens.paths, threads, [&](std::int64_t p) {
    double best = 0.0;
    for (int i = 0; i < nt; ++i)
      for (int j = i + 1; j < nt; ++j) {
        double d = quasi_distance_coords(alg, ens.at(p, i).data(), ens.at(p, j).data());
        double w = uniform ? lag_pow[j - i] : std::pow(ens.times[j] - ens.times[i], alpha);
        best = std::max(best, d / w);
      }
    out[p] = best;
  }, 1);
  return out;
}

struct ErgodicAverage {
  double average = 0.0;     // (1/N) Σ f(e_k) along one trajectory
  double stationary = 0.0;  // Σ m̃(e) f(e)
  double gap = 0.0;
  double std_error = 0.0;   // batch means
};

using EdgeFunctional = std::function<double(int edge, const GroupElement& increment)>;

inline ErgodicAverage ergodic_average(const VoltageGraph& g, const Realization& phi, const EdgeFunctional& f,
                                      std::int64_t n_steps, std::uint64_t seed, int batches = 50) {
  if (n_steps < batches) throw DomainError("need at least one step per batch");
  auto meas = invariant_measure(g);
  std::vector<double> values(g.edge_count());
  ErgodicAverage out;
  for (int e = 0; e < g.edge_count(); ++e) {
    values[e] = f(e, phi.edge_increments[e]);
    out.stationary += meas.edge_measure[e] * values[e];
  }
  WalkSampler sampler(g, phi);
  auto rng = stream_rng(seed, streams::ergodic, 0);
  int v = g.base_vertex();
  std::vector<double> batch(batches, 0.0);
  const std::int64_t per = n_steps / batches;
  double total = 0.0;
  for (std::int64_t k = 0; k < per * batches; ++k) {
    int e = sampler.next_edge(rng, v);
    v = sampler.terminus(e);
    batch[k / per] += values[e];
    total += values[e];
  }
  out.average = total / static_cast<double>(per * batches);
  double ss = 0.0;
  for (double b : batch) ss += (b / per - out.average) * (b / per - out.average);
  out.std_error = std::sqrt(ss / (batches - 1) / batches);
  out.gap = out.average - out.stationary;
  return out;
}

}  // namespace nilwalk
