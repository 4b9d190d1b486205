#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/diffusion.hpp"
#include "nilwalk/errors.hpp"
#include "nilwalk/graph.hpp"
#include "nilwalk/harmonic.hpp"
#include "nilwalk/lie.hpp"
#include "nilwalk/stats.hpp"
#include "nilwalk/tensor.hpp"
#include "nilwalk/walk.hpp"

namespace nilwalk {

// ---- reports ----

struct Check {
  std::string id;    // criterion the number belongs to
  std::string name;
  double t = 0.0;
  double estimate = 0.0;
  double target = 0.0;
  double se = 0.0;
  double lo = 0.0;   // acceptance band
  double hi = 0.0;
  bool pass = true;
};

struct Report {
  std::string name;
  std::vector<Check> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
  void add(Check c) { checks.push_back(std::move(c)); }
  void append(const Report& o) { checks.insert(checks.end(), o.checks.begin(), o.checks.end()); }
};

inline Check band_check(std::string id, std::string name, double t, Estimate est, double target, double sigmas) {
  Check c;
  c.id = std::move(id);
  c.name = std::move(name);
  c.t = t;
  c.estimate = est.value;
  c.target = target;
  c.se = est.se;
  c.lo = target - sigmas * est.se;
  c.hi = target + sigmas * est.se;
  c.pass = est.value >= c.lo && est.value <= c.hi;
  return c;
}

// ---- semigroup oracle ----

struct DpOptions {
  bool center = true;
  double prune_below = 0.0;           // drop states lighter than this; their mass is reported
  std::int64_t max_states = 10000000;
  bool dense = true;                  // array-per-cell layout when the centre is one-dimensional
};

struct DpResult {
  double value = 0.0;
  int n = 0;
  std::int64_t states = 0;       // stored states after the last step
  std::int64_t peak_states = 0;
  double total_mass = 0.0;       // kept mass
  double dropped_mass = 0.0;     // bound on |value - exact| / sup|f|
};

using GroupFunction = std::function<double(std::span<const double>)>;

namespace detail {

inline constexpr int kDpMaxDim = 8;

// Neumaier compensated sum.
struct CompensatedSum {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

struct DpKey {
  std::int32_t vertex;
  std::array<std::int64_t, kDpMaxDim> c;
  bool operator==(const DpKey& o) const { return vertex == o.vertex && c == o.c; }
};

struct DpKeyHash {
  std::size_t operator()(const DpKey& k) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ull ^ static_cast<std::uint64_t>(k.vertex);
    for (auto x : k.c) {
      h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h *= 0xbf58476d1ce4e5b9ull;
    }
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

// Smallest q <= 1e4 with q·x integral for every x.
inline std::int64_t common_denominator(const std::vector<double>& xs) {
  for (std::int64_t q = 1; q <= 10000; ++q) {
    bool ok = true;
    for (double x : xs)
      if (std::abs(x * q - std::llround(x * q)) > 1e-9 * std::max(1.0, std::abs(x * q))) {
        ok = false;
        break;
      }
    if (ok) return q;
  }
  throw DataError("increments are not on a rational lattice (denominator above 10000)");
}

// Step-2 algebras with one-dimensional centre: per (vertex, layer-1 point) a
// dense array over the layer-2 lattice. One step shifts each array.
struct DpCell {
  DpKey key;               // vertex and layer-1 key; c[d1..] unused
  std::int64_t lo = 0;     // layer-2 key of vals[0]
  std::vector<double> vals;
};

template <class Readout>
DpResult dp_central(const VoltageGraph& g, const Realization& phi, int n, const DpOptions& opt, Readout&& readout) {
  const auto& alg = *g.algebra();
  const int d1 = alg.layer_dim(1);
  const int zi = alg.layer_begin(2);
  std::vector<double> l1;
  for (const auto& inc : phi.edge_increments)
    for (int i = 0; i < d1; ++i) l1.push_back(inc[i]);
  const std::int64_t q1 = common_denominator(l1);
  // Generators of every layer-2 shift: inc2(e) and ½ c [X_a, ·] applied to one layer-1 lattice unit.
  std::vector<double> gens;
  for (const auto& inc : phi.edge_increments) {
    gens.push_back(inc[zi]);
    for (const auto& sc : alg.constants(false)) {
      gens.push_back(0.5 * sc.coef * inc[sc.b] / static_cast<double>(q1));
      gens.push_back(0.5 * sc.coef * inc[sc.a] / static_cast<double>(q1));
    }
  }
  std::int64_t q2 = common_denominator(gens), gcd2 = 0;
  for (double v : gens) gcd2 = std::gcd(gcd2, std::llabs(std::llround(v * static_cast<double>(q2))));
  const double s1 = static_cast<double>(q1);
  const double s2 = static_cast<double>(q2) / static_cast<double>(std::max<std::int64_t>(gcd2, 1));

  std::vector<DpCell> cur(1), next;
  cur[0].key = DpKey{};
  cur[0].key.vertex = g.base_vertex();
  cur[0].vals = {1.0};
  DpResult res;
  res.n = n;
  res.peak_states = 1;
  struct Move {
    int src, dst;
    std::int64_t shift;
    double p;
  };
  std::vector<Move> moves;
  std::unordered_map<DpKey, int, DpKeyHash> index;
  std::array<double, kMaxDim> x{}, y{};
  for (int step = 0; step < n; ++step) {
    index.clear();
    next.clear();
    moves.clear();
    std::vector<std::pair<std::int64_t, std::int64_t>> range;
    for (int i = 0; i < static_cast<int>(cur.size()); ++i) {
      const auto& cell = cur[i];
      std::fill(x.begin(), x.end(), 0.0);
      for (int a = 0; a < d1; ++a) x[a] = static_cast<double>(cell.key.c[a]) / s1;
      for (int e : g.out_edges(cell.key.vertex)) {
        const auto& ed = g.edge(e);
        if (ed.p == 0.0) continue;
        alg.cbh(x.data(), phi.edge_increments[e].coords().data(), y.data(), false);
        DpKey nk{};
        nk.vertex = ed.terminus;
        for (int a = 0; a < d1; ++a) {
          double v = y[a] * s1;
          nk.c[a] = std::llround(v);
          if (std::abs(v - static_cast<double>(nk.c[a])) > 1e-6) throw DataError("group products left the integer key lattice");
        }
        double zs = y[zi] * s2;
        std::int64_t shift = std::llround(zs);
        if (std::abs(zs - static_cast<double>(shift)) > 1e-6) throw DataError("group products left the integer key lattice");
        auto [it, fresh] = index.emplace(nk, static_cast<int>(next.size()));
        std::int64_t lo = cell.lo + shift, hi = lo + static_cast<std::int64_t>(cell.vals.size());
        if (fresh) {
          next.push_back(DpCell{nk, 0, {}});
          range.emplace_back(lo, hi);
        } else {
          auto& r = range[it->second];
          r.first = std::min(r.first, lo);
          r.second = std::max(r.second, hi);
        }
        moves.push_back({i, it->second, shift, ed.p});
      }
    }
    std::int64_t total = 0;
    for (std::size_t j = 0; j < next.size(); ++j) total += range[j].second - range[j].first;
    if (total > opt.max_states)
      throw ResourceError("semigroup DP support reached " + std::to_string(total) + " states (limit " +
                          std::to_string(opt.max_states) + ") at step " + std::to_string(step + 1));
    for (std::size_t j = 0; j < next.size(); ++j) {
      next[j].lo = range[j].first;
      next[j].vals.assign(range[j].second - range[j].first, 0.0);
    }
    for (const auto& m : moves) {
      const auto& src = cur[m.src];
      auto& dst = next[m.dst];
      double* out = dst.vals.data() + (src.lo + m.shift - dst.lo);
      const double* in = src.vals.data();
      const std::size_t len = src.vals.size();
      for (std::size_t k = 0; k < len; ++k) out[k] += m.p * in[k];
    }
    std::int64_t kept = 0;
    if (opt.prune_below > 0.0) {
      for (auto& cell : next) {
        auto& v = cell.vals;
        std::size_t a = 0, b = v.size();
        while (a < b && v[a] < opt.prune_below) res.dropped_mass += v[a++];
        while (b > a && v[b - 1] < opt.prune_below) res.dropped_mass += v[--b];
        if (a > 0 || b < v.size()) {
          cell.lo += static_cast<std::int64_t>(a);
          v = std::vector<double>(v.begin() + a, v.begin() + b);
        }
      }
      next.erase(std::remove_if(next.begin(), next.end(), [](const DpCell& c) { return c.vals.empty(); }), next.end());
    }
    for (const auto& cell : next) kept += static_cast<std::int64_t>(cell.vals.size());
    res.peak_states = std::max(res.peak_states, kept);
    res.states = kept;
    cur.swap(next);
  }
  if (n == 0) res.states = 1;
  std::array<double, kMaxDim> z{};
  CompensatedSum value, mass;
  for (const auto& cell : cur) {
    std::fill(z.begin(), z.end(), 0.0);
    for (int a = 0; a < d1; ++a) z[a] = static_cast<double>(cell.key.c[a]) / s1;
    for (std::size_t k = 0; k < cell.vals.size(); ++k) {
      if (cell.vals[k] == 0.0) continue;
      z[zi] = static_cast<double>(cell.lo + static_cast<std::int64_t>(k)) / s2;
      value.add(cell.vals[k] * readout(z.data()));
      mass.add(cell.vals[k]);
    }
  }
  res.value = value.value();
  res.total_mass = mass.value();
  return res;
}

}  // namespace detail

// Exact forward DP of L_p^n P_{n^{-1/2}} f at the base vertex, over
// (vertex, lattice element) states with integer keys.
inline DpResult semigroup_dp(const VoltageGraph& g, const Realization& phi, int n, const GroupFunction& f,
                             const DpOptions& opt = {}) {
  if (n < 0) throw DomainError("n must be non-negative");
  const auto& alg = *g.algebra();
  const int dim = alg.dim();
  if (dim > detail::kDpMaxDim) throw UnsupportedError("semigroup DP supports group dimension up to 8");

  Eigen::VectorXd rho;
  if (opt.center) rho = homological_direction(g, invariant_measure(g)).rho;
  const double eps = n > 0 ? 1.0 / std::sqrt(static_cast<double>(n)) : 1.0;
  std::array<double, kMaxDim> shift{};
  for (int i = 0; i < static_cast<int>(rho.size()); ++i) shift[i] = -static_cast<double>(n) * rho[i];
  std::vector<double> z(dim);
  auto readout = [&](const double* x) {
    if (opt.center) alg.cbh(x, shift.data(), z.data(), false);
    else std::copy(x, x + dim, z.begin());
    dilate_coords(alg, z.data(), eps);
    return f(z);
  };
  if (opt.dense && alg.step() == 2 && alg.layer_dim(2) == 1) return detail::dp_central(g, phi, n, opt, readout);

  // Key scale per layer: lattice denominator of the increments times room for the CBH fractions.
  std::vector<double> scale(dim);
  std::int64_t d1 = 1;
  for (int k = 1; k <= alg.step(); ++k) {
    std::vector<double> xs;
    for (const auto& inc : phi.edge_increments)
      for (int i = alg.layer_begin(k); i < alg.layer_end(k); ++i) xs.push_back(inc[i]);
    std::int64_t q = detail::common_denominator(xs);
    if (k == 1) d1 = q;
    double s = static_cast<double>(q);
    for (int j = 2; j <= k; ++j) s *= 12.0 * static_cast<double>(d1);
    for (int i = alg.layer_begin(k); i < alg.layer_end(k); ++i) scale[i] = s;
  }

  using Map = std::unordered_map<detail::DpKey, double, detail::DpKeyHash>;
  Map cur, next;
  detail::DpKey start{};
  start.vertex = g.base_vertex();
  cur.emplace(start, 1.0);
  DpResult res;
  res.n = n;
  res.peak_states = 1;
  std::array<double, kMaxDim> x{}, y{};
  for (int step = 0; step < n; ++step) {
    next.clear();
    next.reserve(cur.size() * 3);
    for (const auto& [key, prob] : cur) {
      for (int i = 0; i < dim; ++i) x[i] = static_cast<double>(key.c[i]) / scale[i];
      for (int e : g.out_edges(key.vertex)) {
        const auto& ed = g.edge(e);
        if (ed.p == 0.0) continue;
        alg.cbh(x.data(), phi.edge_increments[e].coords().data(), y.data(), false);
        detail::DpKey nk{};
        nk.vertex = ed.terminus;
        for (int i = 0; i < dim; ++i) {
          double v = y[i] * scale[i];
          nk.c[i] = std::llround(v);
          if (std::abs(v - static_cast<double>(nk.c[i])) > 1e-6)
            throw DataError("group products left the integer key lattice");
        }
        next[nk] += prob * ed.p;
      }
    }
    if (opt.prune_below > 0.0) {
      for (auto it = next.begin(); it != next.end();) {
        if (it->second < opt.prune_below) {
          res.dropped_mass += it->second;
          it = next.erase(it);
        } else {
          ++it;
        }
      }
    }
    if (static_cast<std::int64_t>(next.size()) > opt.max_states)
      throw ResourceError("semigroup DP support reached " + std::to_string(next.size()) + " states (limit " +
                          std::to_string(opt.max_states) + ") at step " + std::to_string(step + 1));
    res.peak_states = std::max<std::int64_t>(res.peak_states, next.size());
    cur.swap(next);
  }
  // Deterministic read-out order.
  std::vector<std::pair<detail::DpKey, double>> items(cur.begin(), cur.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.first.vertex != b.first.vertex) return a.first.vertex < b.first.vertex;
    return a.first.c < b.first.c;
  });
  detail::CompensatedSum value, mass;
  for (const auto& [key, prob] : items) {
    for (int i = 0; i < dim; ++i) x[i] = static_cast<double>(key.c[i]) / scale[i];
    value.add(prob * readout(x.data()));
    mass.add(prob);
  }
  res.value = value.value();
  res.total_mass = mass.value();
  res.states = static_cast<std::int64_t>(items.size());
  return res;
}

// ---- functional CLT moment battery ----

struct CltOptions {
  std::vector<double> times = {0.5, 1.0};
  double sigmas = 3.0;
  int energy_points = 1000;     // per sample
  int permutations = 1000;
  double energy_alpha = 0.01;
  std::uint64_t seed = 0;
  std::string id = "clt";
};

// Walk marginals against the diffusion with frame `alb` and drift `beta`:
// frame mean 0, frame covariance t·I, layer-2 mean t·β, energy test at the last time.
inline Report clt_moment_test(const PathEnsemble& walk, const AlbaneseData& alb, const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& rho, const PathEnsemble& diffusion, const CltOptions& opt = {}) {
  if (rho.size() > 0 && rho.cwiseAbs().maxCoeff() > 1e-10)
    throw PreconditionError("walk is not centred (rho != 0); apply measure_change first");
  const auto& alg = *walk.algebra;
  const int d1 = alg.layer_dim(1);
  Report rep;
  rep.name = opt.id;
  for (double t : opt.times) {
    Eigen::MatrixXd m = walk.marginal(walk.time_index(t));
    Eigen::MatrixXd v = m.leftCols(d1) * alb.coframe.transpose();
    for (int i = 0; i < d1; ++i)
      rep.add(band_check(opt.id, "frame_mean[" + std::to_string(i) + "]", t, mean_estimate(v.col(i)), 0.0, opt.sigmas));
    for (int i = 0; i < d1; ++i)
      for (int j = i; j < d1; ++j)
        rep.add(band_check(opt.id, "frame_cov[" + std::to_string(i) + "," + std::to_string(j) + "]", t,
                           covariance_estimate(v.col(i), v.col(j)), i == j ? t : 0.0, opt.sigmas));
    if (alg.step() >= 2)
      for (int a = 0; a < alg.layer_dim(2); ++a)
        rep.add(band_check(opt.id, "layer2_mean[" + std::to_string(a) + "]", t,
                           mean_estimate(m.col(alg.layer_begin(2) + a)), t * beta[a], opt.sigmas));
  }
  double t_last = opt.times.back();
  auto a = subsample_rows(walk.marginal(walk.time_index(t_last)), opt.energy_points, opt.seed, 0);
  auto b = subsample_rows(diffusion.marginal(diffusion.time_index(t_last)), opt.energy_points, opt.seed, 1);
  auto et = energy_test(a, b, opt.permutations, opt.seed);
  Check c;
  c.id = opt.id;
  c.name = "energy_p_value";
  c.t = t_last;
  c.estimate = et.p_value;
  c.target = opt.energy_alpha;
  c.lo = opt.energy_alpha;
  c.hi = 1.0;
  c.pass = et.p_value >= opt.energy_alpha;
  rep.add(c);
  return rep;
}

// ---- area anomaly ----

struct AreaOptions {
  std::vector<double> times = {0.5, 1.0};
  std::int64_t bm_paths = 100000;
  std::uint64_t seed = 0;
  int substeps = 64;
  int threads = 1;
  double sigmas = 3.0;
  std::string id = "area";
};

// Frame-bracket coefficients A_ij (i<j) of the layer-2 part of each marginal:
// the antisymmetric level-2 component of the walk lift in the V-frame.
inline Eigen::MatrixXd frame_areas(const PathEnsemble& ens, const AlbaneseData& alb, int k) {
  const auto& alg = *ens.algebra;
  const int d1 = alg.layer_dim(1), d2 = alg.step() >= 2 ? alg.layer_dim(2) : 0;
  if (alg.step() != 2 || d2 != d1 * (d1 - 1) / 2)
    throw UnsupportedError("area comparison needs the free step-2 algebra");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(frame_bracket_matrix(alg, alb));
  Eigen::MatrixXd z = ens.marginal(k).middleCols(alg.layer_begin(2), d2);
  return lu.solve(z.transpose()).transpose();
}

// Walk area mean minus Brownian Lévy-area mean against t·β̄; walk area variance against t²/4.
inline Report area_anomaly_test(const PathEnsemble& walk, const AlbaneseData& alb, const DriftBeta& beta,
                                const AreaOptions& opt = {}) {
  const auto& alg = *walk.algebra;
  const int d1 = alg.layer_dim(1);
  if (!beta.beta_bar) throw UnsupportedError("area comparison needs the free step-2 algebra");
  std::vector<double> grid = {0.0};
  for (double t : opt.times) {
    if (!(t > grid.back())) throw DomainError("area times must be increasing and positive");
    grid.push_back(t);
  }
  const int pairs = d1 * (d1 - 1) / 2;
  std::vector<Eigen::MatrixXd> bm(opt.times.size(), Eigen::MatrixXd(opt.bm_paths, pairs));
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(d1, d1);
  parallel_for(opt.bm_paths, opt.threads, [&](std::int64_t path) {
    auto rp = distorted_bm(d1, zero, grid, opt.seed, static_cast<std::uint64_t>(path), opt.substeps);
    for (std::size_t k = 0; k < opt.times.size(); ++k) {
      const auto& l2 = rp.values[k + 1].level(2);
      int col = 0;
      for (int i = 0; i < d1; ++i)
        for (int j = i + 1; j < d1; ++j) bm[k](path, col++) = 0.5 * (l2[i * d1 + j] - l2[j * d1 + i]);
    }
  });
  Report rep;
  rep.name = opt.id;
  for (std::size_t k = 0; k < opt.times.size(); ++k) {
    const double t = opt.times[k];
    Eigen::MatrixXd a = frame_areas(walk, alb, walk.time_index(t));
    int col = 0;
    for (int i = 0; i < d1; ++i)
      for (int j = i + 1; j < d1; ++j, ++col) {
        std::string tag = "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        auto mw = mean_estimate(a.col(col)), mb = mean_estimate(bm[k].col(col));
        Estimate diff{mw.value - mb.value, std::hypot(mw.se, mb.se)};
        rep.add(band_check(opt.id, "area_mean_shift" + tag, t, diff, t * (*beta.beta_bar)(i, j), opt.sigmas));
        // Lévy area of a standard Brownian motion has variance t²/4; the polygonal
        // sub-mesh sample is biased low by t²/(12·substeps), so the exact value is the target.
        rep.add(band_check(opt.id, "area_variance" + tag, t, covariance_estimate(a.col(col), a.col(col)), t * t / 4,
                           opt.sigmas));
      }
  }
  return rep;
}

// ---- non-harmonic realizations ----

// Per path: max over the grid of d(Y_k, Ybar_k) between the lifts by phi0 and phi.
inline std::vector<double> sup_gap(const VoltageGraph& g, const Realization& phi0, const Realization& phi, int n,
                                   std::int64_t paths, std::uint64_t seed, bool center, int threads = 1) {
  const auto& alg = *g.algebra();
  const int dim = alg.dim();
  WalkSampler s0(g, phi0), s1(g, phi);
  Eigen::VectorXd rho;
  if (center) rho = homological_direction(g, invariant_measure(g)).rho;
  const double eps = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> out(paths, 0.0);
  parallel_for(paths, threads, [&](std::int64_t path) {
    auto rng = stream_rng(seed, streams::walk, static_cast<std::uint64_t>(path));
    std::array<double, kMaxDim> x{}, xb{}, a{}, b{}, shift{};
    int v = g.base_vertex();
    double best = 0.0;
    for (int k = 1; k <= n; ++k) {
      int e = s0.next_edge(rng, v);
      alg.cbh(x.data(), s0.increment(e), x.data(), false);
      alg.cbh(xb.data(), s1.increment(e), xb.data(), false);
      v = s0.terminus(e);
      if (center) {
        for (int i = 0; i < rho.size(); ++i) shift[i] = -static_cast<double>(k) * rho[i];
        alg.cbh(x.data(), shift.data(), a.data(), false);
        alg.cbh(xb.data(), shift.data(), b.data(), false);
      } else {
        std::copy(x.begin(), x.begin() + dim, a.begin());
        std::copy(xb.begin(), xb.begin() + dim, b.begin());
      }
      dilate_coords(alg, a.data(), eps);
      dilate_coords(alg, b.data(), eps);
      best = std::max(best, quasi_distance_coords(alg, a.data(), b.data()));
    }
    out[path] = best;
  });
  return out;
}

struct DecayFit {
  std::vector<int> ns;
  std::vector<double> mean_gap;
  double exponent = 0.0;  // slope of log gap against log n
  double constant = 0.0;  // C in gap ≈ C n^exponent
};

inline DecayFit fit_decay(const std::vector<int>& ns, const std::vector<double>& gaps) {
  DecayFit fit;
  fit.ns = ns;
  fit.mean_gap = gaps;
  const int k = static_cast<int>(ns.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < k; ++i) {
    double lx = std::log(static_cast<double>(ns[i])), ly = std::log(gaps[i]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
  }
  fit.exponent = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  fit.constant = std::exp((sy - fit.exponent * sx) / k);
  return fit;
}

struct NonharmonicOptions {
  WalkConfig walk;                        // moment-test ensemble (n, paths, seed, threads)
  DiffusionSpec diffusion;                // frame and drift filled in from the harmonic geometry
  CltOptions clt;
  std::vector<int> gap_ns = {256, 1024, 4096};
  std::int64_t gap_paths = 200;
  double max_exponent = -0.4;
};

struct NonharmonicReport {
  Report report;
  DecayFit fit;
  Corrector corrector;
};

inline NonharmonicReport nonharmonic_test(const VoltageGraph& g, const Realization& phi, const WalkGeometry& geo,
                                          NonharmonicOptions opt) {
  NonharmonicReport out;
  out.corrector = corrector(phi, geo.phi0);
  opt.walk.center = true;
  if (opt.walk.keep_times.empty()) opt.walk.keep_times = opt.clt.times;
  auto walk = sample_walk(g, phi, opt.walk, &geo.gamma.rho);
  auto spec = diffusion_spec(g, geo);
  spec.h = opt.diffusion.h;
  spec.substeps = opt.diffusion.substeps;
  spec.paths = opt.diffusion.paths;
  spec.seed = opt.diffusion.seed;
  spec.threads = opt.diffusion.threads;
  spec.keep_times = opt.clt.times;
  auto diff = castell_simulate(spec);
  out.report = clt_moment_test(walk, geo.alb, geo.beta.beta, geo.gamma.rho, diff, opt.clt);
  std::vector<double> gaps;
  for (int n : opt.gap_ns) {
    auto sg = sup_gap(g, geo.phi0, phi, n, opt.gap_paths, opt.walk.seed, true, opt.walk.threads);
    gaps.push_back(std::accumulate(sg.begin(), sg.end(), 0.0) / sg.size());
  }
  out.fit = fit_decay(opt.gap_ns, gaps);
  Check c;
  c.id = opt.clt.id;
  c.name = "sup_gap_exponent";
  c.estimate = out.fit.exponent;
  c.target = -0.5;
  c.lo = -INFINITY;
  c.hi = opt.max_exponent;
  c.pass = out.fit.exponent <= opt.max_exponent;
  out.report.add(c);
  return out;
}

// ---- measure change ----

struct NewtonTrace {
  std::vector<double> grad_norms;
  int iterations = 0;
  bool converged = false;
};

struct TwistData {
  std::vector<Eigen::VectorXd> lambda_star;   // per vertex
  std::vector<double> min_hessian_eigenvalue; // per vertex, of log F at λ*
  double start_spread = 0.0;                  // max distance between minimizers from random starts
  std::vector<double> twisted_p;
  std::optional<VoltageGraph> twisted;
  Realization phi0;                           // Φ0 re-bound to the twisted walk
  InvariantMeasure measure;
  HomologicalDirection gamma;
  AlbaneseData alb;
  DriftBeta beta;
  double df_residual = 0.0;                   // max_x |Σ 𝔭(e) log dΦ0(e)|_{g^(1)}|
  std::vector<NewtonTrace> traces;
};

struct MeasureChangeOptions {
  int starts = 5;
  double start_scale = 1.0;
  std::uint64_t seed = 0;
  double grad_tol = 1e-12;
  int max_iterations = 200;
};

namespace detail {

// Minimizes log F_x(λ) = log Σ p(e) exp(<λ, u_e>) by damped Newton.
inline Eigen::VectorXd newton_log_partition(const std::vector<double>& p, const std::vector<Eigen::VectorXd>& u,
                                            Eigen::VectorXd lambda, const MeasureChangeOptions& opt,
                                            NewtonTrace& trace) {
  const int d = static_cast<int>(lambda.size());
  auto eval = [&](const Eigen::VectorXd& l, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
    double mx = -INFINITY;
    for (std::size_t e = 0; e < u.size(); ++e) mx = std::max(mx, l.dot(u[e]));
    double z = 0.0;
    std::vector<double> w(u.size());
    for (std::size_t e = 0; e < u.size(); ++e) z += w[e] = p[e] * std::exp(l.dot(u[e]) - mx);
    if (grad) {
      grad->setZero(d);
      for (std::size_t e = 0; e < u.size(); ++e) *grad += (w[e] / z) * u[e];
    }
    if (hess) {
      hess->setZero(d, d);
      for (std::size_t e = 0; e < u.size(); ++e) *hess += (w[e] / z) * u[e] * u[e].transpose();
      *hess -= (*grad) * grad->transpose();
    }
    return mx + std::log(z);
  };
  Eigen::VectorXd grad(d);
  Eigen::MatrixXd hess(d, d);
  for (int it = 0; it < opt.max_iterations; ++it) {
    double val = eval(lambda, &grad, &hess);
    trace.grad_norms.push_back(grad.norm());
    trace.iterations = it;
    if (grad.norm() <= opt.grad_tol) {
      trace.converged = true;
      return lambda;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = -ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !(step.dot(grad) < 0)) step = -grad;
    double a = 1.0;
    // Inside the quadratic basin the Armijo test is below rounding, so take full steps.
    for (int ls = 0; ls < 60 && grad.norm() > 1e-6; ++ls) {
      Eigen::VectorXd cand = lambda + a * step;
      if (eval(cand, nullptr, nullptr) <= val + 1e-4 * a * step.dot(grad)) break;
      a *= 0.5;
    }
    Eigen::VectorXd moved = lambda + a * step;
    if (moved == lambda) {
      // No representable progress left; accept if the gradient is at rounding level.
      trace.converged = grad.norm() <= 1e3 * opt.grad_tol;
      if (trace.converged) return lambda;
      break;
    }
    lambda = moved;
  }
  std::string msg = "Newton did not converge; gradient norms:";
  for (std::size_t i = trace.grad_norms.size() > 8 ? trace.grad_norms.size() - 8 : 0; i < trace.grad_norms.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " %.3e", trace.grad_norms[i]);
    msg += buf;
  }
  throw NumericalError(msg);
}

}  // namespace detail

inline TwistData measure_change(const VoltageGraph& g, const Realization& phi0, const MeasureChangeOptions& opt = {}) {
  for (int e = 0; e < g.edge_count(); ++e)
    if (!(g.edge(e).p > 0.0))
      throw PreconditionError("measure change needs a positive transition probability (edge " + g.edge(e).id + ")");
  const auto& alg = g.algebra();
  const int d1 = alg->layer_dim(1);
  TwistData out;
  out.twisted_p.assign(g.edge_count(), 0.0);
  std::uniform_real_distribution<double> u01(-1.0, 1.0);
  for (int x = 0; x < g.vertex_count(); ++x) {
    std::vector<double> p;
    std::vector<Eigen::VectorXd> u;
    for (int e : g.out_edges(x)) {
      p.push_back(g.edge(e).p);
      Eigen::VectorXd v(d1);
      for (int i = 0; i < d1; ++i) v[i] = phi0.edge_increments[e][i];
      u.push_back(v);
    }
    NewtonTrace trace;
    Eigen::VectorXd lam = detail::newton_log_partition(p, u, Eigen::VectorXd::Zero(d1), opt, trace);
    out.traces.push_back(trace);
    auto rng = stream_rng(opt.seed, streams::newton_starts, static_cast<std::uint64_t>(x));
    for (int s = 0; s < opt.starts; ++s) {
      Eigen::VectorXd start(d1);
      for (int i = 0; i < d1; ++i) start[i] = opt.start_scale * u01(rng);
      NewtonTrace t2;
      Eigen::VectorXd other = detail::newton_log_partition(p, u, start, opt, t2);
      out.start_spread = std::max(out.start_spread, (other - lam).norm());
    }
    // Hessian of log F at λ*: the tilted covariance of u.
    double mx = -INFINITY;
    for (const auto& v : u) mx = std::max(mx, lam.dot(v));
    std::vector<double> w(u.size());
    double z = 0.0;
    for (std::size_t e = 0; e < u.size(); ++e) z += w[e] = p[e] * std::exp(lam.dot(u[e]) - mx);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d1);
    for (std::size_t e = 0; e < u.size(); ++e) mean += (w[e] / z) * u[e];
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d1, d1);
    for (std::size_t e = 0; e < u.size(); ++e) hess += (w[e] / z) * (u[e] - mean) * (u[e] - mean).transpose();
    out.min_hessian_eigenvalue.push_back(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hess).eigenvalues().minCoeff());
    const auto& out_edges = g.out_edges(x);
    for (std::size_t k = 0; k < out_edges.size(); ++k) out.twisted_p[out_edges[k]] = w[k] / z;
    out.lambda_star.push_back(lam);
  }
  out.twisted = g.with_probabilities(out.twisted_p);
  const auto& tg = *out.twisted;
  out.phi0 = make_realization(tg, phi0.vertex_offsets);
  out.measure = invariant_measure(tg);
  out.gamma = homological_direction(tg, out.measure);
  out.df_residual = harmonicity_residual(tg, out.phi0, Eigen::VectorXd::Zero(d1));
  out.phi0.is_modified_harmonic = true;
  out.phi0.residual = harmonicity_residual(tg, out.phi0, out.gamma.rho);
  out.alb = albanese(tg, out.measure, out.gamma, out.phi0);
  out.beta = drift_beta(tg, out.measure, out.gamma, out.phi0, out.alb);
  return out;
}

struct TwistedCltOptions {
  MeasureChangeOptions twist;
  WalkConfig walk;
  DiffusionSpec diffusion;
  CltOptions clt;
  std::int64_t ergodic_steps = 2000000;
};

struct TwistedCltReport {
  TwistData twist;
  Report report;
  std::vector<ErgodicAverage> beta_ergodic;  // per layer-2 coordinate
};

inline TwistedCltReport twisted_clt_test(const VoltageGraph& g, const Realization& phi0, TwistedCltOptions opt) {
  TwistedCltReport out;
  out.twist = measure_change(g, phi0, opt.twist);
  const auto& tw = out.twist;
  const auto& tg = *tw.twisted;
  opt.walk.center = false;
  if (opt.walk.keep_times.empty()) opt.walk.keep_times = opt.clt.times;
  auto walk = sample_walk(tg, tw.phi0, opt.walk);
  auto spec = diffusion_spec(tg.algebra(), tw.alb, tw.beta, tw.gamma.rho);
  spec.h = opt.diffusion.h;
  spec.substeps = opt.diffusion.substeps;
  spec.paths = opt.diffusion.paths;
  spec.seed = opt.diffusion.seed;
  spec.threads = opt.diffusion.threads;
  spec.keep_times = opt.clt.times;
  auto diff = castell_simulate(spec);
  out.report = clt_moment_test(walk, tw.alb, tw.beta.beta, tw.gamma.rho, diff, opt.clt);
  const auto& alg = *tg.algebra();
  if (alg.step() >= 2)
    for (int a = 0; a < alg.layer_dim(2); ++a) {
      int idx = alg.layer_begin(2) + a;
      auto ea = ergodic_average(tg, tw.phi0, [&](int, const GroupElement& inc) { return inc[idx]; }, opt.ergodic_steps,
                                opt.walk.seed + 1);
      out.beta_ergodic.push_back(ea);
      Check c = band_check(opt.clt.id, "beta_ergodic[" + std::to_string(a) + "]", 0.0, {ea.average, ea.std_error},
                           tw.beta.beta[a], 4.0);
      out.report.add(c);
    }
  return out;
}

}  // namespace nilwalk
