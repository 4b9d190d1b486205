#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/errors.hpp"
#include "nilwalk/harmonic.hpp"
#include "nilwalk/lie.hpp"
#include "nilwalk/parallel.hpp"
#include "nilwalk/random.hpp"
#include "nilwalk/stats.hpp"
#include "nilwalk/tensor.hpp"
#include "nilwalk/walk.hpp"

namespace nilwalk {

// dY = Σ V_i(Y) ∘ dB^i + drift(Y) dt on the limit group (graded product), Y_0 = 1.
struct DiffusionSpec {
  AlgebraPtr algebra;
  std::vector<std::vector<double>> frame;  // V_1..V_d1 in full coordinates
  std::vector<double> drift;               // full coordinates
  double horizon = 1.0;
  double h = 1.0 / 1024;
  std::int64_t paths = 1;
  std::uint64_t seed = 0;
  int substeps = 64;               // Castell sub-mesh per step h
  std::vector<double> keep_times;  // empty: every step
  int threads = 1;

  void validate() const {
    if (!algebra) throw StructuralError("diffusion spec has no algebra");
    if (!(h > 0)) throw DomainError("step h must be positive");
    if (!(horizon > 0)) throw DomainError("horizon must be positive");
    if (paths < 1) throw DomainError("paths must be at least 1");
    if (substeps < 1) throw DomainError("substeps must be at least 1");
    const int d1 = algebra->layer_dim(1);
    if (static_cast<int>(frame.size()) != d1) throw StructuralError("frame needs one vector per first-layer dimension");
    Eigen::MatrixXd f(d1, d1);
    for (int k = 0; k < d1; ++k) {
      if (static_cast<int>(frame[k].size()) != algebra->dim()) throw StructuralError("frame vector has wrong length");
      for (int i = d1; i < algebra->dim(); ++i)
        if (frame[k][i] != 0.0) throw StructuralError("frame vectors must lie in the first layer");
      for (int i = 0; i < d1; ++i) f(i, k) = frame[k][i];
    }
    if (Eigen::FullPivLU<Eigen::MatrixXd>(f).rank() < d1) throw StructuralError("frame does not span the first layer");
    if (static_cast<int>(drift.size()) != algebra->dim()) throw StructuralError("drift has wrong length");
  }
};

enum class DriftKind { beta, rho };

// Diffusion of a walk: orthonormal Albanese frame and drift β (or ρ).
inline DiffusionSpec diffusion_spec(const AlgebraPtr& alg, const AlbaneseData& alb, const DriftBeta& beta,
                                    const Eigen::VectorXd& rho, DriftKind kind = DriftKind::beta) {
  DiffusionSpec s;
  s.algebra = alg;
  for (int k = 0; k < alg->layer_dim(1); ++k) s.frame.push_back(frame_vector(*alg, alb, k));
  s.drift.assign(alg->dim(), 0.0);
  if (kind == DriftKind::beta) {
    if (alg->step() >= 2)
      for (int a = 0; a < beta.beta.size(); ++a) s.drift[alg->layer_begin(2) + a] = beta.beta[a];
  } else {
    for (int i = 0; i < rho.size(); ++i) s.drift[i] = rho[i];
  }
  return s;
}

inline DiffusionSpec diffusion_spec(const VoltageGraph& g, const WalkGeometry& w, DriftKind kind = DriftKind::beta) {
  return diffusion_spec(g.algebra(), w.alb, w.beta, w.gamma.rho, kind);
}

namespace detail {

inline std::vector<std::int64_t> diffusion_steps(const DiffusionSpec& s, std::vector<double>& times) {
  const std::int64_t total = std::llround(s.horizon / s.h);
  std::vector<std::int64_t> steps;
  times.clear();
  if (s.keep_times.empty()) {
    for (std::int64_t k = 0; k <= total; ++k) {
      steps.push_back(k);
      times.push_back(k * s.h);
    }
    return steps;
  }
  for (double t : s.keep_times) {
    if (!(t >= 0.0 && t <= s.horizon + 1e-12)) throw DomainError("kept time outside [0, horizon]");
    std::int64_t k = std::llround(t / s.h);
    if (std::abs(k * s.h - t) > 1e-9) throw DomainError("kept time is not a multiple of h");
    steps.push_back(k);
    times.push_back(t);
  }
  return steps;
}

inline std::vector<int> visit_order(const std::vector<std::int64_t>& steps) {
  std::vector<int> order(steps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return steps[a] < steps[b]; });
  return order;
}

}  // namespace detail

// Geometric Euler scheme: Y <- Y * exp(Σ ΔB^i V_i + h drift).
inline PathEnsemble euler_simulate(const DiffusionSpec& s) {
  s.validate();
  const auto& alg = *s.algebra;
  const int dim = alg.dim(), d1 = alg.layer_dim(1);
  PathEnsemble ens;
  ens.algebra = s.algebra;
  auto steps = detail::diffusion_steps(s, ens.times);
  auto order = detail::visit_order(steps);
  ens.paths = s.paths;
  ens.data.assign(static_cast<std::size_t>(s.paths) * steps.size() * dim, 0.0);
  const std::int64_t last = *std::max_element(steps.begin(), steps.end());
  const double sd = std::sqrt(s.h);
  parallel_for(s.paths, s.threads, [&](std::int64_t path) {
    auto rng = stream_rng(s.seed, streams::euler, static_cast<std::uint64_t>(path));
    std::normal_distribution<double> normal;
    std::array<double, kMaxDim> y{}, z{};
    std::size_t next = 0;
    auto emit = [&](std::int64_t k) {
      while (next < order.size() && steps[order[next]] == k) {
        int idx = order[next++];
        std::copy(y.begin(), y.begin() + dim, ens.slot(path, idx));
      }
    };
    emit(0);
    for (std::int64_t k = 1; k <= last; ++k) {
      for (int i = 0; i < dim; ++i) z[i] = s.h * s.drift[i];
      for (int j = 0; j < d1; ++j) {
        double db = sd * normal(rng);
        for (int i = 0; i < d1; ++i) z[i] += db * s.frame[j][i];
      }
      alg.cbh(y.data(), z.data(), y.data(), true);
      emit(k);
    }
  });
  ens.metadata = {{"generator", "euler"}, {"seed", std::to_string(s.seed)}, {"stream", std::to_string(streams::euler)}};
  return ens;
}

// ---- iterated integrals and the Castell representation ----

inline int descents(const std::vector<int>& sigma) {
  int e = 0;
  for (std::size_t i = 0; i + 1 < sigma.size(); ++i) e += sigma[i] > sigma[i + 1];
  return e;
}

// (-1)^{e(σ)} / (k^2 C(k-1, e(σ)))
inline double castell_weight(const std::vector<int>& sigma) {
  const int k = static_cast<int>(sigma.size());
  const int e = descents(sigma);
  double binom = 1.0;
  for (int i = 1; i <= e; ++i) binom = binom * (k - 1 - e + i) / i;
  return (e % 2 ? -1.0 : 1.0) / (k * k * binom);
}

inline std::vector<std::vector<int>> permutations(int k) {
  std::vector<int> sigma(k);
  std::iota(sigma.begin(), sigma.end(), 0);
  std::vector<std::vector<int>> out;
  do out.push_back(sigma);
  while (std::next_permutation(sigma.begin(), sigma.end()));
  return out;
}

// Stratonovich iterated integrals of (t, B_t) at recorded times; letter 0 is time.
struct IteratedIntegrals {
  int d = 0;  // Brownian dimension; the alphabet has d + 1 letters
  int r = 0;
  std::vector<double> times;
  std::vector<TensorElement> sig;

  double B(int k, const std::vector<int>& word) const {
    std::size_t idx = 0;
    for (int i : word) idx = idx * (d + 1) + i;
    return sig[k].level(static_cast<int>(word.size()))[idx];
  }

  // c^I = Σ_σ w(σ) B^{I_{σ^{-1}}}
  double c(int k, const std::vector<int>& word) const {
    const int len = static_cast<int>(word.size());
    double total = 0.0;
    std::vector<int> perm(len);
    for (const auto& sigma : permutations(len)) {
      // I_{σ^{-1}}: position j carries i_{σ^{-1}(j)}, i.e. i_m goes to position σ(m).
      for (int m = 0; m < len; ++m) perm[sigma[m]] = word[m];
      total += castell_weight(sigma) * B(k, perm);
    }
    return total;
  }

  double levy_area(int k, int i, int j) const { return 0.5 * (B(k, {i, j}) - B(k, {j, i})); }
};

inline IteratedIntegrals iterated_integrals(int d, int r, const std::vector<double>& grid, std::uint64_t seed,
                                            std::uint64_t path = 0, int substeps = 64) {
  if (r > 3) throw UnsupportedError("iterated integrals are provided up to level 3");
  if (d < 1 || r < 1) throw DomainError("dimension and level must be positive");
  if (grid.empty() || grid.front() != 0.0) throw DomainError("grid must start at 0");
  IteratedIntegrals out;
  out.d = d;
  out.r = r;
  out.times = grid;
  auto rng = stream_rng(seed, streams::castell, path);
  std::normal_distribution<double> normal;
  SegmentAppender app(d + 1, r);
  TensorElement s = TensorElement::unit(d + 1, r);
  std::vector<double> v(d + 1);
  out.sig.push_back(s);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    double dt = (grid[k] - grid[k - 1]) / substeps;
    if (!(dt > 0)) throw DomainError("grid must be strictly increasing");
    double sd = std::sqrt(dt);
    for (int m = 0; m < substeps; ++m) {
      v[0] = dt;
      for (int i = 1; i <= d; ++i) v[i] = sd * normal(rng);
      app.append(s, v.data());
    }
    out.sig.push_back(s);
  }
  return out;
}

namespace detail {

// U^I = [U_{i1},[U_{i2},...,U_{ik}]] under the graded bracket.
inline std::vector<double> nested_field(const GradedLieAlgebra& alg, const std::vector<std::vector<double>>& u,
                                        const std::vector<int>& word) {
  std::vector<double> cur = u[word.back()];
  for (int p = static_cast<int>(word.size()) - 2; p >= 0; --p) cur = alg.bracket(u[word[p]], cur, true);
  return cur;
}

// W_J with Z = Σ_J B^J W_J: W_J = Σ_σ w(σ) U^{J_σ}.
struct CastellTable {
  std::vector<std::vector<int>> words;
  std::vector<std::size_t> index;  // position in its tensor level
  std::vector<int> length;
  std::vector<std::vector<double>> w;
};

inline CastellTable castell_table(const GradedLieAlgebra& alg, const std::vector<std::vector<double>>& u, int r) {
  const int letters = static_cast<int>(u.size());
  CastellTable t;
  for (int k = 1; k <= r; ++k) {
    auto perms = permutations(k);
    std::vector<int> word(k, 0);
    std::size_t count = 1;
    for (int i = 0; i < k; ++i) count *= letters;
    for (std::size_t idx = 0; idx < count; ++idx) {
      std::size_t rem = idx;
      for (int p = k - 1; p >= 0; --p) {
        word[p] = static_cast<int>(rem % letters);
        rem /= letters;
      }
      std::vector<double> acc(alg.dim(), 0.0);
      std::vector<int> js(k);
      for (const auto& sigma : perms) {
        for (int m = 0; m < k; ++m) js[m] = word[sigma[m]];
        auto f = nested_field(alg, u, js);
        double wt = castell_weight(sigma);
        for (int i = 0; i < alg.dim(); ++i) acc[i] += wt * f[i];
      }
      bool nonzero = std::any_of(acc.begin(), acc.end(), [](double x) { return std::abs(x) > 1e-300; });
      if (!nonzero) continue;
      t.words.push_back(word);
      t.index.push_back(idx);
      t.length.push_back(k);
      t.w.push_back(std::move(acc));
    }
  }
  return t;
}

}  // namespace detail

// Σ_{|I| ≤ r} c^I U^I from a signature over the letters {0 (time), 1..d}.
inline std::vector<double> castell_exponent(const GradedLieAlgebra& alg, const detail::CastellTable& table,
                                            const TensorElement& sig) {
  std::vector<double> z(alg.dim(), 0.0);
  for (std::size_t j = 0; j < table.words.size(); ++j) {
    double b = sig.level(table.length[j])[table.index[j]];
    if (b == 0.0) continue;
    for (int i = 0; i < alg.dim(); ++i) z[i] += b * table.w[j][i];
  }
  return z;
}

inline std::vector<std::vector<double>> castell_fields(const DiffusionSpec& s) {
  std::vector<std::vector<double>> u = {s.drift};
  for (const auto& f : s.frame) u.push_back(f);
  return u;
}

// Y_t = exp(Σ c_t^I V^I) with V_0 = drift, from sub-mesh iterated integrals.
inline PathEnsemble castell_simulate(const DiffusionSpec& s) {
  s.validate();
  const auto& alg = *s.algebra;
  const int r = alg.step();
  if (r > 3) throw UnsupportedError("Castell representation is provided for step <= 3; use the Euler scheme");
  const int dim = alg.dim(), d1 = alg.layer_dim(1);
  auto table = detail::castell_table(alg, castell_fields(s), r);
  PathEnsemble ens;
  ens.algebra = s.algebra;
  auto steps = detail::diffusion_steps(s, ens.times);
  auto order = detail::visit_order(steps);
  ens.paths = s.paths;
  ens.data.assign(static_cast<std::size_t>(s.paths) * steps.size() * dim, 0.0);
  const std::int64_t last = *std::max_element(steps.begin(), steps.end());
  const double dt = s.h / s.substeps;
  const double sd = std::sqrt(dt);
  parallel_for(s.paths, s.threads, [&](std::int64_t path) {
    auto rng = stream_rng(s.seed, streams::castell, static_cast<std::uint64_t>(path));
    std::normal_distribution<double> normal;
    SegmentAppender app(d1 + 1, r);
    TensorElement sig = TensorElement::unit(d1 + 1, r);
    std::vector<double> v(d1 + 1);
    std::size_t next = 0;
    auto emit = [&](std::int64_t k) {
      while (next < order.size() && steps[order[next]] == k) {
        int idx = order[next++];
        auto z = castell_exponent(alg, table, sig);
        std::copy(z.begin(), z.end(), ens.slot(path, idx));
      }
    };
    emit(0);
    for (std::int64_t k = 1; k <= last; ++k) {
      for (int m = 0; m < s.substeps; ++m) {
        v[0] = dt;
        for (int i = 1; i <= d1; ++i) v[i] = sd * normal(rng);
        app.append(sig, v.data());
      }
      emit(k);
    }
  });
  ens.metadata = {{"generator", "castell"}, {"seed", std::to_string(s.seed)}, {"stream", std::to_string(streams::castell)}};
  return ens;
}

// ---- cross-check ----

struct CrosscheckEntry {
  double t = 0.0;
  std::string quantity;  // "mean[i]" or "cov[i,j]"
  double a = 0.0;
  double b = 0.0;
  double z = 0.0;  // |a - b| / combined standard error
  bool pass = true;
};

struct CrosscheckReport {
  std::vector<CrosscheckEntry> entries;
  double threshold = 4.0;
  bool pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
  }
  double max_z() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.z);
    return m;
  }
};

// Means and covariances of all coordinates at the given times, within `sigmas` combined errors.
inline CrosscheckReport crosscheck(const PathEnsemble& a, const PathEnsemble& b,
                                   const std::vector<double>& times = {0.25, 0.5, 1.0}, double sigmas = 4.0) {
  if (!a.algebra || !b.algebra || !a.algebra->same_as(*b.algebra)) throw StructuralError("ensembles live on different groups");
  CrosscheckReport rep;
  rep.threshold = sigmas;
  auto add = [&](double t, std::string q, Estimate x, Estimate y) {
    CrosscheckEntry e;
    e.t = t;
    e.quantity = std::move(q);
    e.a = x.value;
    e.b = y.value;
    double se = std::sqrt(x.se * x.se + y.se * y.se);
    e.z = se > 0 ? std::abs(x.value - y.value) / se : (x.value == y.value ? 0.0 : INFINITY);
    e.pass = e.z <= sigmas;
    rep.entries.push_back(e);
  };
  for (double t : times) {
    int ka, kb;
    try {
      ka = a.time_index(t);
      kb = b.time_index(t);
    } catch (const DomainError&) {
      throw StructuralError("time " + std::to_string(t) + " missing from one ensemble");
    }
    auto ma = a.marginal(ka), mb = b.marginal(kb);
    for (int i = 0; i < a.dim(); ++i) add(t, "mean[" + std::to_string(i) + "]", mean_estimate(ma.col(i)), mean_estimate(mb.col(i)));
    for (int i = 0; i < a.dim(); ++i)
      for (int j = i; j < a.dim(); ++j)
        add(t, "cov[" + std::to_string(i) + "," + std::to_string(j) + "]", covariance_estimate(ma.col(i), ma.col(j)),
            covariance_estimate(mb.col(i), mb.col(j)));
  }
  return rep;
}

}  // namespace nilwalk
