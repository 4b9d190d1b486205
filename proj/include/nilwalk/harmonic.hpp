#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/errors.hpp"
#include "nilwalk/graph.hpp"
#include "nilwalk/lie.hpp"

namespace nilwalk {

// Periodic realization, stored on the fundamental domain.
struct Realization {
  std::vector<GroupElement> vertex_offsets;   // Φ(v) for each quotient vertex
  std::vector<GroupElement> edge_increments;  // dΦ(e) = Φ(o(e))^{-1} · voltage(e) · Φ(t(e))
  bool is_modified_harmonic = false;
  double residual = 0.0;        // harmonicity residual when is_modified_harmonic
  std::vector<double> walk_p;   // transition probability it was built for
};

inline Realization make_realization(const VoltageGraph& g, std::vector<GroupElement> offsets) {
  if (static_cast<int>(offsets.size()) != g.vertex_count()) throw StructuralError("one offset per vertex required");
  Realization phi;
  for (const auto& e : g.edges()) {
    const auto& a = offsets[e.origin];
    const auto& b = offsets[e.terminus];
    phi.edge_increments.push_back(cbh_product(cbh_product(inverse(a), e.voltage, false), b, false));
  }
  phi.vertex_offsets = std::move(offsets);
  phi.walk_p = g.probabilities();
  return phi;
}

// Right-multiplies every vertex offset by the matching factor.
inline Realization translate_offsets(const VoltageGraph& g, const Realization& phi,
                                     const std::vector<GroupElement>& factors) {
  std::vector<GroupElement> offs;
  for (int v = 0; v < g.vertex_count(); ++v) offs.push_back(cbh_product(phi.vertex_offsets[v], factors.at(v), false));
  return make_realization(g, std::move(offs));
}

// Σ_e m̃(e) log(dΦ(e))|_{g^(1)}; equals ρ for every periodic realization.
inline Eigen::VectorXd first_layer_image(const VoltageGraph& g, const InvariantMeasure& m, const Realization& phi) {
  int d1 = g.algebra()->layer_dim(1);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(d1);
  for (int e = 0; e < g.edge_count(); ++e)
    for (int i = 0; i < d1; ++i) r[i] += m.edge_measure[e] * phi.edge_increments[e][i];
  return r;
}

// max_x |Σ_{e∈E_x} p(e) log(dΦ(e))|_{g^(1)} - ρ|
inline double harmonicity_residual(const VoltageGraph& g, const Realization& phi, const Eigen::VectorXd& rho,
                                   const std::vector<double>* p = nullptr) {
  int d1 = g.algebra()->layer_dim(1);
  double worst = 0.0;
  for (int v = 0; v < g.vertex_count(); ++v) {
    Eigen::VectorXd s = -rho;
    for (int e : g.out_edges(v)) {
      double pe = p ? (*p)[e] : g.edge(e).p;
      for (int i = 0; i < d1; ++i) s[i] += pe * phi.edge_increments[e][i];
    }
    worst = std::max(worst, s.cwiseAbs().maxCoeff());
  }
  return worst;
}

// Modified harmonic realization with the base vertex pinned to the identity
// and higher-layer offsets set to zero.
inline Realization solve_realization(const VoltageGraph& g, const InvariantMeasure& m, const HomologicalDirection& gamma) {
  (void)m;
  const auto& alg = g.algebra();
  const int n = g.vertex_count();
  const int d1 = alg->layer_dim(1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, d1);
  for (int v = 0; v < n; ++v) {
    if (v == g.base_vertex()) {
      a(v, v) = 1.0;
      continue;
    }
    for (int e : g.out_edges(v)) {
      const auto& ed = g.edge(e);
      a(v, ed.terminus) += ed.p;
      a(v, v) -= ed.p;
      for (int i = 0; i < d1; ++i) b(v, i) -= ed.p * ed.voltage[i];
    }
    b.row(v) += gamma.rho.transpose();
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (lu.rank() < n) throw NumericalError("harmonicity system is singular beyond the translation kernel");
  Eigen::MatrixXd v = lu.solve(b);
  std::vector<GroupElement> offsets;
  for (int x = 0; x < n; ++x) {
    std::vector<double> c(alg->dim(), 0.0);
    if (x != g.base_vertex())
      for (int i = 0; i < d1; ++i) c[i] = v(x, i);
    offsets.emplace_back(alg, std::move(c));
  }
  Realization phi = make_realization(g, std::move(offsets));
  phi.residual = harmonicity_residual(g, phi, gamma.rho);
  phi.is_modified_harmonic = true;
  if (!(phi.residual <= 1e-10))
    throw NumericalError("harmonic realization residual " + std::to_string(phi.residual) + " above 1e-10");
  return phi;
}

// Largest conditional mean of a centred first-layer increment over all paths
// of length one and two from every vertex (martingale property).
inline double martingale_two_step_defect(const VoltageGraph& g, const Realization& phi, const Eigen::VectorXd& rho) {
  const int d1 = g.algebra()->layer_dim(1);
  double worst = 0.0;
  for (int x = 0; x < g.vertex_count(); ++x) {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(d1);
    for (int e1 : g.out_edges(x)) {
      const auto& first = phi.edge_increments[e1];
      Eigen::VectorXd cond = Eigen::VectorXd::Zero(d1);
      for (int e2 : g.out_edges(g.edge(e1).terminus)) {
        double pe = g.edge(e2).p;
        for (int i = 0; i < d1; ++i) cond[i] += pe * (phi.edge_increments[e2][i] - rho[i]);
      }
      worst = std::max(worst, cond.cwiseAbs().maxCoeff());
      for (int i = 0; i < d1; ++i) total[i] += g.edge(e1).p * (first[i] - rho[i] + cond[i]);
    }
    worst = std::max(worst, total.cwiseAbs().maxCoeff());
  }
  return worst;
}

struct AlbaneseData {
  Eigen::MatrixXd gram;    // ⟨⟨u_i,u_j⟩⟩ in the dual basis
  Eigen::MatrixXd metric;  // g0 = gram^{-1}
  Eigen::MatrixXd frame;   // column k is V_k in the X^(1) basis
  Eigen::MatrixXd coframe; // row k is v_k in the dual basis; coframe = frame^{-1}
  double volume = 0.0;     // vol(Alb); 1/volume = sqrt(det gram)
};

inline AlbaneseData albanese(const VoltageGraph& g, const InvariantMeasure& m, const HomologicalDirection& gamma,
                             const Realization& phi) {
  const int d1 = g.algebra()->layer_dim(1);
  AlbaneseData alb;
  alb.gram = -gamma.rho * gamma.rho.transpose();
  for (int e = 0; e < g.edge_count(); ++e) {
    Eigen::VectorXd u(d1);
    for (int i = 0; i < d1; ++i) u[i] = phi.edge_increments[e][i];
    alb.gram += m.edge_measure[e] * u * u.transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(alb.gram);
  double det = alb.gram.determinant();
  if (llt.info() != Eigen::Success || !(det > 1e-14))
    throw DegenerateWalkError("Albanese Gram matrix is singular (det " + std::to_string(det) + ")");
  alb.metric = alb.gram.inverse();
  alb.volume = 1.0 / std::sqrt(det);
  // Gram-Schmidt of u_1, u_2, ... in declared order under the gram inner product.
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d1, d1);
  for (int i = 0; i < d1; ++i) {
    Eigen::VectorXd w = Eigen::VectorXd::Unit(d1, i);
    for (int j = 0; j < i; ++j) {
      Eigen::VectorXd vj = c.row(j).transpose();
      w -= (vj.dot(alb.gram * w)) * vj;
    }
    w /= std::sqrt(w.dot(alb.gram * w));
    c.row(i) = w.transpose();
  }
  alb.coframe = c;
  alb.frame = c.inverse();
  return alb;
}

// max |Σ m̃ v_i(dΦ) v_j(dΦ) - v_i(ρ) v_j(ρ) - δ_ij|
inline double frame_normalization_defect(const VoltageGraph& g, const InvariantMeasure& m,
                                         const HomologicalDirection& gamma, const Realization& phi,
                                         const AlbaneseData& alb) {
  const int d1 = g.algebra()->layer_dim(1);
  Eigen::VectorXd vr = alb.coframe * gamma.rho;
  Eigen::MatrixXd s = -vr * vr.transpose();
  for (int e = 0; e < g.edge_count(); ++e) {
    Eigen::VectorXd u(d1);
    for (int i = 0; i < d1; ++i) u[i] = phi.edge_increments[e][i];
    Eigen::VectorXd v = alb.coframe * u;
    s += m.edge_measure[e] * v * v.transpose();
  }
  return (s - Eigen::MatrixXd::Identity(d1, d1)).cwiseAbs().maxCoeff();
}

// Frame vector V_k embedded in the full algebra.
inline std::vector<double> frame_vector(const GradedLieAlgebra& alg, const AlbaneseData& alb, int k) {
  std::vector<double> v(alg.dim(), 0.0);
  for (int i = 0; i < alg.layer_dim(1); ++i) v[i] = alb.frame(i, k);
  return v;
}

struct DriftBeta {
  Eigen::VectorXd beta;                      // g^(2) coordinates in the X^(2) basis
  std::optional<Eigen::VectorXd> beta_frame; // coefficients on [[V_i,V_j]], i<j, lexicographic
  std::optional<Eigen::MatrixXd> beta_bar;   // antisymmetric, beta_bar(i,j) = coefficient of [[V_i,V_j]]
};

// Matrix whose columns are [[V_i,V_j]] (i<j) in the X^(2) basis.
inline Eigen::MatrixXd frame_bracket_matrix(const GradedLieAlgebra& alg, const AlbaneseData& alb) {
  const int d1 = alg.layer_dim(1);
  const int b2 = alg.layer_begin(2);
  const int d2 = alg.layer_dim(2);
  Eigen::MatrixXd cols(d2, d1 * (d1 - 1) / 2);
  int col = 0;
  for (int i = 0; i < d1; ++i)
    for (int j = i + 1; j < d1; ++j) {
      auto br = alg.bracket(frame_vector(alg, alb, i), frame_vector(alg, alb, j), true);
      for (int a = 0; a < d2; ++a) cols(a, col) = br[b2 + a];
      ++col;
    }
  return cols;
}

inline DriftBeta drift_beta_from_increments(const AlgebraPtr& alg, const std::vector<double>& edge_measure,
                                            const std::vector<GroupElement>& increments, const Eigen::VectorXd& rho,
                                            const AlbaneseData& alb) {
  DriftBeta out;
  if (alg->step() < 2) {
    out.beta = Eigen::VectorXd::Zero(0);
    return out;
  }
  const int b2 = alg->layer_begin(2);
  const int d2 = alg->layer_dim(2);
  std::vector<double> neg_rho(alg->dim(), 0.0), prod(alg->dim());
  for (int i = 0; i < rho.size(); ++i) neg_rho[i] = -rho[i];
  out.beta = Eigen::VectorXd::Zero(d2);
  for (std::size_t e = 0; e < increments.size(); ++e) {
    alg->cbh(increments[e].coords().data(), neg_rho.data(), prod.data(), false);
    for (int a = 0; a < d2; ++a) out.beta[a] += edge_measure[e] * prod[b2 + a];
  }
  const int d1 = alg->layer_dim(1);
  if (d1 >= 2 && d2 == d1 * (d1 - 1) / 2) {
    Eigen::MatrixXd cols = frame_bracket_matrix(*alg, alb);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cols);
    if (lu.rank() == d2) {
      Eigen::VectorXd coef = lu.solve(out.beta);
      out.beta_frame = coef;
      Eigen::MatrixXd bar = Eigen::MatrixXd::Zero(d1, d1);
      int col = 0;
      for (int i = 0; i < d1; ++i)
        for (int j = i + 1; j < d1; ++j) {
          bar(i, j) = coef[col];
          bar(j, i) = -coef[col];
          ++col;
        }
      out.beta_bar = bar;
    }
  }
  return out;
}

// β(Φ0) = Σ_e m̃(e) log(dΦ0(e) · exp(-ρ))|_{g^(2)}
inline DriftBeta drift_beta(const VoltageGraph& g, const InvariantMeasure& m, const HomologicalDirection& gamma,
                            const Realization& phi, const AlbaneseData& alb) {
  return drift_beta_from_increments(g.algebra(), m.edge_measure, phi.edge_increments, gamma.rho, alb);
}

// Correction term with β(phi) = β(phi_hat) + beta_shift(phi, phi_hat, gamma).
inline Eigen::VectorXd beta_shift(const Realization& phi, const Realization& phi_hat, const HomologicalDirection& gamma) {
  if (phi.walk_p != phi_hat.walk_p || phi.vertex_offsets.size() != phi_hat.vertex_offsets.size())
    throw StructuralError("realizations belong to different walks");
  const auto& alg = phi.vertex_offsets.at(0).algebra();
  require_same(*alg, *phi_hat.vertex_offsets[0].algebra());
  auto c = cbh_product(inverse(phi.vertex_offsets[0]), phi_hat.vertex_offsets[0], false);
  std::vector<double> r(alg->dim(), 0.0);
  for (int i = 0; i < gamma.rho.size(); ++i) r[i] = gamma.rho[i];
  auto br = alg->bracket(r, c.coords(), true);
  Eigen::VectorXd out(alg->layer_dim(2));
  for (int a = 0; a < out.size(); ++a) out[a] = -br[alg->layer_begin(2) + a];
  return out;
}

struct Corrector {
  std::vector<Eigen::VectorXd> values;  // per quotient vertex, in g^(1)
  double max_norm = 0.0;
};

inline Corrector corrector(const Realization& phi, const Realization& phi0) {
  if (phi.vertex_offsets.size() != phi0.vertex_offsets.size()) throw StructuralError("realizations of different graphs");
  Corrector out;
  for (std::size_t v = 0; v < phi.vertex_offsets.size(); ++v) {
    const auto& a = phi.vertex_offsets[v];
    const auto& b = phi0.vertex_offsets[v];
    require_same(*a.algebra(), *b.algebra());
    const auto& alg = *a.algebra();
    for (int i = alg.layer_end(1); i < alg.dim(); ++i)
      if (std::abs(a[i] - b[i]) > 1e-12) throw StructuralError("realizations disagree on layers >= 2");
    Eigen::VectorXd c(alg.layer_dim(1));
    for (int i = 0; i < c.size(); ++i) c[i] = a[i] - b[i];
    out.max_norm = std::max(out.max_norm, c.norm());
    out.values.push_back(c);
  }
  return out;
}

// Everything the limit theorems need about one walk and its harmonic realization.
struct WalkGeometry {
  InvariantMeasure measure;
  HomologicalDirection gamma;
  Realization phi0;
  AlbaneseData alb;
  DriftBeta beta;
};

inline WalkGeometry analyse_walk(const VoltageGraph& g) {
  WalkGeometry w;
  w.measure = invariant_measure(g);
  w.gamma = homological_direction(g, w.measure);
  w.phi0 = solve_realization(g, w.measure, w.gamma);
  w.alb = albanese(g, w.measure, w.gamma, w.phi0);
  w.beta = drift_beta(g, w.measure, w.gamma, w.phi0, w.alb);
  return w;
}

}  // namespace nilwalk
