#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/errors.hpp"
#include "nilwalk/lie.hpp"

namespace nilwalk {

struct Edge {
  std::string id;
  int origin = 0;
  int terminus = 0;
  int inverse = 0;
  GroupElement voltage;
  double p = 0.0;
};

// Finite quotient graph with deck-group voltages and transition probabilities.
class VoltageGraph {
 public:
  VoltageGraph(AlgebraPtr algebra, std::vector<std::string> vertices, std::vector<Edge> edges, int base = 0)
      : algebra_(std::move(algebra)), vertices_(std::move(vertices)), edges_(std::move(edges)), base_(base) {
    validate();
  }

  const AlgebraPtr& algebra() const { return algebra_; }
  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<std::string>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_.at(e); }
  const std::vector<int>& out_edges(int v) const { return out_.at(v); }
  int base_vertex() const { return base_; }

  int vertex_index(const std::string& name) const {
    for (int i = 0; i < vertex_count(); ++i)
      if (vertices_[i] == name) return i;
    throw ValidationError("", "unknown vertex '" + name + "'");
  }

  Eigen::MatrixXd transition_matrix() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(vertex_count(), vertex_count());
    for (const auto& e : edges_) p(e.origin, e.terminus) += e.p;
    return p;
  }

  std::vector<double> probabilities() const {
    std::vector<double> p;
    for (const auto& e : edges_) p.push_back(e.p);
    return p;
  }

  // Same covering, new transition probability (revalidated).
  VoltageGraph with_probabilities(const std::vector<double>& p) const {
    if (static_cast<int>(p.size()) != edge_count()) throw StructuralError("probability vector has wrong length");
    std::vector<Edge> edges = edges_;
    for (int e = 0; e < edge_count(); ++e) edges[e].p = p[e];
    return VoltageGraph(algebra_, vertices_, std::move(edges), base_);
  }

  // Same combinatorics and probabilities.
  bool same_walk(const VoltageGraph& o) const {
    if (vertex_count() != o.vertex_count() || edge_count() != o.edge_count()) return false;
    for (int e = 0; e < edge_count(); ++e) {
      const auto& a = edges_[e];
      const auto& b = o.edges_[e];
      if (a.origin != b.origin || a.terminus != b.terminus || a.p != b.p) return false;
    }
    return algebra_->same_as(*o.algebra_);
  }

 private:
  void validate() {
    const int nv = vertex_count();
    const int ne = edge_count();
    if (nv == 0) throw ValidationError("/graph/vertices", "graph has no vertices");
    if (base_ < 0 || base_ >= nv) throw ValidationError("/graph/vertices", "base vertex out of range");
    out_.assign(nv, {});
    for (int e = 0; e < ne; ++e) {
      const auto& ed = edges_[e];
      std::string where = "/graph/edges/" + std::to_string(e);
      if (ed.origin < 0 || ed.origin >= nv) throw ValidationError(where + "/origin", "unknown vertex");
      if (ed.terminus < 0 || ed.terminus >= nv) throw ValidationError(where + "/terminus", "unknown vertex");
      if (!ed.voltage.algebra() || !ed.voltage.algebra()->same_as(*algebra_))
        throw StructuralError("edge voltage in a different algebra");
      if (!(ed.p >= 0.0 && ed.p <= 1.0)) throw StochasticityError(where + "/p", "probability outside [0,1]");
      out_[ed.origin].push_back(e);
    }
    for (int e = 0; e < ne; ++e) {
      const auto& ed = edges_[e];
      std::string where = "/graph/edges/" + std::to_string(e) + "/inverse";
      if (ed.inverse < 0 || ed.inverse >= ne) throw InversePairingError(where, "inverse edge does not exist");
      if (ed.inverse == e) throw InversePairingError(where, "edge is its own inverse");
      const auto& inv = edges_[ed.inverse];
      if (inv.inverse != e) throw InversePairingError(where, "inverse pairing is not an involution");
      if (inv.origin != ed.terminus || inv.terminus != ed.origin)
        throw InversePairingError(where, "inverse edge does not reverse endpoints");
      for (int i = 0; i < ed.voltage.dim(); ++i)
        if (std::abs(ed.voltage[i] + inv.voltage[i]) > 1e-12)
          throw InversePairingError("/graph/edges/" + std::to_string(e) + "/voltage",
                                    "voltage of inverse edge is not the group inverse");
      if (!(ed.p + inv.p > 0.0))
        throw StochasticityError("/graph/edges/" + std::to_string(e) + "/p", "p(e) + p(inverse) must be positive");
    }
    for (int v = 0; v < nv; ++v) {
      double s = 0.0;
      for (int e : out_[v]) s += edges_[e].p;
      if (std::abs(s - 1.0) > 1e-9)
        throw StochasticityError("/graph/vertices/" + std::to_string(v),
                                 "outgoing probabilities of '" + vertices_[v] + "' sum to " + std::to_string(s));
    }
    // Strong connectivity through edges of positive probability.
    for (int start = 0; start < nv; ++start) {
      std::vector<char> seen(nv, 0);
      std::vector<int> stack = {start};
      seen[start] = 1;
      while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int e : out_[v]) {
          int w = edges_[e].terminus;
          if (edges_[e].p > 0.0 && !seen[w]) {
            seen[w] = 1;
            stack.push_back(w);
          }
        }
      }
      for (int v = 0; v < nv; ++v)
        if (!seen[v])
          throw ReducibilityError("/graph", "vertex '" + vertices_[v] + "' unreachable from '" + vertices_[start] + "'");
    }
  }

  AlgebraPtr algebra_;
  std::vector<std::string> vertices_;
  std::vector<Edge> edges_;
  int base_;
  std::vector<std::vector<int>> out_;
};

struct InvariantMeasure {
  std::vector<double> m;
  std::vector<double> edge_measure;  // m̃(e) = p(e) m(o(e))
  int iterations = 0;
  double residual = 0.0;         // max |mP - m| at convergence
  double solve_discrepancy = 0.0;  // max |m_power - m_linear|
};

inline InvariantMeasure invariant_measure(const VoltageGraph& g, int max_iterations = 1000000) {
  const int n = g.vertex_count();
  Eigen::MatrixXd p = g.transition_matrix();
  // Lazy chain: same stationary law, aperiodic even for bipartite graphs.
  Eigen::MatrixXd lazy = 0.5 * (p + Eigen::MatrixXd::Identity(n, n));
  Eigen::RowVectorXd m = Eigen::RowVectorXd::Constant(n, 1.0 / n);
  InvariantMeasure out;
  double residual = INFINITY;
  int it = 0;
  for (; it < max_iterations; ++it) {
    Eigen::RowVectorXd next = m * lazy;
    next /= next.sum();
    residual = (m * p - m).cwiseAbs().maxCoeff();
    m = next;
    if (residual < 1e-13) break;
  }
  residual = (m * p - m).cwiseAbs().maxCoeff();
  if (!(residual < 1e-13)) throw NumericalError("power iteration did not converge: residual " + std::to_string(residual));

  Eigen::MatrixXd a = p.transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(0).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[0] = 1.0;
  Eigen::VectorXd lin = a.fullPivLu().solve(rhs);
  out.solve_discrepancy = (lin.transpose() - m).cwiseAbs().maxCoeff();
  if (!(out.solve_discrepancy < 1e-10))
    throw NumericalError("power iteration and linear solve disagree by " + std::to_string(out.solve_discrepancy));

  // Keep the direct solution: it agrees with the power iterate and is accurate to rounding.
  // The last vertex absorbs the normalization rounding, so the masses sum to 1 exactly.
  lin /= lin.sum();
  double head = 0.0;
  for (int v = 0; v + 1 < n; ++v) head += lin[v];
  lin[n - 1] = 1.0 - head;
  out.m.assign(lin.data(), lin.data() + n);
  out.iterations = it;
  out.residual = (lin.transpose() * p - lin.transpose()).cwiseAbs().maxCoeff();
  for (const auto& e : g.edges()) out.edge_measure.push_back(e.p * out.m[e.origin]);
  return out;
}

struct HomologicalDirection {
  std::vector<double> chain;  // m̃(e) - m̃(ē), antisymmetric under inversion
  Eigen::VectorXd rho;        // first-layer image in the X^(1) basis
  double balance_residual = 0.0;

  bool symmetric(double tol = 1e-14) const {
    for (double c : chain)
      if (std::abs(c) > tol) return false;
    return true;
  }
};

inline HomologicalDirection homological_direction(const VoltageGraph& g, const InvariantMeasure& m) {
  const auto& alg = *g.algebra();
  HomologicalDirection h;
  h.rho = Eigen::VectorXd::Zero(alg.layer_dim(1));
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto& ed = g.edge(e);
    h.chain.push_back(m.edge_measure[e] - m.edge_measure[ed.inverse]);
    for (int i = 0; i < alg.layer_dim(1); ++i) h.rho[i] += m.edge_measure[e] * ed.voltage[i];
  }
  for (int v = 0; v < g.vertex_count(); ++v) {
    double s = 0.0;
    for (int e : g.out_edges(v)) s += h.chain[e];
    h.balance_residual = std::max(h.balance_residual, std::abs(s));
  }
  return h;
}

// ---- presets ----

// Three-bouquet over the Heisenberg group with loops γ1, γ2, γ3 = γ1^{-1}γ2 and
// their inverses; voltages are given in matrix (second-kind) coordinates.
inline VoltageGraph triangular_preset(double xi, double xi_p, double eta, double eta_p, double zeta, double zeta_p) {
  auto h = heisenberg_algebra();
  auto volt = [&](double x, double y, double z) { return from_second_kind(h, std::vector<double>{x, y, z}); };
  GroupElement g1 = volt(1, 0, 0), g2 = volt(0, 1, 0), g3 = volt(-1, 1, 0);
  std::vector<Edge> edges = {
      {"e1", 0, 0, 1, g1, xi},   {"e1bar", 0, 0, 0, inverse(g1), xi_p},
      {"e2", 0, 0, 3, g2, eta_p}, {"e2bar", 0, 0, 2, inverse(g2), eta},
      {"e3", 0, 0, 5, g3, zeta}, {"e3bar", 0, 0, 4, inverse(g3), zeta_p},
  };
  return VoltageGraph(h, {"x"}, std::move(edges));
}

// Dice lattice quotient: vertex x of degree 6, vertices y and z of degree 3.
inline VoltageGraph dice_preset(double xi, double eta, double zeta, double alpha, double beta, double gamma) {
  auto h = heisenberg_algebra();
  GroupElement one = GroupElement::identity(h);
  GroupElement g1(h, {1, 0, 0}), g2(h, {0, 1, 0});
  const int x = 0, y = 1, z = 2;
  std::vector<Edge> edges = {
      {"e1", x, y, 6, one, xi},
      {"e2", x, y, 7, inverse(g1), eta},
      {"e3", x, y, 8, inverse(g2), zeta},
      {"e4", x, z, 9, one, zeta},
      {"e5", x, z, 10, g1, eta},
      {"e6", x, z, 11, g2, xi},
      {"e1bar", y, x, 0, one, gamma},
      {"e2bar", y, x, 1, g1, beta},
      {"e3bar", y, x, 2, g2, alpha},
      {"e4bar", z, x, 3, one, alpha},
      {"e5bar", z, x, 4, inverse(g1), beta},
      {"e6bar", z, x, 5, inverse(g2), gamma},
  };
  return VoltageGraph(h, {"x", "y", "z"}, std::move(edges));
}

}  // namespace nilwalk
