#pragma once

// Random instances shared by unit tests and the acceptance runner.

#include <random>
#include <vector>

#include "nilwalk/graph.hpp"
#include "nilwalk/lie.hpp"

namespace fixtures {

using namespace nilwalk;

// Heisenberg lattice element with integer matrix entries.
inline GroupElement lattice_element(std::mt19937_64& rng, const AlgebraPtr& h, int range = 1) {
  std::uniform_int_distribution<int> u(-range, range);
  return from_second_kind(h, std::vector<double>{double(u(rng)), double(u(rng)), double(u(rng))});
}

// Irreducible random walk over the Heisenberg lattice: a directed cycle
// through all vertices, generator loops at vertex 0, and random extra edges.
// With `reversible`, p(e) = c(e)/C(o(e)) for symmetric conductances c, so m̃(e) = m̃(ē).
inline VoltageGraph random_graph(std::mt19937_64& rng, int n_vertices, bool reversible = false) {
  auto h = heisenberg_algebra();
  std::uniform_real_distribution<double> w(0.2, 1.0);
  struct Pair {
    int a, b;
    GroupElement volt;
    double wf, wb;
  };
  std::vector<Pair> pairs;
  for (int v = 0; v < n_vertices; ++v) {
    int next = (v + 1) % n_vertices;
    if (next != v) pairs.push_back({v, next, lattice_element(rng, h), w(rng), w(rng)});
  }
  pairs.push_back({0, 0, GroupElement(h, {1, 0, 0}), w(rng), w(rng)});
  pairs.push_back({0, 0, GroupElement(h, {0, 1, 0}), w(rng), w(rng)});
  std::uniform_int_distribution<int> pick(0, n_vertices - 1);
  for (int extra = 0; extra < n_vertices; ++extra)
    pairs.push_back({pick(rng), pick(rng), lattice_element(rng, h), w(rng), w(rng)});

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    double wb = reversible ? p.wf : p.wb;
    int e = static_cast<int>(edges.size());
    edges.push_back({"f" + std::to_string(i), p.a, p.b, e + 1, p.volt, p.wf});
    edges.push_back({"b" + std::to_string(i), p.b, p.a, e, inverse(p.volt), wb});
  }
  std::vector<double> total(n_vertices, 0.0);
  for (const auto& e : edges) total[e.origin] += e.p;
  for (auto& e : edges) e.p /= total[e.origin];
  std::vector<std::string> names;
  for (int v = 0; v < n_vertices; ++v) names.push_back("v" + std::to_string(v));
  return VoltageGraph(h, names, std::move(edges));
}

}  // namespace fixtures
