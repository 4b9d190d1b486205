#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nilwalk/errors.hpp"
#include "nilwalk/graph.hpp"
#include "nilwalk/harmonic.hpp"
#include "nilwalk/lie.hpp"
#include "nilwalk/verify.hpp"
#include "nilwalk/walk.hpp"

namespace nilwalk {

using Json = nlohmann::ordered_json;

inline constexpr const char* kOutDirEnv = "NILWALK_OUT_DIR";

// Output directory: explicit flag, then the environment, then the working directory.
inline std::string output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return ".";
}

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline const Json& field(const Json& j, const std::string& key, const std::string& ptr) {
  if (!j.is_object()) throw ValidationError(ptr, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(ptr + "/" + key, "missing required field");
  return *it;
}

inline double number(const Json& j, const std::string& ptr) {
  if (!j.is_number()) throw ValidationError(ptr, "expected a number");
  return j.get<double>();
}

inline int integer(const Json& j, const std::string& ptr) {
  if (!j.is_number_integer()) throw ValidationError(ptr, "expected an integer");
  return j.get<int>();
}

inline const Json& array(const Json& j, const std::string& ptr) {
  if (!j.is_array()) throw ValidationError(ptr, "expected an array");
  return j;
}

inline std::string string(const Json& j, const std::string& ptr) {
  if (!j.is_string()) throw ValidationError(ptr, "expected a string");
  return j.get<std::string>();
}

// Element given layer by layer in first-kind coordinates.
inline GroupElement element(const AlgebraPtr& alg, const Json& j, const std::string& ptr) {
  const auto& layers = array(field(j, "layers", ptr), ptr + "/layers");
  if (static_cast<int>(layers.size()) > alg->step())
    throw ValidationError(ptr + "/layers", "more layers than the algebra step");
  std::vector<double> c(alg->dim(), 0.0);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    std::string lp = ptr + "/layers/" + std::to_string(k);
    const auto& layer = array(layers[k], lp);
    int dk = alg->layer_dim(static_cast<int>(k) + 1);
    if (static_cast<int>(layer.size()) != dk)
      throw ValidationError(lp, "layer " + std::to_string(k + 1) + " needs " + std::to_string(dk) + " entries");
    for (int i = 0; i < dk; ++i)
      c[alg->layer_begin(static_cast<int>(k) + 1) + i] = number(layer[i], lp + "/" + std::to_string(i));
  }
  return GroupElement(alg, std::move(c));
}

inline Json element_json(const GroupElement& g) {
  const auto& alg = *g.algebra();
  Json layers = Json::array();
  for (int k = 1; k <= alg.step(); ++k) {
    Json layer = Json::array();
    for (int i = alg.layer_begin(k); i < alg.layer_end(k); ++i) layer.push_back(g[i]);
    layers.push_back(layer);
  }
  return Json{{"layers", layers}};
}

inline int lookup(const Json& j, const std::map<std::string, int>& names, int count, const std::string& what,
                  const std::string& ptr) {
  if (j.is_string()) {
    auto it = names.find(j.get<std::string>());
    if (it == names.end()) throw ValidationError(ptr, "unknown " + what + " '" + j.get<std::string>() + "'");
    return it->second;
  }
  int i = integer(j, ptr);
  if (i < 0 || i >= count) throw ValidationError(ptr, what + " index out of range");
  return i;
}

}  // namespace detail

// ---- algebra ----
// Brackets are [[i,k],[j,l],[[m,layer,coef],...]] with 1-based indices within
// each layer: [X_i^(k), X_j^(l)] = Σ coef X_m^(layer).

inline AlgebraPtr algebra_from_json(const Json& j, const std::string& ptr = "/algebra") {
  int step = detail::integer(detail::field(j, "step", ptr), ptr + "/step");
  const auto& dims_j = detail::array(detail::field(j, "layer_dims", ptr), ptr + "/layer_dims");
  std::vector<int> dims;
  for (std::size_t k = 0; k < dims_j.size(); ++k)
    dims.push_back(detail::integer(dims_j[k], ptr + "/layer_dims/" + std::to_string(k)));
  if (static_cast<int>(dims.size()) != step)
    throw AlgebraError(ptr + "/layer_dims", "expected " + std::to_string(step) + " layer dimensions");
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (dims[k] < 1) throw AlgebraError(ptr + "/layer_dims/" + std::to_string(k), "layer dimension must be positive");
  std::vector<int> begin = {0};
  for (int d : dims) begin.push_back(begin.back() + d);
  auto index = [&](const Json& pair, const std::string& p) {
    const auto& a = detail::array(pair, p);
    if (a.size() != 2) throw AlgebraError(p, "expected [index, layer]");
    int i = detail::integer(a[0], p + "/0"), k = detail::integer(a[1], p + "/1");
    if (k < 1 || k > step) throw AlgebraError(p + "/1", "layer out of range");
    if (i < 1 || i > dims[k - 1]) throw AlgebraError(p + "/0", "index out of range for layer " + std::to_string(k));
    return begin[k - 1] + i - 1;
  };
  std::vector<BracketRule> rules;
  if (j.contains("brackets")) {
    const auto& br = detail::array(j["brackets"], ptr + "/brackets");
    for (std::size_t r = 0; r < br.size(); ++r) {
      std::string p = ptr + "/brackets/" + std::to_string(r);
      const auto& t = detail::array(br[r], p);
      if (t.size() != 3) throw AlgebraError(p, "expected [[i,k],[j,l],[[m,layer,coef],...]]");
      BracketRule rule{index(t[0], p + "/0"), index(t[1], p + "/1"), {}};
      const auto& terms = detail::array(t[2], p + "/2");
      for (std::size_t q = 0; q < terms.size(); ++q) {
        std::string tp = p + "/2/" + std::to_string(q);
        const auto& term = detail::array(terms[q], tp);
        if (term.size() != 3) throw AlgebraError(tp, "expected [m, layer, coef]");
        Json pair = Json::array({term[0], term[1]});
        rule.terms.emplace_back(index(pair, tp), detail::number(term[2], tp + "/2"));
      }
      rules.push_back(std::move(rule));
    }
  }
  try {
    return make_algebra(dims, rules);
  } catch (const AlgebraError& e) {
    // Constructor pointers are relative to /algebra.
    std::string p = e.pointer();
    if (p.rfind("/algebra", 0) == 0) p = ptr + p.substr(8);
    throw AlgebraError(p, std::string(e.what()).substr(e.pointer().empty() ? 0 : e.pointer().size() + 2));
  }
}

inline Json algebra_to_json(const GradedLieAlgebra& alg) {
  auto locate = [&](int idx) {
    int k = alg.layer_of(idx);
    return std::pair<int, int>{idx - alg.layer_begin(k) + 1, k};
  };
  std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> rules;
  for (const auto& s : alg.constants(false))
    if (s.a < s.b) rules[{s.a, s.b}].emplace_back(s.c, s.coef);
  Json br = Json::array();
  for (const auto& [ab, terms] : rules) {
    auto [i, k] = locate(ab.first);
    auto [jj, l] = locate(ab.second);
    Json tj = Json::array();
    for (auto [c, coef] : terms) {
      auto [m, layer] = locate(c);
      tj.push_back(Json::array({m, layer, coef}));
    }
    br.push_back(Json::array({Json::array({i, k}), Json::array({jj, l}), tj}));
  }
  Json dims = Json::array();
  for (int k = 1; k <= alg.step(); ++k) dims.push_back(alg.layer_dim(k));
  return Json{{"step", alg.step()}, {"layer_dims", dims}, {"brackets", br}};
}

// ---- graph spec ----

struct GraphSpec {
  VoltageGraph graph;
  std::optional<std::vector<GroupElement>> offsets;  // full vertex offsets (non-harmonic realization)
  std::optional<std::vector<GroupElement>> kappa;    // higher-layer translations of the harmonic offsets
};

inline GraphSpec graph_spec_from_json(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("", "spec must be a JSON object");
  auto alg = algebra_from_json(detail::field(doc, "algebra", ""), "/algebra");
  const auto& gj = detail::field(doc, "graph", "");
  const auto& vj = detail::array(detail::field(gj, "vertices", "/graph"), "/graph/vertices");
  std::vector<std::string> names;
  std::map<std::string, int> vindex;
  for (std::size_t v = 0; v < vj.size(); ++v) {
    std::string p = "/graph/vertices/" + std::to_string(v);
    names.push_back(detail::string(vj[v], p));
    if (!vindex.emplace(names.back(), static_cast<int>(v)).second) throw ValidationError(p, "duplicate vertex name");
  }
  const auto& ej = detail::array(detail::field(gj, "edges", "/graph"), "/graph/edges");
  std::map<std::string, int> eindex;
  for (std::size_t e = 0; e < ej.size(); ++e) {
    std::string p = "/graph/edges/" + std::to_string(e);
    auto id = detail::string(detail::field(ej[e], "id", p), p + "/id");
    if (!eindex.emplace(id, static_cast<int>(e)).second) throw ValidationError(p + "/id", "duplicate edge id");
  }
  const int nv = static_cast<int>(names.size()), ne = static_cast<int>(ej.size());
  std::vector<Edge> edges;
  for (int e = 0; e < ne; ++e) {
    std::string p = "/graph/edges/" + std::to_string(e);
    const auto& x = ej[e];
    Edge ed;
    ed.id = x["id"].get<std::string>();
    ed.origin = detail::lookup(detail::field(x, "origin", p), vindex, nv, "vertex", p + "/origin");
    ed.terminus = detail::lookup(detail::field(x, "terminus", p), vindex, nv, "vertex", p + "/terminus");
    ed.inverse = detail::lookup(detail::field(x, "inverse", p), eindex, ne, "edge", p + "/inverse");
    ed.voltage = detail::element(alg, detail::field(x, "voltage", p), p + "/voltage");
    ed.p = detail::number(detail::field(x, "p", p), p + "/p");
    edges.push_back(std::move(ed));
  }
  int base = 0;
  if (gj.contains("base")) base = detail::lookup(gj["base"], vindex, nv, "vertex", "/graph/base");
  GraphSpec spec{VoltageGraph(alg, names, std::move(edges), base), std::nullopt, std::nullopt};
  if (doc.contains("realization_overrides")) {
    const auto& ro = doc["realization_overrides"];
    const std::string rp = "/realization_overrides";
    if (!ro.is_object()) throw ValidationError(rp, "expected an object");
    auto per_vertex = [&](const Json& j, const std::string& p, bool higher_only) {
      if (!j.is_object()) throw ValidationError(p, "expected an object keyed by vertex name");
      std::vector<GroupElement> out(nv, GroupElement::identity(alg));
      for (auto it = j.begin(); it != j.end(); ++it) {
        std::string vp = p + "/" + it.key();
        auto v = vindex.find(it.key());
        if (v == vindex.end()) throw ValidationError(vp, "unknown vertex");
        out[v->second] = detail::element(alg, it.value(), vp);
        if (higher_only)
          for (int i = 0; i < alg->layer_dim(1); ++i)
            if (out[v->second][i] != 0.0) throw ValidationError(vp, "kappa parameters live in layers 2 and above");
      }
      return out;
    };
    if (ro.contains("offsets")) spec.offsets = per_vertex(ro["offsets"], rp + "/offsets", false);
    if (ro.contains("kappa")) spec.kappa = per_vertex(ro["kappa"], rp + "/kappa", true);
  }
  return spec;
}

inline Json parse_json(const std::string& text, const std::string& source = "") {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("", (source.empty() ? "" : source + ": ") + "invalid JSON (" + e.what() + ")");
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path);
}

inline Json graph_to_json(const VoltageGraph& g, const std::optional<std::vector<GroupElement>>& offsets = std::nullopt,
                          const std::optional<std::vector<GroupElement>>& kappa = std::nullopt) {
  Json vs = Json::array();
  for (const auto& v : g.vertices()) vs.push_back(v);
  Json es = Json::array();
  for (const auto& e : g.edges())
    es.push_back(Json{{"id", e.id},
                      {"origin", g.vertices()[e.origin]},
                      {"terminus", g.vertices()[e.terminus]},
                      {"inverse", g.edge(e.inverse).id},
                      {"voltage", detail::element_json(e.voltage)},
                      {"p", e.p}});
  Json doc{{"algebra", algebra_to_json(*g.algebra())},
           {"graph", Json{{"vertices", vs}, {"base", g.vertices()[g.base_vertex()]}, {"edges", es}}}};
  auto per_vertex = [&](const std::vector<GroupElement>& els) {
    Json o = Json::object();
    for (int v = 0; v < g.vertex_count(); ++v) o[g.vertices()[v]] = detail::element_json(els[v]);
    return o;
  };
  if (offsets || kappa) {
    Json ro = Json::object();
    if (offsets) ro["offsets"] = per_vertex(*offsets);
    if (kappa) ro["kappa"] = per_vertex(*kappa);
    doc["realization_overrides"] = ro;
  }
  return doc;
}

inline Json graph_to_json(const GraphSpec& s) { return graph_to_json(s.graph, s.offsets, s.kappa); }

// Realization requested by a spec: explicit offsets, else Φ0 with optional kappa translations.
inline Realization realization_for(const GraphSpec& s, const WalkGeometry& geo) {
  if (s.offsets) return make_realization(s.graph, *s.offsets);
  if (s.kappa) {
    auto phi = translate_offsets(s.graph, geo.phi0, *s.kappa);
    phi.is_modified_harmonic = true;
    phi.residual = harmonicity_residual(s.graph, phi, geo.gamma.rho);
    return phi;
  }
  return geo.phi0;
}

// ---- matrices and reports ----

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json albanese_json(const VoltageGraph& g, const WalkGeometry& w) {
  Json out{{"measure", w.measure.m},
           {"rho", vector_json(w.gamma.rho)},
           {"gram", matrix_json(w.alb.gram)},
           {"metric", matrix_json(w.alb.metric)},
           {"frame", matrix_json(w.alb.frame)},
           {"volume", w.alb.volume},
           {"beta", vector_json(w.beta.beta)}};
  if (w.beta.beta_bar) out["beta_bar"] = matrix_json(*w.beta.beta_bar);
  (void)g;
  return out;
}

inline Json check_json(const Check& c) {
  return Json{{"criterion", c.id}, {"name", c.name},   {"t", c.t},   {"estimate", c.estimate},
              {"target", c.target}, {"se", c.se},      {"ci", Json::array({c.lo, c.hi})}, {"pass", c.pass}};
}

inline Json report_json(const Report& r, const Json& config = Json::object()) {
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back(check_json(c));
  return Json{{"report", r.name}, {"config", config}, {"pass", r.pass()}, {"checks", checks}};
}

// ---- CSV trajectories ----
// Columns: path, t, then first-kind coordinates layer by layer (x<k>_<i>, 1-based).

inline void write_trajectories_csv(std::ostream& os, const PathEnsemble& ens, std::int64_t max_paths = -1) {
  const auto& alg = *ens.algebra;
  os << "path,t";
  for (int k = 1; k <= alg.step(); ++k)
    for (int i = 1; i <= alg.layer_dim(k); ++i) os << ",x" << k << "_" << i;
  if (!ens.vertices.empty()) os << ",vertex";
  os << "\n";
  std::int64_t paths = max_paths < 0 ? ens.paths : std::min<std::int64_t>(max_paths, ens.paths);
  for (std::int64_t p = 0; p < paths; ++p)
    for (int k = 0; k < ens.time_count(); ++k) {
      os << p << "," << fmt17(ens.times[k]);
      for (double x : ens.at(p, k)) os << "," << fmt17(x);
      if (!ens.vertices.empty()) os << "," << ens.vertices[static_cast<std::size_t>(p) * ens.time_count() + k];
      os << "\n";
    }
}

}  // namespace nilwalk
