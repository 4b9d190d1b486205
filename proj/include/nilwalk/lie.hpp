#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/errors.hpp"

namespace nilwalk {

inline constexpr int kMaxDim = 64;
inline constexpr int kMaxStep = 5;

// [X_a, X_b] has coefficient `coef` on X_c (global basis indices).
struct StructureConstant {
  int a;
  int b;
  int c;
  double coef;
};

// Expansion of one basis bracket, as supplied by a spec.
struct BracketRule {
  int a;
  int b;
  std::vector<std::pair<int, double>> terms;
};

namespace detail {

struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  void add(std::int64_t n, std::int64_t d) {
    std::int64_t nn = num * d + n * den;
    std::int64_t dd = den * d;
    std::int64_t g = std::gcd(nn < 0 ? -nn : nn, dd);
    if (g == 0) g = 1;
    num = nn / g;
    den = dd / g;
  }
};

inline std::int64_t factorial(int k) {
  std::int64_t f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// Dynkin coefficient of the right-nested bracket of a word in {X, Y}.
// Bit i of `word` is letter i counted from the left (0 = X, 1 = Y).
inline Fraction dynkin_coefficient(unsigned word, int m) {
  Fraction total;
  // Depth-first over splittings into blocks X^a Y^b.
  auto rec = [&](auto&& self, int p, int blocks, std::int64_t denom) -> void {
    if (p == m) {
      std::int64_t d = denom * blocks * m;
      total.add(blocks % 2 == 1 ? 1 : -1, d);
      return;
    }
    int a = 0;
    int b = 0;
    for (int q = p; q < m; ++q) {
      unsigned letter = (word >> q) & 1u;
      if (letter == 0) {
        if (b > 0) break;
        ++a;
      } else {
        ++b;
      }
      self(self, q + 1, blocks + 1, denom * factorial(a) * factorial(b));
    }
  };
  rec(rec, 0, 0, 1);
  return total;
}

struct DynkinTable {
  // coef[m][word], m = word length in 1..kMaxStep.
  std::array<std::vector<double>, kMaxStep + 1> coef;

  DynkinTable() {
    for (int m = 1; m <= kMaxStep; ++m) {
      coef[m].resize(std::size_t{1} << m);
      for (unsigned w = 0; w < (1u << m); ++w) {
        Fraction f = dynkin_coefficient(w, m);
        coef[m][w] = static_cast<double>(f.num) / static_cast<double>(f.den);
      }
    }
  }
};

inline const DynkinTable& dynkin_table() {
  static const DynkinTable table;
  return table;
}

}  // namespace detail

class GradedLieAlgebra {
 public:
  GradedLieAlgebra(std::vector<int> layer_dims, const std::vector<BracketRule>& rules)
      : layer_dims_(std::move(layer_dims)) {
    if (layer_dims_.empty()) throw AlgebraError("/algebra/layer_dims", "step must be at least 1");
    if (static_cast<int>(layer_dims_.size()) > kMaxStep)
      throw AlgebraError("/algebra/step", "step above " + std::to_string(kMaxStep) + " is not supported");
    for (int d : layer_dims_)
      if (d < 1) throw AlgebraError("/algebra/layer_dims", "every layer needs positive dimension");
    begin_.push_back(0);
    for (int d : layer_dims_) begin_.push_back(begin_.back() + d);
    dim_ = begin_.back();
    if (dim_ > kMaxDim) throw AlgebraError("/algebra/layer_dims", "total dimension above 64");
    for (int k = 0; k < step(); ++k)
      for (int i = 0; i < layer_dims_[k]; ++i) layer_of_.push_back(k + 1);

    std::vector<double> table(static_cast<std::size_t>(dim_) * dim_ * dim_, 0.0);
    std::vector<char> given(static_cast<std::size_t>(dim_) * dim_, 0);
    auto at = [&](int a, int b, int c) -> double& {
      return table[(static_cast<std::size_t>(a) * dim_ + b) * dim_ + c];
    };
    for (std::size_t r = 0; r < rules.size(); ++r) {
      const auto& rule = rules[r];
      std::string where = "/algebra/brackets/" + std::to_string(r);
      if (rule.a < 0 || rule.a >= dim_ || rule.b < 0 || rule.b >= dim_)
        throw AlgebraError(where, "basis index out of range");
      if (given[rule.a * dim_ + rule.b]) throw AlgebraError(where, "duplicate bracket entry");
      given[rule.a * dim_ + rule.b] = 1;
      for (auto [c, coef] : rule.terms) {
        if (c < 0 || c >= dim_) throw AlgebraError(where, "target index out of range");
        if (coef == 0.0) continue;
        int lo = layer_of_[rule.a] + layer_of_[rule.b];
        if (layer_of_[c] < lo)
          throw AlgebraError(where, "bracket lands below layer k+l (not a filtration)");
        at(rule.a, rule.b, c) += coef;
      }
    }
    // Fill antisymmetric partners and check consistency where both were given.
    for (int a = 0; a < dim_; ++a) {
      for (int c = 0; c < dim_; ++c)
        if (std::abs(at(a, a, c)) > 0) throw AlgebraError("/algebra/brackets", "[X,X] must vanish");
      for (int b = a + 1; b < dim_; ++b) {
        bool ab = given[a * dim_ + b];
        bool ba = given[b * dim_ + a];
        for (int c = 0; c < dim_; ++c) {
          if (ab && ba) {
            if (std::abs(at(a, b, c) + at(b, a, c)) > 1e-12)
              throw AlgebraError("/algebra/brackets", "antisymmetry violated for pair (" +
                                                          std::to_string(a) + "," + std::to_string(b) + ")");
          } else if (ba) {
            at(a, b, c) = -at(b, a, c);
          } else {
            at(b, a, c) = -at(a, b, c);
          }
        }
      }
    }
    for (int a = 0; a < dim_; ++a)
      for (int b = 0; b < dim_; ++b)
        for (int c = 0; c < dim_; ++c) {
          double v = at(a, b, c);
          if (v == 0.0) continue;
          if (layer_of_[a] + layer_of_[b] > step())
            throw AlgebraError("/algebra/brackets", "nonzero bracket beyond the step");
          full_.push_back({a, b, c, v});
          if (layer_of_[c] == layer_of_[a] + layer_of_[b]) graded_.push_back({a, b, c, v});
        }
    check_jacobi();
  }

  int step() const { return static_cast<int>(layer_dims_.size()); }
  int dim() const { return dim_; }
  const std::vector<int>& layer_dims() const { return layer_dims_; }
  int layer_dim(int k) const { return layer_dims_.at(k - 1); }
  // Global index range of layer k (1-based) is [layer_begin(k), layer_end(k)).
  int layer_begin(int k) const { return begin_.at(k - 1); }
  int layer_end(int k) const { return begin_.at(k); }
  int layer_of(int a) const { return layer_of_.at(a); }

  std::span<const StructureConstant> constants(bool graded) const { return graded ? graded_ : full_; }

  bool same_as(const GradedLieAlgebra& o) const {
    if (this == &o) return true;
    if (layer_dims_ != o.layer_dims_ || full_.size() != o.full_.size()) return false;
    for (std::size_t i = 0; i < full_.size(); ++i) {
      const auto& p = full_[i];
      const auto& q = o.full_[i];
      if (p.a != q.a || p.b != q.b || p.c != q.c || p.coef != q.coef) return false;
    }
    return true;
  }

  void bracket(const double* x, const double* y, double* out, bool graded) const {
    std::fill(out, out + dim_, 0.0);
    for (const auto& s : constants(graded)) out[s.c] += s.coef * x[s.a] * y[s.b];
  }

  std::vector<double> bracket(std::span<const double> x, std::span<const double> y, bool graded) const {
    std::vector<double> out(dim_);
    bracket(x.data(), y.data(), out.data(), graded);
    return out;
  }

  // log(exp(a) exp(b)) by the Dynkin series truncated at depth `step()`.
  // `out` may alias either input.
  void cbh(const double* a_in, const double* b_in, double* out, bool graded) const {
    std::array<std::array<double, kMaxDim>, kMaxStep + 1> buf;
    std::array<double, kMaxDim> a_copy;
    std::array<double, kMaxDim> b_copy;
    std::copy(a_in, a_in + dim_, a_copy.begin());
    std::copy(b_in, b_in + dim_, b_copy.begin());
    const double* a = a_copy.data();
    const double* b = b_copy.data();
    for (int i = 0; i < dim_; ++i) out[i] = a[i] + b[i];
    if (step() < 2) return;
    if (step() == 2) {
      for (const auto& s : constants(graded)) out[s.c] += 0.5 * s.coef * a[s.a] * b[s.b];
      return;
    }
    const auto& table = detail::dynkin_table();
    const double* letters[2] = {a, b};
    auto rec = [&](auto&& self, const double* v, unsigned word, int len) -> void {
      for (unsigned first = 0; first < 2; ++first) {
        if (len == 1 && first == (word & 1u)) continue;
        double* w = buf[len].data();
        bracket(letters[first], v, w, graded);
        bool any = false;
        for (int i = 0; i < dim_; ++i)
          if (w[i] != 0.0) {
            any = true;
            break;
          }
        if (!any) continue;
        unsigned next = (word << 1) | first;
        double c = table.coef[len + 1][next];
        if (c != 0.0)
          for (int i = 0; i < dim_; ++i) out[i] += c * w[i];
        if (len + 1 < step()) self(self, w, next, len + 1);
      }
    };
    rec(rec, a, 0u, 1);
    rec(rec, b, 1u, 1);
  }

 private:
  void check_jacobi() const {
    std::vector<double> ei(dim_), ej(dim_), ek(dim_), t(dim_), u(dim_), acc(dim_);
    double scale = 1.0;
    for (const auto& s : full_) scale = std::max(scale, s.coef * s.coef);
    for (int i = 0; i < dim_; ++i)
      for (int j = i + 1; j < dim_; ++j)
        for (int k = j + 1; k < dim_; ++k) {
          std::fill(acc.begin(), acc.end(), 0.0);
          const int idx[3] = {i, j, k};
          for (int r = 0; r < 3; ++r) {
            std::fill(ei.begin(), ei.end(), 0.0);
            std::fill(ej.begin(), ej.end(), 0.0);
            std::fill(ek.begin(), ek.end(), 0.0);
            ei[idx[r]] = 1;
            ej[idx[(r + 1) % 3]] = 1;
            ek[idx[(r + 2) % 3]] = 1;
            bracket(ej.data(), ek.data(), t.data(), false);
            bracket(ei.data(), t.data(), u.data(), false);
            for (int c = 0; c < dim_; ++c) acc[c] += u[c];
          }
          for (int c = 0; c < dim_; ++c)
            if (std::abs(acc[c]) > 1e-12 * scale)
              throw AlgebraError("/algebra/brackets", "Jacobi identity fails on basis triple (" +
                                                          std::to_string(i) + "," + std::to_string(j) + "," +
                                                          std::to_string(k) + ")");
        }
  }

  std::vector<int> layer_dims_;
  std::vector<int> begin_;
  std::vector<int> layer_of_;
  int dim_ = 0;
  std::vector<StructureConstant> full_;
  std::vector<StructureConstant> graded_;
};

using AlgebraPtr = std::shared_ptr<const GradedLieAlgebra>;

inline AlgebraPtr make_algebra(std::vector<int> layer_dims, const std::vector<BracketRule>& rules) {
  return std::make_shared<const GradedLieAlgebra>(std::move(layer_dims), rules);
}

inline void require_same(const GradedLieAlgebra& x, const GradedLieAlgebra& y) {
  if (!x.same_as(y)) throw StructuralError("elements live in different Lie algebras");
}

// A point of G in first-kind coordinates, so exp and log are the identity on coords.
class GroupElement {
 public:
  GroupElement() = default;
  GroupElement(AlgebraPtr algebra, std::vector<double> coords)
      : algebra_(std::move(algebra)), coords_(std::move(coords)) {
    if (!algebra_) throw StructuralError("group element without algebra");
    if (static_cast<int>(coords_.size()) != algebra_->dim())
      throw StructuralError("coordinate vector has wrong length");
  }

  static GroupElement identity(AlgebraPtr algebra) {
    int n = algebra->dim();
    return GroupElement(std::move(algebra), std::vector<double>(n, 0.0));
  }

  static GroupElement from_layers(AlgebraPtr algebra, const std::vector<std::vector<double>>& layers) {
    if (static_cast<int>(layers.size()) != algebra->step()) throw StructuralError("wrong number of layers");
    std::vector<double> c;
    for (int k = 1; k <= algebra->step(); ++k) {
      if (static_cast<int>(layers[k - 1].size()) != algebra->layer_dim(k))
        throw StructuralError("layer " + std::to_string(k) + " has wrong length");
      c.insert(c.end(), layers[k - 1].begin(), layers[k - 1].end());
    }
    return GroupElement(std::move(algebra), std::move(c));
  }

  const AlgebraPtr& algebra() const { return algebra_; }
  std::span<const double> coords() const { return coords_; }
  std::vector<double>& mutable_coords() { return coords_; }
  double operator[](int i) const { return coords_[i]; }
  int dim() const { return static_cast<int>(coords_.size()); }

  std::span<const double> layer(int k) const {
    return std::span<const double>(coords_).subspan(algebra_->layer_begin(k), algebra_->layer_dim(k));
  }

  std::vector<std::vector<double>> layers() const {
    std::vector<std::vector<double>> out;
    for (int k = 1; k <= algebra_->step(); ++k) out.emplace_back(layer(k).begin(), layer(k).end());
    return out;
  }

  Eigen::VectorXd to_eigen() const { return Eigen::Map<const Eigen::VectorXd>(coords_.data(), dim()); }

 private:
  AlgebraPtr algebra_;
  std::vector<double> coords_;
};

struct HomogeneousNorm {
  double value = 0.0;
};

inline GroupElement exp_element(const AlgebraPtr& algebra, std::span<const double> z) {
  return GroupElement(algebra, std::vector<double>(z.begin(), z.end()));
}

inline std::vector<double> log_element(const GroupElement& g) {
  return std::vector<double>(g.coords().begin(), g.coords().end());
}

inline GroupElement cbh_product(const GroupElement& a, const GroupElement& b, bool graded) {
  require_same(*a.algebra(), *b.algebra());
  std::vector<double> out(a.dim());
  a.algebra()->cbh(a.coords().data(), b.coords().data(), out.data(), graded);
  return GroupElement(a.algebra(), std::move(out));
}

inline GroupElement inverse(const GroupElement& a) {
  std::vector<double> out(a.coords().begin(), a.coords().end());
  for (double& x : out) x = -x;
  return GroupElement(a.algebra(), std::move(out));
}

inline void dilate_coords(const GradedLieAlgebra& alg, double* x, double eps) {
  double f = 1.0;
  for (int k = 1; k <= alg.step(); ++k) {
    f *= eps;
    for (int i = alg.layer_begin(k); i < alg.layer_end(k); ++i) x[i] *= f;
  }
}

inline GroupElement dilate(const GroupElement& a, double eps) {
  if (!(eps >= 0.0)) throw DomainError("dilation factor must be nonnegative");
  std::vector<double> out(a.coords().begin(), a.coords().end());
  dilate_coords(*a.algebra(), out.data(), eps);
  return GroupElement(a.algebra(), std::move(out));
}

// Sum over layers of |layer k|^(1/k). `metrics[k-1]`, when present and
// nonempty, replaces the Euclidean inner product on layer k.
inline double hom_norm_coords(const GradedLieAlgebra& alg, const double* x,
                              std::span<const Eigen::MatrixXd> metrics = {}) {
  double total = 0.0;
  for (int k = 1; k <= alg.step(); ++k) {
    int b = alg.layer_begin(k);
    int d = alg.layer_dim(k);
    double sq = 0.0;
    if (static_cast<int>(metrics.size()) >= k && metrics[k - 1].size() > 0) {
      Eigen::Map<const Eigen::VectorXd> v(x + b, d);
      sq = v.dot(metrics[k - 1] * v);
    } else {
      for (int i = 0; i < d; ++i) sq += x[b + i] * x[b + i];
    }
    double len = std::sqrt(std::max(sq, 0.0));
    total += k == 1 ? len : k == 2 ? std::sqrt(len) : std::pow(len, 1.0 / k);
  }
  return total;
}

inline HomogeneousNorm hom_norm(const GroupElement& a, std::span<const Eigen::MatrixXd> metrics = {}) {
  return {hom_norm_coords(*a.algebra(), a.coords().data(), metrics)};
}

inline double quasi_distance_coords(const GradedLieAlgebra& alg, const double* a, const double* b,
                                    std::span<const Eigen::MatrixXd> metrics = {}) {
  std::array<double, kMaxDim> neg;
  std::array<double, kMaxDim> prod;
  for (int i = 0; i < alg.dim(); ++i) neg[i] = -a[i];
  alg.cbh(neg.data(), b, prod.data(), true);
  return hom_norm_coords(alg, prod.data(), metrics);
}

inline double quasi_distance(const GroupElement& a, const GroupElement& b,
                             std::span<const Eigen::MatrixXd> metrics = {}) {
  require_same(*a.algebra(), *b.algebra());
  return quasi_distance_coords(*a.algebra(), a.coords().data(), b.coords().data(), metrics);
}

// g = exp(c_N X_N) ... exp(c_1 X_1) under the original product.
inline GroupElement from_second_kind(const AlgebraPtr& algebra, std::span<const double> c) {
  int n = algebra->dim();
  if (static_cast<int>(c.size()) != n) throw StructuralError("coordinate vector has wrong length");
  std::vector<double> g(n, 0.0), f(n), t(n);
  for (int a = n - 1; a >= 0; --a) {
    std::fill(f.begin(), f.end(), 0.0);
    f[a] = c[a];
    algebra->cbh(g.data(), f.data(), t.data(), false);
    g.swap(t);
  }
  return GroupElement(algebra, std::move(g));
}

inline std::vector<double> to_second_kind(const GroupElement& g) {
  const auto& alg = *g.algebra();
  int n = alg.dim();
  std::vector<double> c(n, 0.0), p(g.coords().begin(), g.coords().end()), f(n), t(n);
  // Peel the factors of each layer off the right-hand end.
  for (int k = 1; k <= alg.step(); ++k) {
    for (int a = alg.layer_begin(k); a < alg.layer_end(k); ++a) c[a] = p[a];
    for (int a = alg.layer_begin(k); a < alg.layer_end(k); ++a) {
      std::fill(f.begin(), f.end(), 0.0);
      f[a] = -c[a];
      alg.cbh(p.data(), f.data(), t.data(), false);
      p.swap(t);
    }
  }
  return c;
}

// ---- standard algebras ----

inline AlgebraPtr heisenberg_algebra() { return make_algebra({2, 1}, {{0, 1, {{2, 1.0}}}}); }

// Free step-2 nilpotent algebra on d generators; layer 2 is [e_i, e_j] for i < j.
inline AlgebraPtr free_step2_algebra(int d) {
  std::vector<BracketRule> rules;
  int c = d;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) rules.push_back({i, j, {{c++, 1.0}}});
  return make_algebra({d, d * (d - 1) / 2}, rules);
}

// Free nilpotent algebra of step r <= 3 on d generators in a Hall basis:
// layer 2 is [e_i,e_j] (i<j), layer 3 is [e_m,[e_i,e_j]] with m >= i.
inline AlgebraPtr free_nilpotent_algebra(int d, int r) {
  if (r < 1 || r > 3) throw UnsupportedError("free_nilpotent_algebra supports step 1..3");
  if (r == 1) return make_algebra({d}, {});
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) pairs.emplace_back(i, j);
  auto pair_index = [&](int i, int j) {
    return d + static_cast<int>(std::find(pairs.begin(), pairs.end(), std::make_pair(i, j)) - pairs.begin());
  };
  std::vector<BracketRule> rules;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) rules.push_back({i, j, {{pair_index(i, j), 1.0}}});
  if (r == 2) return make_algebra({d, static_cast<int>(pairs.size())}, rules);

  int base3 = d + static_cast<int>(pairs.size());
  std::vector<std::tuple<int, int, int>> triples;
  for (auto [i, j] : pairs)
    for (int m = i; m < d; ++m) triples.emplace_back(m, i, j);
  auto triple_index = [&](int m, int i, int j) {
    return base3 + static_cast<int>(std::find(triples.begin(), triples.end(), std::make_tuple(m, i, j)) -
                                    triples.begin());
  };
  // [e_m, [e_i, e_j]] for every m and i<j, reduced to the Hall basis.
  for (auto [i, j] : pairs) {
    int p = pair_index(i, j);
    for (int m = 0; m < d; ++m) {
      std::vector<std::pair<int, double>> terms;
      if (m >= i) {
        terms.push_back({triple_index(m, i, j), 1.0});
      } else {
        // m < i < j: [e_m,[e_i,e_j]] = [e_i,[e_m,e_j]] - [e_j,[e_m,e_i]]
        terms.push_back({triple_index(i, m, j), 1.0});
        terms.push_back({triple_index(j, m, i), -1.0});
      }
      rules.push_back({m, p, terms});
    }
  }
  return make_algebra({d, static_cast<int>(pairs.size()), static_cast<int>(triples.size())}, rules);
}

// Strictly upper-triangular n x n matrices, graded by superdiagonal; step n-1.
// Basis order: layer k holds E_{i,i+k} for i = 0..n-k-1.
inline AlgebraPtr upper_triangular_algebra(int n) {
  if (n < 2) throw DomainError("upper_triangular_algebra needs n >= 2");
  std::vector<std::pair<int, int>> basis;
  std::vector<int> dims;
  for (int k = 1; k < n; ++k) {
    dims.push_back(n - k);
    for (int i = 0; i + k < n; ++i) basis.emplace_back(i, i + k);
  }
  auto index_of = [&](int i, int j) {
    return static_cast<int>(std::find(basis.begin(), basis.end(), std::make_pair(i, j)) - basis.begin());
  };
  std::vector<BracketRule> rules;
  int m = static_cast<int>(basis.size());
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      auto [i, j] = basis[a];
      auto [k, l] = basis[b];
      std::vector<std::pair<int, double>> terms;
      if (j == k) terms.push_back({index_of(i, l), 1.0});
      if (l == i) terms.push_back({index_of(k, j), -1.0});
      if (!terms.empty()) rules.push_back({a, b, terms});
    }
  return make_algebra(dims, rules);
}

// Matrix of a first-kind element of upper_triangular_algebra(n).
inline Eigen::MatrixXd upper_triangular_matrix(int n, std::span<const double> coords) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, n);
  int a = 0;
  for (int k = 1; k < n; ++k)
    for (int i = 0; i + k < n; ++i) z(i, i + k) = coords[a++];
  return z;
}

// Algebra spanned by the given matrices, with commutators expanded in that basis.
// Throws if the span is not closed under commutators.
inline AlgebraPtr algebra_from_matrices(std::vector<int> layer_dims, const std::vector<Eigen::MatrixXd>& basis) {
  int m = static_cast<int>(basis.size());
  int rows = static_cast<int>(basis.at(0).size());
  Eigen::MatrixXd a(rows, m);
  for (int i = 0; i < m; ++i) a.col(i) = Eigen::Map<const Eigen::VectorXd>(basis[i].data(), rows);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() != m) throw AlgebraError("", "matrix basis is linearly dependent");
  std::vector<BracketRule> rules;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      Eigen::MatrixXd c = basis[i] * basis[j] - basis[j] * basis[i];
      Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(c.data(), rows);
      Eigen::VectorXd x = qr.solve(v);
      if ((a * x - v).norm() > 1e-10 * (1.0 + v.norm())) throw AlgebraError("", "matrix span not closed");
      std::vector<std::pair<int, double>> terms;
      for (int t = 0; t < m; ++t) {
        double coef = std::abs(x[t]) < 1e-14 ? 0.0 : x[t];
        if (coef != 0.0) terms.push_back({t, coef});
      }
      if (!terms.empty()) rules.push_back({i, j, terms});
    }
  return make_algebra(std::move(layer_dims), rules);
}

}  // namespace nilwalk
