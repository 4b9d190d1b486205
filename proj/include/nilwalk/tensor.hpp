#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/errors.hpp"
#include "nilwalk/random.hpp"

namespace nilwalk {

// Element of the truncated tensor algebra T^(r)(R^d). Level k is a dense
// row-major array of d^k entries indexed by words (i_1, ..., i_k).
struct TensorElement {
  int d = 0;
  int r = 0;
  double scalar = 0.0;
  std::vector<std::vector<double>> levels;  // levels[k-1] has d^k entries

  TensorElement() = default;
  TensorElement(int d_, int r_, double g0 = 0.0) : d(d_), r(r_), scalar(g0) {
    if (d < 1 || r < 1) throw DomainError("tensor dimension and level must be positive");
    std::size_t size = 1;
    for (int k = 1; k <= r; ++k) {
      size *= static_cast<std::size_t>(d);
      levels.emplace_back(size, 0.0);
    }
  }

  static TensorElement unit(int d, int r) { return TensorElement(d, r, 1.0); }

  std::vector<double>& level(int k) { return levels[k - 1]; }
  const std::vector<double>& level(int k) const { return levels[k - 1]; }

  double& at(std::initializer_list<int> word) {
    std::size_t idx = 0;
    for (int i : word) idx = idx * d + i;
    return levels[word.size() - 1][idx];
  }
  double at(std::initializer_list<int> word) const { return const_cast<TensorElement*>(this)->at(word); }
};

inline void require_same_shape(const TensorElement& a, const TensorElement& b) {
  if (a.d != b.d || a.r != b.r) throw StructuralError("tensor shapes differ");
}

inline TensorElement operator+(const TensorElement& a, const TensorElement& b) {
  require_same_shape(a, b);
  TensorElement c = a;
  c.scalar += b.scalar;
  for (int k = 1; k <= a.r; ++k)
    for (std::size_t i = 0; i < c.level(k).size(); ++i) c.level(k)[i] += b.level(k)[i];
  return c;
}

inline TensorElement operator*(double s, const TensorElement& a) {
  TensorElement c = a;
  c.scalar *= s;
  for (auto& lvl : c.levels)
    for (double& x : lvl) x *= s;
  return c;
}

inline TensorElement operator-(const TensorElement& a, const TensorElement& b) { return a + (-1.0) * b; }

inline double max_abs_diff(const TensorElement& a, const TensorElement& b) {
  require_same_shape(a, b);
  double m = std::abs(a.scalar - b.scalar);
  for (int k = 1; k <= a.r; ++k)
    for (std::size_t i = 0; i < a.level(k).size(); ++i) m = std::max(m, std::abs(a.level(k)[i] - b.level(k)[i]));
  return m;
}

inline TensorElement tensor_product(const TensorElement& a, const TensorElement& b) {
  require_same_shape(a, b);
  const int d = a.d;
  TensorElement c(d, a.r, a.scalar * b.scalar);
  for (int k = 1; k <= a.r; ++k) {
    auto& out = c.level(k);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.scalar * b.level(k)[i] + a.level(k)[i] * b.scalar;
    for (int j = 1; j < k; ++j) {
      const auto& x = a.level(j);
      const auto& y = b.level(k - j);
      const std::size_t ny = y.size();
      for (std::size_t p = 0; p < x.size(); ++p) {
        double xp = x[p];
        if (xp == 0.0) continue;
        double* o = out.data() + p * ny;
        for (std::size_t q = 0; q < ny; ++q) o[q] += xp * y[q];
      }
    }
  }
  return c;
}

inline TensorElement tensor_exp(const TensorElement& a) {
  if (a.scalar != 0.0) throw DomainError("tensor_exp needs a zero scalar level");
  TensorElement out = TensorElement::unit(a.d, a.r);
  TensorElement power = TensorElement::unit(a.d, a.r);
  for (int k = 1; k <= a.r; ++k) {
    power = (1.0 / k) * tensor_product(power, a);
    out = out + power;
  }
  return out;
}

inline TensorElement tensor_log(const TensorElement& g) {
  if (g.scalar != 1.0) throw DomainError("tensor_log needs scalar level 1");
  TensorElement x = g;
  x.scalar = 0.0;
  TensorElement out(g.d, g.r);
  TensorElement power = TensorElement::unit(g.d, g.r);
  for (int k = 1; k <= g.r; ++k) {
    power = tensor_product(power, x);
    out = out + ((k % 2 == 1 ? 1.0 : -1.0) / k) * power;
  }
  return out;
}

inline TensorElement tensor_inverse(const TensorElement& g) {
  if (g.scalar != 1.0) throw DomainError("tensor_inverse needs scalar level 1");
  TensorElement x = g;
  x.scalar = 0.0;
  TensorElement out = TensorElement::unit(g.d, g.r);
  TensorElement power = TensorElement::unit(g.d, g.r);
  for (int k = 1; k <= g.r; ++k) {
    power = (-1.0) * tensor_product(power, x);
    out = out + power;
  }
  return out;
}

// In-place Chen update s <- s ⊗ exp(v) for a linear segment with increment v.
// `scratch` holds the powers v^{⊗j}/j! and is reused across calls.
class SegmentAppender {
 public:
  SegmentAppender(int d, int r) : d_(d), r_(r), powers_(r + 1) {
    std::size_t size = 1;
    for (int k = 0; k <= r; ++k) {
      powers_[k].resize(size);
      size *= static_cast<std::size_t>(d);
    }
    powers_[0][0] = 1.0;
  }

  void append(TensorElement& s, const double* v) {
    for (int i = 0; i < d_; ++i) powers_[1][i] = v[i];
    for (int j = 2; j <= r_; ++j) {
      const auto& prev = powers_[j - 1];
      auto& cur = powers_[j];
      double inv = 1.0 / j;
      for (std::size_t p = 0; p < prev.size(); ++p)
        for (int i = 0; i < d_; ++i) cur[p * d_ + i] = prev[p] * v[i] * inv;
    }
    // Highest level first so lower levels are still the old values.
    for (int k = r_; k >= 1; --k) {
      auto& out = s.level(k);
      for (int j = 1; j <= k; ++j) {
        const auto& pw = powers_[j];
        const std::size_t np = pw.size();
        if (j == k) {
          for (std::size_t q = 0; q < np; ++q) out[q] += s.scalar * pw[q];
        } else {
          const auto& x = s.level(k - j);
          for (std::size_t p = 0; p < x.size(); ++p) {
            double xp = x[p];
            double* o = out.data() + p * np;
            for (std::size_t q = 0; q < np; ++q) o[q] += xp * pw[q];
          }
        }
      }
    }
  }

 private:
  int d_;
  int r_;
  std::vector<std::vector<double>> powers_;
};

// Signature of the piecewise-linear path through the rows of `points`.
inline TensorElement signature(const Eigen::MatrixXd& points, int r) {
  if (points.rows() < 2) throw DomainError("signature needs at least one segment");
  int d = static_cast<int>(points.cols());
  TensorElement s = TensorElement::unit(d, r);
  SegmentAppender app(d, r);
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 1; i < points.rows(); ++i) {
    v = (points.row(i) - points.row(i - 1)).transpose();
    app.append(s, v.data());
  }
  return s;
}

// Right-nested bracket [e_{w1},[e_{w2},...,e_{wk}]] of a word, as a level-k tensor.
inline std::vector<double> nested_bracket_word(int d, const std::vector<int>& word) {
  int k = static_cast<int>(word.size());
  std::vector<double> cur(d, 0.0);
  cur[word[k - 1]] = 1.0;
  std::size_t size = d;
  for (int pos = k - 2; pos >= 0; --pos) {
    int i = word[pos];
    std::vector<double> next(size * d, 0.0);
    // e_i ⊗ T - T ⊗ e_i
    for (std::size_t q = 0; q < size; ++q) {
      next[static_cast<std::size_t>(i) * size + q] += cur[q];
      next[q * d + i] -= cur[q];
    }
    cur.swap(next);
    size *= d;
  }
  return cur;
}

// Projection onto Lie elements via the Dynkin map: level k -> D(level k)/k.
inline TensorElement lie_projection(const TensorElement& a) {
  TensorElement out(a.d, a.r);
  for (int k = 1; k <= a.r; ++k) {
    const auto& lvl = a.level(k);
    std::vector<int> word(k);
    for (std::size_t idx = 0; idx < lvl.size(); ++idx) {
      if (lvl[idx] == 0.0) continue;
      std::size_t rem = idx;
      for (int p = k - 1; p >= 0; --p) {
        word[p] = static_cast<int>(rem % a.d);
        rem /= a.d;
      }
      auto b = nested_bracket_word(a.d, word);
      for (std::size_t q = 0; q < b.size(); ++q) out.level(k)[q] += lvl[idx] * b[q] / k;
    }
  }
  return out;
}

inline double lie_residual(const TensorElement& a) { return max_abs_diff(a, lie_projection(a)); }

// Σ_k |level k of log(a^{-1} ⊗ b)|^{1/k}
inline double tensor_hom_distance(const TensorElement& a, const TensorElement& b) {
  TensorElement l = tensor_log(tensor_product(tensor_inverse(a), b));
  double total = 0.0;
  for (int k = 1; k <= l.r; ++k) {
    double sq = 0.0;
    for (double x : l.level(k)) sq += x * x;
    total += std::pow(std::sqrt(sq), 1.0 / k);
  }
  return total;
}

// Lie element x + Σ_{i<j} a_ij [e_i, e_j] in T^(r)(R^d), r >= 2.
inline TensorElement step2_lie_element(const Eigen::VectorXd& x, const Eigen::MatrixXd& area, int r) {
  int d = static_cast<int>(x.size());
  TensorElement t(d, r);
  for (int i = 0; i < d; ++i) t.level(1)[i] = x[i];
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      t.level(2)[i * d + j] += area(i, j);
      t.level(2)[j * d + i] -= area(i, j);
    }
  return t;
}

// Level-2 rough path on a time grid. `x[k]`, `xx[k]` are the level-1 and
// level-2 increments over [t_k, t_{k+1}]; `values[k]` is the running value
// X_{0,t_k} in T^(2), with values[0] the unit.
struct Level2RoughPath {
  int d = 0;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::MatrixXd> xx;
  std::vector<TensorElement> values;
  int substeps = 0;  // sub-mesh used when simulated, 0 otherwise

  std::size_t intervals() const { return x.size(); }

  TensorElement increment(std::size_t k) const {
    TensorElement t(d, 2, 1.0);
    for (int i = 0; i < d; ++i) t.level(1)[i] = x[k][i];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) t.level(2)[i * d + j] = xx[k](i, j);
    return t;
  }

  static Level2RoughPath from_increments(std::vector<double> times, std::vector<Eigen::VectorXd> x,
                                         std::vector<Eigen::MatrixXd> xx) {
    Level2RoughPath rp;
    rp.d = x.empty() ? 0 : static_cast<int>(x[0].size());
    rp.times = std::move(times);
    rp.x = std::move(x);
    rp.xx = std::move(xx);
    if (rp.times.size() != rp.x.size() + 1 || rp.xx.size() != rp.x.size())
      throw StructuralError("rough path grid and increments disagree in length");
    rp.values.push_back(TensorElement::unit(rp.d, 2));
    for (std::size_t k = 0; k < rp.x.size(); ++k) rp.values.push_back(tensor_product(rp.values.back(), rp.increment(k)));
    return rp;
  }

  static Level2RoughPath from_values(std::vector<double> times, std::vector<TensorElement> values) {
    if (values.empty() || times.size() != values.size()) throw StructuralError("rough path grid and values disagree");
    Level2RoughPath rp;
    rp.d = values[0].d;
    rp.times = std::move(times);
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
      TensorElement inc = tensor_product(tensor_inverse(values[k]), values[k + 1]);
      Eigen::VectorXd v(rp.d);
      Eigen::MatrixXd m(rp.d, rp.d);
      for (int i = 0; i < rp.d; ++i) v[i] = inc.level(1)[i];
      for (int i = 0; i < rp.d; ++i)
        for (int j = 0; j < rp.d; ++j) m(i, j) = inc.level(2)[i * rp.d + j];
      rp.x.push_back(v);
      rp.xx.push_back(m);
    }
    rp.values = std::move(values);
    return rp;
  }
};

// Largest violation of Chen's relation values[k] ⊗ inc[k] = values[k+1], of
// values[0] = 1, and of the geometric constraint Sym(xx) = x⊗x/2.
inline double chen_defect(const Level2RoughPath& rp) {
  if (rp.values.size() != rp.x.size() + 1) return INFINITY;
  double defect = max_abs_diff(rp.values[0], TensorElement::unit(rp.d, 2));
  for (std::size_t k = 0; k < rp.intervals(); ++k) {
    defect = std::max(defect, max_abs_diff(tensor_product(rp.values[k], rp.increment(k)), rp.values[k + 1]));
    Eigen::MatrixXd sym = 0.5 * (rp.xx[k] + rp.xx[k].transpose()) - 0.5 * rp.x[k] * rp.x[k].transpose();
    defect = std::max(defect, sym.cwiseAbs().maxCoeff());
  }
  return defect;
}

struct LyonsExtension {
  std::vector<TensorElement> increments;  // one level-r element per grid interval
  std::vector<TensorElement> values;      // running products, values[0] = 1
  int max_refinements = 0;
  double tolerance = 1e-9;
};

// Extends each interval increment to level r by dyadic subdivision with
// log-linear interpolants, refining until two successive levels of
// subdivision agree to `tolerance` in the homogeneous distance.
inline LyonsExtension lyons_extend(const Level2RoughPath& rp, int r, double tolerance = 1e-9,
                                   double chen_tolerance = 1e-10) {
  if (r < 2) throw DomainError("lyons_extend needs r >= 2");
  double defect = chen_defect(rp);
  if (!(defect <= chen_tolerance)) throw DataError("rough path violates Chen's relation by " + std::to_string(defect));
  LyonsExtension ext;
  ext.tolerance = tolerance;
  ext.values.push_back(TensorElement::unit(rp.d, r));
  for (std::size_t k = 0; k < rp.intervals(); ++k) {
    Eigen::MatrixXd anti = 0.5 * (rp.xx[k] - rp.xx[k].transpose());
    TensorElement gen = step2_lie_element(rp.x[k], anti, r);
    TensorElement prev = tensor_exp(gen);
    int j = 1;
    for (; j <= 20; ++j) {
      double pieces = std::ldexp(1.0, j);
      TensorElement piece = tensor_exp((1.0 / pieces) * gen);
      TensorElement cur = piece;
      for (int s = 0; s < j; ++s) cur = tensor_product(cur, cur);
      double gap = tensor_hom_distance(prev, cur);
      prev = cur;
      if (gap < tolerance) break;
    }
    ext.max_refinements = std::max(ext.max_refinements, j);
    // Levels 1 and 2 are the data themselves.
    for (int i = 0; i < rp.d; ++i) prev.level(1)[i] = rp.x[k][i];
    for (int a = 0; a < rp.d; ++a)
      for (int b = 0; b < rp.d; ++b) prev.level(2)[a * rp.d + b] = rp.xx[k](a, b);
    ext.values.push_back(tensor_product(ext.values.back(), prev));
    ext.increments.push_back(std::move(prev));
  }
  return ext;
}

// Brownian rough path with level 2 shifted by Δt·beta_bar on every interval.
// Level-2 Stratonovich integrals come from a piecewise-linear sub-mesh of
// `substeps` pieces per grid interval.
inline Level2RoughPath distorted_bm(int d, const Eigen::MatrixXd& beta_bar, const std::vector<double>& grid,
                                    std::uint64_t seed, std::uint64_t path = 0, int substeps = 64) {
  if (beta_bar.rows() != d || beta_bar.cols() != d) throw StructuralError("beta_bar must be d x d");
  if ((beta_bar + beta_bar.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw DomainError("beta_bar must be antisymmetric");
  if (grid.size() < 2) throw DomainError("grid needs at least two points");
  auto rng = stream_rng(seed, streams::rough_path, path);
  std::normal_distribution<double> normal;
  std::vector<Eigen::VectorXd> xs;
  std::vector<Eigen::MatrixXd> xxs;
  SegmentAppender app(d, 2);
  std::vector<double> v(d);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    double dt = grid[k + 1] - grid[k];
    if (!(dt > 0)) throw DomainError("grid must be strictly increasing");
    double sd = std::sqrt(dt / substeps);
    TensorElement s = TensorElement::unit(d, 2);
    for (int m = 0; m < substeps; ++m) {
      for (int i = 0; i < d; ++i) v[i] = sd * normal(rng);
      app.append(s, v.data());
    }
    Eigen::VectorXd x(d);
    Eigen::MatrixXd xx(d, d);
    for (int i = 0; i < d; ++i) x[i] = s.level(1)[i];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) xx(i, j) = s.level(2)[i * d + j] + dt * beta_bar(i, j);
    xs.push_back(x);
    xxs.push_back(xx);
  }
  auto rp = Level2RoughPath::from_increments(grid, std::move(xs), std::move(xxs));
  rp.substeps = substeps;
  return rp;
}

}  // namespace nilwalk
