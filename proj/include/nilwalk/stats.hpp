#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "nilwalk/errors.hpp"
#include "nilwalk/random.hpp"

namespace nilwalk {

struct Estimate {
  double value = 0.0;
  double se = 0.0;  // standard error of `value`
};

inline Estimate mean_estimate(const Eigen::VectorXd& x) {
  const double n = static_cast<double>(x.size());
  if (n < 2) throw DomainError("need at least two samples");
  double m = x.mean();
  double var = (x.array() - m).square().sum() / (n - 1);
  return {m, std::sqrt(var / n)};
}

// Sample covariance with the delta-method standard error.
inline Estimate covariance_estimate(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(x.size());
  if (n < 2) throw DomainError("need at least two samples");
  Eigen::ArrayXd prod = (x.array() - x.mean()) * (y.array() - y.mean());
  double c = prod.sum() / (n - 1);
  double var = (prod - prod.mean()).square().sum() / (n - 1);
  return {c, std::sqrt(var / n)};
}

struct EnergyTest {
  double statistic = 0.0;
  double p_value = 1.0;
  int permutations = 0;
  int sample_a = 0;
  int sample_b = 0;
};

// Two-sample energy distance with a permutation p-value. Rows are points.
inline EnergyTest energy_test(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int permutations, std::uint64_t seed) {
  if (a.cols() != b.cols()) throw StructuralError("samples have different dimensions");
  const int na = static_cast<int>(a.rows()), nb = static_cast<int>(b.rows()), n = na + nb;
  if (na < 2 || nb < 2) throw DomainError("energy test needs two points per sample");
  Eigen::MatrixXd pooled(n, a.cols());
  pooled << a, b;
  std::vector<float> dist(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      float d = static_cast<float>((pooled.row(i) - pooled.row(j)).norm());
      dist[static_cast<std::size_t>(i) * n + j] = d;
      dist[static_cast<std::size_t>(j) * n + i] = d;
    }
  auto stat = [&](const std::vector<char>& in_a) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* row = dist.data() + static_cast<std::size_t>(i) * n;
      double sa = 0.0, sb = 0.0;
      for (int j = 0; j < n; ++j) (in_a[j] ? sa : sb) += row[j];
      if (in_a[i]) {
        aa += sa;
        ab += sb;
      } else {
        bb += sb;
      }
    }
    return 2.0 * ab / (double(na) * nb) - aa / (double(na) * na) - bb / (double(nb) * nb);
  };
  std::vector<char> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + na, 1);
  EnergyTest out;
  out.statistic = stat(labels) * na * nb / n;
  out.permutations = permutations;
  out.sample_a = na;
  out.sample_b = nb;
  auto rng = stream_rng(seed, streams::permutation, 0);
  int exceed = 0;
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(labels.begin(), labels.end(), rng);
    if (stat(labels) * na * nb / n >= out.statistic) ++exceed;
  }
  out.p_value = (exceed + 1.0) / (permutations + 1.0);
  return out;
}

// First `count` rows in a seeded random order.
inline Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& x, int count, std::uint64_t seed, std::uint64_t index) {
  std::vector<int> idx(x.rows());
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = stream_rng(seed, streams::subsample, index);
  std::shuffle(idx.begin(), idx.end(), rng);
  count = std::min<int>(count, static_cast<int>(x.rows()));
  Eigen::MatrixXd out(count, x.cols());
  for (int i = 0; i < count; ++i) out.row(i) = x.row(idx[i]);
  return out;
}

}  // namespace nilwalk
