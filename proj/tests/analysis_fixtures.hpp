#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "recall/analysis/geometry.hpp"
#include "recall/core/rng.hpp"

namespace recall::testing {

inline Tensor<double> gaussian_rows(Rng& rng, std::size_t L, std::size_t D) {
  Tensor<double> t({L, D});
  for (double& x : t.data) x = rng.normal();
  return t;
}

inline Eigen::MatrixXd to_eigen(const Tensor<double>& t) {
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  for (std::size_t i = 0; i < t.shape[0]; ++i)
    for (std::size_t j = 0; j < t.shape[1]; ++j) m(i, j) = t.at(i, j);
  return m;
}

// Dense oracle: eigenvalues of the sample covariance, descending.
inline Eigen::VectorXd covariance_spectrum(const Tensor<double>& rows) {
  const Eigen::MatrixXd X = to_eigen(rows);
  const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
  const Eigen::MatrixXd cov = C.transpose() * C / static_cast<double>(rows.shape[0] - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  return es.eigenvalues().reverse();
}

// Rows on a half circle embedded in D dimensions through a random orthonormal frame.
inline Tensor<double> half_circle(std::size_t L, std::size_t D, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(to_eigen(gaussian_rows(rng, D, D))).householderQ();
  Tensor<double> t({L, D});
  for (std::size_t i = 0; i < L; ++i) {
    const double a = std::numbers::pi * static_cast<double>(i) / static_cast<double>(L);
    for (std::size_t j = 0; j < D; ++j) t.at(i, j) = std::cos(a) * Q(j, 0) + std::sin(a) * Q(j, 1);
  }
  return t;
}

// Exhaustive K-NN: for each row, K rounds of picking the closest unused row
// (lowest index on ties) under the same distance definition.
inline double knn_oracle(const Tensor<double>& rows, std::size_t K, Metric metric) {
  const std::size_t L = rows.shape[0], D = rows.shape[1];
  auto dist = [&](std::size_t i, std::size_t j) {
    double dot = 0, ni = 0, nj = 0, sq = 0;
    for (std::size_t c = 0; c < D; ++c) {
      dot += rows.at(i, c) * rows.at(j, c);
      ni += rows.at(i, c) * rows.at(i, c);
      nj += rows.at(j, c) * rows.at(j, c);
      sq += (rows.at(i, c) - rows.at(j, c)) * (rows.at(i, c) - rows.at(j, c));
    }
    if (metric == Metric::euclidean) return sq;
    return 1.0 - std::clamp(dot / (std::sqrt(ni) * std::sqrt(nj)), -1.0, 1.0);
  };
  double total = 0;
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<bool> used(L, false);
    used[i] = true;
    double s = 0;
    for (std::size_t r = 0; r < K; ++r) {
      std::size_t best = L;
      for (std::size_t j = 0; j < L; ++j)
        if (!used[j] && (best == L || dist(i, j) < dist(i, best))) best = j;
      used[best] = true;
      s += std::abs(static_cast<double>(best) - static_cast<double>(i));
    }
    total += s / static_cast<double>(K);
  }
  return total / static_cast<double>(L);
}


}  // namespace recall::testing
