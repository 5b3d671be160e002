#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "recall/analysis/geometry.hpp"
#include "recall/core/errors.hpp"
#include "recall/core/rng.hpp"
#include "analysis_fixtures.hpp"

using namespace recall;

using recall::testing::covariance_spectrum;
using recall::testing::gaussian_rows;
using recall::testing::half_circle;
using recall::testing::knn_oracle;
using recall::testing::to_eigen;

TEST_CASE("symmetric_eigen agrees with a dense solver") {
  Rng rng(1);
  for (std::size_t n : {1, 2, 7, 20, 64}) {
    const auto g = gaussian_rows(rng, n, n);
    Tensor<double> a({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a.at(i, j) = g.at(i, j) + g.at(j, i);
    const auto mine = symmetric_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(a));
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    const Eigen::MatrixXd evec = es.eigenvectors().rowwise().reverse();
    const double scale = ev.cwiseAbs().maxCoeff();
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(std::abs(mine.values[k] - ev(static_cast<Eigen::Index>(k))) <= 1e-9 * scale);
      double dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += mine.vectors.at(k, j) * evec(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
      CHECK(std::abs(std::abs(dot) - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("pca: per-direction variance matches the dense oracle") {
  Rng rng(2);
  const std::vector<std::pair<std::size_t, std::size_t>> shapes{{20, 8}, {64, 64}, {40, 16}, {10, 30}, {64, 5}};
  for (auto [L, D] : shapes) {
    const auto X = gaussian_rows(rng, L, D);
    const std::size_t d = std::min(L, D);
    const auto p = pca_project(X, d);
    const auto oracle = covariance_spectrum(X);
    for (std::size_t k = 0; k < d; ++k) {
      const double want = std::max(oracle(static_cast<Eigen::Index>(k)), 0.0);
      if (want > 1e-9 * oracle(0)) {
        CHECK(std::abs(p.variance[k] - want) <= 1e-9 * want);
      } else {
        CHECK(p.variance[k] <= 1e-9 * oracle(0));
      }
    }
    for (std::size_t k = 0; k < d; ++k) {
      CHECK(p.explained[k] >= 0.0);
      CHECK(p.explained[k] <= 1.0);
      if (k > 0) CHECK(p.explained[k] <= p.explained[k - 1]);
      double big = 0;
      for (std::size_t j = 0; j < D; ++j)
        if (std::abs(p.components.at(k, j)) > std::abs(big)) big = p.components.at(k, j);
      CHECK(big > 0);
    }
  }
}

TEST_CASE("pca: reconstruction error of a random 20x8 matrix matches the oracle") {
  Rng rng(3);
  const auto X = gaussian_rows(rng, 20, 8);
  const auto oracle = covariance_spectrum(X);
  for (std::size_t d = 1; d <= 8; ++d) {
    const auto p = pca_project(X, d);
    double err = 0;
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        double rec = p.mean[j];
        for (std::size_t k = 0; k < d; ++k) rec += p.projected.at(i, k) * p.components.at(k, j);
        err += (X.at(i, j) - rec) * (X.at(i, j) - rec);
      }
    const double want = 19.0 * oracle.tail(static_cast<Eigen::Index>(8 - d)).sum();
    CHECK(std::abs(err - want) <= 1e-9 * std::max(1.0, want));
  }
}

TEST_CASE("pca: collinear points, full-rank isometry, bad d") {
  Tensor<double> line({6, 5});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) line.at(i, j) = static_cast<double>(i) * (1.0 + static_cast<double>(j));
  const auto p = pca_project(line, 3);
  CHECK(p.explained[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.explained[1] <= 1e-12);

  Rng rng(4);
  const auto X = gaussian_rows(rng, 12, 6);
  const auto full = pca_project(X, 6);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = i + 1; j < 12; ++j) {
      double a = 0, b = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        a += (X.at(i, c) - X.at(j, c)) * (X.at(i, c) - X.at(j, c));
        b += (full.projected.at(i, c) - full.projected.at(j, c)) * (full.projected.at(i, c) - full.projected.at(j, c));
      }
      CHECK(std::abs(std::sqrt(a) - std::sqrt(b)) <= 1e-9);
    }
  CHECK_THROWS_AS(pca_project(X, 7), ContractViolation);
  CHECK_THROWS_AS(pca_project(X, 0), ContractViolation);
  CHECK_THROWS_AS(pca_project(gaussian_rows(rng, 4, 9), 5), ContractViolation);
}

TEST_CASE("cosine matrix: identity, equal rows, spiral band, invariants") {
  Tensor<double> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  const auto I = cosine_similarity_matrix(eye);
  CHECK(I.data == eye.data);

  Tensor<double> dup({3, 2}, {1.0, 2.0, -3.0, 0.5, 1.0, 2.0});
  CHECK(cosine_similarity_matrix(dup).at(0, 2) == doctest::Approx(1.0).epsilon(1e-15));

  const std::size_t L = 24;
  Tensor<double> spiral({L, 2});
  for (std::size_t i = 0; i < L; ++i) {
    const double a = 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(2 * L);
    spiral.at(i, 0) = std::cos(a);
    spiral.at(i, 1) = std::sin(a);
  }
  const auto S = cosine_similarity_matrix(spiral);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      const double gap = std::abs(static_cast<double>(i) - static_cast<double>(j));
      CHECK(S.at(i, j) == doctest::Approx(std::cos(std::numbers::pi * gap / static_cast<double>(L))).epsilon(1e-12));
      if (j + 1 < L && j >= i) CHECK(S.at(i, j + 1) < S.at(i, j));
    }

  Rng rng(5);
  const auto X = gaussian_rows(rng, 30, 10);
  for (const auto& M : {cosine_similarity_matrix(X), cosine_similarity_matrix(X, 4)}) {
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(std::abs(M.at(i, i) - 1.0) <= 1e-9);
      for (std::size_t j = 0; j < 30; ++j) {
        CHECK(M.at(i, j) == M.at(j, i));
        CHECK(std::abs(M.at(i, j)) <= 1.0);
      }
    }
  }
  Tensor<double> zero({2, 3}, {1, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(cosine_similarity_matrix(zero), ContractViolation);
}

TEST_CASE("knn: points on a line give 1.125 for L=8, K=2") {
  Tensor<double> line({8, 3});
  for (std::size_t i = 0; i < 8; ++i) line.at(i, 0) = static_cast<double>(i);
  CHECK(knn_index_distance(line, {2}, Metric::euclidean)[0] == 1.125);
  CHECK(knn_oracle(line, 2, Metric::euclidean) == 1.125);
  CHECK_THROWS_AS(knn_index_distance(line, {8}), ContractViolation);
  CHECK_THROWS_AS(knn_index_distance(line, {0}), ContractViolation);
}

TEST_CASE("knn: equals the exhaustive oracle") {
  Rng rng(6);
  for (std::size_t L : {2, 9, 33, 100, 256}) {
    const auto X = gaussian_rows(rng, L, 12);
    std::vector<std::size_t> ks{1};
    if (L > 4) ks = {1, 2, 4, L - 1};
    for (Metric m : {Metric::cosine, Metric::euclidean}) {
      const auto got = knn_index_distance(X, ks, m);
      for (std::size_t q = 0; q < ks.size(); ++q) CHECK(got[q] == knn_oracle(X, ks[q], m));
    }
  }
}

TEST_CASE("knn: locality-aware layouts versus shuffled copies") {
  for (std::size_t L : {32, 64, 128}) {
    const auto rows = half_circle(L, 16, L);
    CHECK(knn_index_distance(rows, {1})[0] == 1.0);
    // Brute-force check of the edge-corrected value for larger K, and its independence from rotation.
    for (std::size_t K : {2, 3, 4}) CHECK(knn_index_distance(rows, {K})[0] == knn_oracle(rows, K, Metric::cosine));

    Rng rng(L);
    std::vector<std::size_t> perm(L);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = L - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Tensor<double> shuffled({L, 16});
    for (std::size_t i = 0; i < L; ++i)
      std::copy_n(rows.data.begin() + static_cast<std::ptrdiff_t>(perm[i] * 16), 16,
                  shuffled.data.begin() + static_cast<std::ptrdiff_t>(i * 16));
    CHECK(knn_index_distance(shuffled, {1})[0] > 3.0);
  }
  // Away from the two ends the value does not depend on L: K=2 interior rows score 1.
  const double a = knn_index_distance(half_circle(64, 8, 1), {2})[0];
  const double b = knn_index_distance(half_circle(128, 8, 1), {2})[0];
  CHECK(a == doctest::Approx(1.0 + 1.0 / 64).epsilon(1e-12));
  CHECK(b == doctest::Approx(1.0 + 1.0 / 128).epsilon(1e-12));
}

TEST_CASE("knn: random Gaussian rows sit near the uniform-pair mean (L+1)/3") {
  const std::size_t L = 64;
  Rng rng(7);
  double sum = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const double v = knn_index_distance(gaussian_rows(rng, L, 16), {1})[0];
    CHECK(v > 5.0);
    sum += v;
  }
  // Monte-Carlo oracle: mean |i - j| over i and a uniformly random j != i.
  Rng mc(8);
  double oracle = 0;
  const int draws = 2000000;
  for (int t = 0; t < draws; ++t) {
    const auto i = mc.below(L);
    auto j = mc.below(L - 1);
    if (j >= i) ++j;
    oracle += std::abs(static_cast<double>(i) - static_cast<double>(j));
  }
  oracle /= draws;
  CHECK(oracle == doctest::Approx((L + 1) / 3.0).epsilon(0.01));
  CHECK(sum / trials == doctest::Approx(oracle).epsilon(0.02));
}

TEST_CASE("gate magnitudes: zero at init, bounded, family check, series") {
  ModelConfig cfg;
  cfg.family = Family::hybrid_twostream;
  cfg.n_layers = 3;
  cfg.model_dim = 16;
  cfg.n_heads = 2;
  cfg.ssm_state_dim = 4;
  cfg.vocab_size = 10;
  auto params = init_parameters(cfg, 1);
  for (double g : gate_magnitudes(cfg, params)) CHECK(g == 0.0);
  params.get("layers.0.gate").data[0] = -0.3;
  params.get("layers.1.gate").data[0] = 0.7;
  params.get("layers.2.gate").data[0] = 5.0;
  const auto g = gate_magnitudes(cfg, params);
  CHECK(g[0] == doctest::Approx(std::tanh(0.3)));
  for (double x : g) CHECK(x < 1.0);

  const auto series = gate_series({{0, {0, 0, 0}}, {10, g}});
  CHECK(series.steps == std::vector<std::size_t>{0, 10});
  CHECK(series.magnitude[1][1] == g[1]);
  CHECK(series.depth_monotone);
  CHECK_FALSE(gate_series({{0, {0.5, 0.1}}}).depth_monotone);
  CHECK_THROWS_AS(gate_series({{5, {0.1}}, {5, {0.2}}}), ContractViolation);

  ModelConfig plain = cfg;
  plain.family = Family::transformer;
  CHECK_THROWS_AS(gate_magnitudes(plain, init_parameters(plain, 1)), ConfigError);
}

TEST_CASE("position rows and locality report") {
  Vocabulary v{5, 12};
  Tensor<double> embed({v.size(), 4});
  for (std::size_t i = 0; i < embed.size(); ++i) embed.data[i] = static_cast<double>(i);
  const auto rows = position_rows(embed, v);
  REQUIRE(rows.shape == Shape{12, 4});
  CHECK(rows.at(0, 0) == embed.at(static_cast<std::size_t>(v.position(1)), 0));
  CHECK(rows.at(11, 3) == embed.at(static_cast<std::size_t>(v.position(12)), 3));

  const auto circle = half_circle(40, 64, 3);
  const auto rep = locality_report(circle, 100, {1, 2, 50}, Metric::cosine);
  CHECK(rep.pca_dims == std::vector<std::size_t>{2, 32});
  CHECK(rep.ks == std::vector<std::size_t>{1, 2});
  CHECK(rep.knn[0] == 1.0);
  CHECK(rep.knn_pca_dim == 32);
  CHECK(rep.pca[0].explained[0] + rep.pca[0].explained[1] == doctest::Approx(1.0));
  const auto j = to_json(rep);
  CHECK(j["step"] == 100);
  CHECK(j["knn"]["metric"] == "cosine");
  CHECK(j["pca"].size() == 2);
  CHECK(matrix_csv(Tensor<double>({2, 2}, {1, 0.5, 0.5, 1})) == "1,0.5\n0.5,1\n");
}
