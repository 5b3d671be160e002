#pragma once

#include <vector>

#include "json.hpp"
#include "recall/blocks/params.hpp"
#include "recall/core/tensor.hpp"
#include "recall/task/example.hpp"

namespace recall {

// Rows p_1..p_L of an input embedding table [V, D], in index order.
Tensor<double> position_rows(const Tensor<double>& embed, const Vocabulary& vocab);

// Eigen-decomposition of a symmetric matrix [n, n] by cyclic Jacobi rotations.
// Eigenvalues descending; eigenvectors are the rows of `vectors`, each with its
// largest-magnitude coordinate positive (first such coordinate on ties).
struct SymmetricEigen {
  std::vector<double> values;
  Tensor<double> vectors;
};
SymmetricEigen symmetric_eigen(const Tensor<double>& a);

struct PcaResult {
  Tensor<double> projected;         // [L, d]
  Tensor<double> components;        // [d, D]
  std::vector<double> variance;     // per direction, sample covariance
  std::vector<double> explained;    // variance / total variance
  std::vector<double> mean;         // [D]
};

// Mean-centered projection of rows [L, D] onto the top-d principal directions.
// Requires 1 <= d <= min(L, D).
PcaResult pca_project(const Tensor<double>& rows, std::size_t d);

// Pairwise cosine similarity of rows [L, D]; symmetric with an exact unit diagonal.
// A zero-norm row is rejected.
Tensor<double> cosine_similarity_matrix(const Tensor<double>& rows);
// Same after PCA to d dimensions.
Tensor<double> cosine_similarity_matrix(const Tensor<double>& rows, std::size_t d);

enum class Metric { cosine, euclidean };
std::string to_string(Metric m);
Metric parse_metric(const std::string& s);

// For each K: mean over rows i of the mean |i - j| over the K nearest rows j != i.
// Distance ties resolve toward the lower row index. Requires every K in 1..L-1.
std::vector<double> knn_index_distance(const Tensor<double>& rows, const std::vector<std::size_t>& ks,
                                       Metric metric = Metric::cosine);

// |tanh(alpha)| per layer of a two-stream model; ConfigError for other families.
std::vector<double> gate_magnitudes(const ModelConfig& cfg, const ParameterSet<double>& params);

struct GateSeries {
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> magnitude;  // [layer][step index]
  // Whether the final magnitude is non-decreasing with depth (report only).
  bool depth_monotone = false;
};
struct GatePoint {
  std::size_t step = 0;
  std::vector<double> magnitude;  // per layer
};
GateSeries gate_series(const std::vector<GatePoint>& points);

struct LocalityReport {
  std::size_t step = 0;
  std::size_t L = 0;
  std::size_t model_dim = 0;
  std::vector<std::size_t> pca_dims;
  std::vector<PcaResult> pca;
  Tensor<double> cosine_full;
  std::vector<Tensor<double>> cosine_pca;  // one per pca_dims entry
  std::vector<std::size_t> ks;
  Metric metric = Metric::cosine;
  std::vector<double> knn;           // full dimension
  std::vector<double> knn_pca;       // after PCA to the largest permitted of pca_dims
  std::size_t knn_pca_dim = 0;
};

// PCA dims from {2, 32, 64, 128} that fit min(L, D), then cosine and K-NN
// statistics (K values >= L are dropped).
LocalityReport locality_report(const Tensor<double>& rows, std::size_t step, const std::vector<std::size_t>& ks,
                               Metric metric = Metric::cosine);

nlohmann::ordered_json to_json(const LocalityReport& r);
// Matrix as CSV rows without a header.
std::string matrix_csv(const Tensor<double>& m);

}  // namespace recall
