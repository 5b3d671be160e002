#include "recall/analysis/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "recall/core/errors.hpp"

namespace recall {

Tensor<double> position_rows(const Tensor<double>& embed, const Vocabulary& vocab) {
  require(embed.rank() == 2 && embed.shape[0] == vocab.size(),
          "position_rows: embedding " + to_string(embed.shape) + " does not match vocabulary size " +
              std::to_string(vocab.size()));
  require(vocab.n_positions > 0, "position_rows: vocabulary has no position tokens");
  const std::size_t D = embed.shape[1];
  Tensor<double> out({vocab.n_positions, D});
  for (std::size_t l = 1; l <= vocab.n_positions; ++l) {
    const auto row = static_cast<std::size_t>(vocab.position(l));
    std::copy_n(embed.data.begin() + static_cast<std::ptrdiff_t>(row * D), D,
                out.data.begin() + static_cast<std::ptrdiff_t>((l - 1) * D));
  }
  return out;
}

SymmetricEigen symmetric_eigen(const Tensor<double>& m) {
  require(m.rank() == 2 && m.shape[0] == m.shape[1], "symmetric_eigen: matrix must be square");
  const std::size_t n = m.shape[0];
  std::vector<double> a = m.data;
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

  double total = 0;
  for (double x : a) total += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off <= 1e-32 * total || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        A(p, q) = A(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A(x, x) > A(y, y); });
  SymmetricEigen out;
  out.vectors = Tensor<double>({n, n});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t col = order[r];
    out.values.push_back(A(col, col));
    std::size_t big = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v[k * n + col]) > std::abs(v[big * n + col])) big = k;
    const double sign = v[big * n + col] < 0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors.at(r, k) = sign * v[k * n + col];
  }
  return out;
}

PcaResult pca_project(const Tensor<double>& rows, std::size_t d) {
  require(rows.rank() == 2, "pca_project: expected a [L, D] matrix");
  const std::size_t L = rows.shape[0], D = rows.shape[1];
  require(d >= 1 && d <= std::min(L, D), "pca_project: d = " + std::to_string(d) + " must lie in 1..min(L, D) = " +
                                             std::to_string(std::min(L, D)));
  PcaResult r;
  r.mean.assign(D, 0.0);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < D; ++j) r.mean[j] += rows.at(i, j);
  for (double& m : r.mean) m /= static_cast<double>(L);
  Tensor<double> centered({L, D});
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < D; ++j) centered.at(i, j) = rows.at(i, j) - r.mean[j];

  Tensor<double> cov({D, D});
  const double denom = static_cast<double>(std::max<std::size_t>(L - 1, 1));
  for (std::size_t a = 0; a < D; ++a)
    for (std::size_t b = a; b < D; ++b) {
      double s = 0;
      for (std::size_t i = 0; i < L; ++i) s += centered.at(i, a) * centered.at(i, b);
      cov.at(a, b) = cov.at(b, a) = s / denom;
    }
  double trace = 0;
  for (std::size_t a = 0; a < D; ++a) trace += cov.at(a, a);

  const auto eig = symmetric_eigen(cov);
  r.components = Tensor<double>({d, D});
  std::copy_n(eig.vectors.data.begin(), d * D, r.components.data.begin());
  for (std::size_t k = 0; k < d; ++k) {
    const double var = std::max(eig.values[k], 0.0);
    r.variance.push_back(var);
    r.explained.push_back(trace > 0 ? std::min(1.0, var / trace) : 0.0);
  }
  r.projected = Tensor<double>({L, d});
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0;
      for (std::size_t j = 0; j < D; ++j) s += centered.at(i, j) * r.components.at(k, j);
      r.projected.at(i, k) = s;
    }
  return r;
}

namespace {

std::vector<double> row_norms(const Tensor<double>& rows, const char* who) {
  std::vector<double> norms(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < rows.cols(); ++j) s += rows.at(i, j) * rows.at(i, j);
    norms[i] = std::sqrt(s);
    require(norms[i] > 0, std::string(who) + ": row " + std::to_string(i) + " has zero norm");
  }
  return norms;
}

double dot_rows(const Tensor<double>& rows, std::size_t i, std::size_t j) {
  double s = 0;
  for (std::size_t c = 0; c < rows.cols(); ++c) s += rows.at(i, c) * rows.at(j, c);
  return s;
}

}  // namespace

Tensor<double> cosine_similarity_matrix(const Tensor<double>& rows) {
  require(rows.rank() == 2, "cosine_similarity_matrix: expected a [L, D] matrix");
  const std::size_t L = rows.shape[0];
  const auto norms = row_norms(rows, "cosine_similarity_matrix");
  Tensor<double> out({L, L});
  for (std::size_t i = 0; i < L; ++i) {
    out.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < L; ++j)
      out.at(i, j) = out.at(j, i) = std::clamp(dot_rows(rows, i, j) / (norms[i] * norms[j]), -1.0, 1.0);
  }
  return out;
}

Tensor<double> cosine_similarity_matrix(const Tensor<double>& rows, std::size_t d) {
  return cosine_similarity_matrix(pca_project(rows, d).projected);
}

std::string to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

Metric parse_metric(const std::string& s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "euclidean") return Metric::euclidean;
  throw ConfigError("unknown metric '" + s + "' (expected cosine or euclidean)");
}

std::vector<double> knn_index_distance(const Tensor<double>& rows, const std::vector<std::size_t>& ks, Metric metric) {
  require(rows.rank() == 2, "knn_index_distance: expected a [L, D] matrix");
  const std::size_t L = rows.shape[0];
  std::size_t kmax = 0;
  for (std::size_t k : ks) {
    require(k >= 1 && k < L, "knn_index_distance: K = " + std::to_string(k) + " must lie in 1..L-1 = " +
                                 std::to_string(L == 0 ? 0 : L - 1));
    kmax = std::max(kmax, k);
  }
  Tensor<double> dist({L, L});
  if (metric == Metric::cosine) {
    const auto cos = cosine_similarity_matrix(rows);
    for (std::size_t i = 0; i < L * L; ++i) dist.data[i] = 1.0 - cos.data[i];
  } else {
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = i + 1; j < L; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < rows.cols(); ++c) {
          const double diff = rows.at(i, c) - rows.at(j, c);
          s += diff * diff;
        }
        dist.at(i, j) = dist.at(j, i) = s;
      }
  }

  std::vector<double> sums(ks.size(), 0.0);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < L; ++i) {
    others.clear();
    for (std::size_t j = 0; j < L; ++j)
      if (j != i) others.push_back(j);
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(kmax), others.end(),
                      [&](std::size_t a, std::size_t b) {
                        return dist.at(i, a) != dist.at(i, b) ? dist.at(i, a) < dist.at(i, b) : a < b;
                      });
    for (std::size_t q = 0; q < ks.size(); ++q) {
      double s = 0;
      for (std::size_t r = 0; r < ks[q]; ++r)
        s += static_cast<double>(others[r] > i ? others[r] - i : i - others[r]);
      sums[q] += s / static_cast<double>(ks[q]);
    }
  }
  for (double& s : sums) s /= static_cast<double>(L);
  return sums;
}

std::vector<double> gate_magnitudes(const ModelConfig& cfg, const ParameterSet<double>& params) {
  if (!cfg.is_twostream())
    throw ConfigError("gate magnitudes need a two-stream model, got family " + to_string(cfg.family));
  std::vector<double> out;
  for (std::size_t i = 0; i < cfg.n_layers; ++i)
    out.push_back(std::abs(std::tanh(params.get(layer_prefix(i) + "gate").data.at(0))));
  return out;
}

GateSeries gate_series(const std::vector<GatePoint>& points) {
  GateSeries s;
  if (points.empty()) return s;
  const std::size_t layers = points.front().magnitude.size();
  s.magnitude.assign(layers, {});
  for (const auto& p : points) {
    require(p.magnitude.size() == layers, "gate_series: layer count changes between points");
    require(s.steps.empty() || p.step > s.steps.back(), "gate_series: steps must increase");
    s.steps.push_back(p.step);
    for (std::size_t l = 0; l < layers; ++l) s.magnitude[l].push_back(p.magnitude[l]);
  }
  const auto& last = points.back().magnitude;
  s.depth_monotone = std::is_sorted(last.begin(), last.end());
  return s;
}

LocalityReport locality_report(const Tensor<double>& rows, std::size_t step, const std::vector<std::size_t>& ks,
                               Metric metric) {
  require(rows.rank() == 2 && rows.shape[0] >= 2, "locality_report: need at least two rows");
  LocalityReport r;
  r.step = step;
  r.L = rows.shape[0];
  r.model_dim = rows.shape[1];
  r.metric = metric;
  const std::size_t cap = std::min(r.L, r.model_dim);
  for (std::size_t d : {2, 32, 64, 128})
    if (d <= cap) r.pca_dims.push_back(d);
  for (std::size_t d : r.pca_dims) {
    r.pca.push_back(pca_project(rows, d));
    r.cosine_pca.push_back(cosine_similarity_matrix(r.pca.back().projected));
  }
  r.cosine_full = cosine_similarity_matrix(rows);
  for (std::size_t k : ks)
    if (k < r.L) r.ks.push_back(k);
  if (!r.ks.empty()) {
    r.knn = knn_index_distance(rows, r.ks, metric);
    if (!r.pca_dims.empty()) {
      const bool has32 = std::find(r.pca_dims.begin(), r.pca_dims.end(), 32) != r.pca_dims.end();
      r.knn_pca_dim = has32 ? 32 : r.pca_dims.back();
      const auto idx = static_cast<std::size_t>(
          std::find(r.pca_dims.begin(), r.pca_dims.end(), r.knn_pca_dim) - r.pca_dims.begin());
      r.knn_pca = knn_index_distance(r.pca[idx].projected, r.ks, metric);
    }
  }
  return r;
}

nlohmann::ordered_json to_json(const LocalityReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["L"] = r.L;
  j["model_dim"] = r.model_dim;
  j["pca"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.pca_dims.size(); ++i) {
    nlohmann::ordered_json p;
    p["dim"] = r.pca_dims[i];
    p["variance"] = r.pca[i].variance;
    p["explained"] = r.pca[i].explained;
    j["pca"].push_back(p);
  }
  nlohmann::ordered_json knn;
  knn["metric"] = to_string(r.metric);
  knn["ks"] = r.ks;
  knn["full"] = r.knn;
  knn["pca_dim"] = r.knn_pca_dim;
  knn["pca"] = r.knn_pca;
  j["knn"] = knn;
  return j;
}

std::string matrix_csv(const Tensor<double>& m) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m.at(i, j);
    os << '\n';
  }
  return os.str();
}

}  // namespace recall
