#include "recall/cli/plots.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "recall/cli/artifacts.hpp"
#include "recall/core/errors.hpp"
#include "recall/train/trainer.hpp"

namespace recall {

namespace fs = std::filesystem;

const std::vector<std::string>& plot_kinds() {
  static const std::vector<std::string> kinds{"accuracy-vs-examples", "extrapolation", "per-position-heatmap",
                                              "preference-heatmap",  "pca-2d",        "cosine-matrix",
                                              "knn-curve",           "gate-curves"};
  return kinds;
}

namespace {

std::uint64_t run_seed(const fs::path& dir) {
  const auto cfg = read_json(require_artifact(dir, "config.resolved.json", "train"));
  return cfg["seeds"].at(0).get<std::uint64_t>();
}

std::string num(const nlohmann::ordered_json& v) { return format_real(v.get<double>()); }

std::string accuracy_vs_examples(const fs::path& dir) {
  const auto report = read_json(require_artifact(dir, "train_report.json", "train"));
  const auto seed = std::to_string(run_seed(dir));
  std::string out = "examples_seen,val_accuracy,val_loss,train_loss,step,seed\n";
  for (const auto& r : report["records"])
    out += std::to_string(r["examples_seen"].get<std::size_t>()) + "," + num(r["val_accuracy"]) + "," +
           num(r["val_loss"]) + "," + num(r["train_loss"]) + "," + std::to_string(r["step"].get<std::size_t>()) + "," +
           seed + "\n";
  return out;
}

std::string extrapolation(const fs::path& dir) {
  const auto eval = read_json(require_artifact(dir, "eval.json", "eval"));
  const auto seed = std::to_string(run_seed(dir));
  std::string out = "length,accuracy,n_samples,seed\n";
  for (const auto& r : eval["extrapolation"])
    out += std::to_string(r["length"].get<std::size_t>()) + "," + num(r["accuracy"]) + "," +
           std::to_string(r["n_samples"].get<std::size_t>()) + "," + seed + "\n";
  return out;
}

std::string per_position(const fs::path& dir) {
  const auto report = read_json(require_artifact(dir, "train_report.json", "train"));
  std::string out = "step,examples_seen,l,accuracy\n";
  bool any = false;
  for (const auto& r : report["records"]) {
    if (!r.contains("per_position")) continue;
    any = true;
    const auto acc = r["per_position"].get<std::vector<double>>();
    for (std::size_t l = 0; l < acc.size(); ++l)
      out += std::to_string(r["step"].get<std::size_t>()) + "," + std::to_string(r["examples_seen"].get<std::size_t>()) +
             "," + std::to_string(l + 1) + "," + format_real(acc[l]) + "\n";
  }
  if (!any)
    throw std::runtime_error("no per-position accuracy in " + dir.string() +
                             ": it is produced by the train stage on the position task with train.per_position_samples > 0");
  return out;
}

std::string preference(const fs::path& dir) {
  const auto eval = read_json(require_artifact(dir, "eval.json", "eval"));
  if (!eval.contains("duplicates"))
    throw std::runtime_error("no duplicate-query results in " + dir.string() +
                             ": they are produced by the eval stage on the n-gram task");
  std::size_t width = 0;
  for (const auto& r : eval["duplicates"]) width = std::max(width, r["s"].get<std::size_t>());
  std::string out = "s";
  for (std::size_t j = 1; j <= width; ++j) out += ",segment_" + std::to_string(j);
  out += ",error_rate\n";
  for (const auto& r : eval["duplicates"]) {
    const auto pref = r["preference"].get<std::vector<double>>();
    out += std::to_string(r["s"].get<std::size_t>());
    for (std::size_t j = 0; j < width; ++j) out += "," + (j < pref.size() ? format_real(pref[j]) : std::string());
    out += "," + num(r["error_rate"]) + "\n";
  }
  return out;
}

nlohmann::ordered_json locality(const fs::path& dir) {
  const auto a = read_json(require_artifact(dir, "analysis.json", "analyze"));
  if (!a["locality"].is_array())
    throw std::runtime_error("no locality analysis in " + dir.string() + ": " + a["locality"].get<std::string>());
  return a["locality"];
}

std::string step_tag(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step%08zu", step);
  return buf;
}

std::string pca_2d(const fs::path& dir) {
  std::string out = "index,x,y,step\n";
  for (const auto& r : locality(dir)) {
    const auto text = read_text(require_artifact(dir, "analysis/pca2d_" + step_tag(r["step"]) + ".csv", "analyze"));
    out += text.substr(text.find('\n') + 1);
  }
  return out;
}

std::string cosine(const fs::path& dir) {
  std::string out = "step,i,j,cosine\n";
  for (const auto& r : locality(dir)) {
    const std::size_t step = r["step"];
    const auto m = read_matrix_csv(require_artifact(dir, "analysis/cosine_full_" + step_tag(step) + ".csv", "analyze"));
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        out += std::to_string(step) + "," + std::to_string(i + 1) + "," + std::to_string(j + 1) + "," +
               format_real(m.at(i, j)) + "\n";
  }
  return out;
}

std::string knn(const fs::path& dir) {
  std::string out = "step,variant,K,distance\n";
  for (const auto& r : locality(dir)) {
    const auto& k = r["knn"];
    const auto ks = k["ks"].get<std::vector<std::size_t>>();
    const std::string pca = "pca" + std::to_string(k["pca_dim"].get<std::size_t>());
    for (std::size_t i = 0; i < ks.size(); ++i) {
      out += std::to_string(r["step"].get<std::size_t>()) + ",full," + std::to_string(ks[i]) + "," + num(k["full"][i]) + "\n";
      if (i < k["pca"].size())
        out += std::to_string(r["step"].get<std::size_t>()) + "," + pca + "," + std::to_string(ks[i]) + "," +
               num(k["pca"][i]) + "\n";
    }
  }
  return out;
}

std::string gates(const fs::path& dir) {
  const auto path = dir / "analysis" / "gates.csv";
  if (!fs::exists(path))
    throw std::runtime_error("no gate magnitudes in " + dir.string() +
                             ": they are produced by the analyze stage for two-stream models");
  return read_text(path);
}

}  // namespace

std::string emit_plot_data(const fs::path& dir, const std::string& kind) {
  if (kind == "accuracy-vs-examples") return accuracy_vs_examples(dir);
  if (kind == "extrapolation") return extrapolation(dir);
  if (kind == "per-position-heatmap") return per_position(dir);
  if (kind == "preference-heatmap") return preference(dir);
  if (kind == "pca-2d") return pca_2d(dir);
  if (kind == "cosine-matrix") return cosine(dir);
  if (kind == "knn-curve") return knn(dir);
  if (kind == "gate-curves") return gates(dir);
  std::string known;
  for (const auto& k : plot_kinds()) known += (known.empty() ? "" : ", ") + k;
  throw ConfigError("unknown figure kind '" + kind + "' (known: " + known + ")");
}

std::vector<std::string> emit_all_plots(const fs::path& dir, const fs::path& out_dir) {
  std::vector<std::string> written;
  for (const auto& kind : plot_kinds()) {
    std::string table;
    try {
      table = emit_plot_data(dir, kind);
    } catch (const std::runtime_error&) {
      continue;  // not applicable to this run
    }
    write_text(out_dir / (kind + ".v" + std::to_string(kPlotSchemaVersion) + ".csv"), table);
    written.push_back(kind);
  }
  return written;
}

nlohmann::ordered_json compare_runs(const std::vector<fs::path>& dirs) {
  if (dirs.size() < 2) throw ConfigError("compare needs at least two run directories, got " + std::to_string(dirs.size()));
  struct Run {
    fs::path dir;
    nlohmann::ordered_json cfg, report;
  };
  std::vector<Run> runs;
  for (const auto& d : dirs)
    runs.push_back({d, read_json(require_artifact(d, "config.resolved.json", "train")),
                    read_json(require_artifact(d, "train_report.json", "train"))});
  const auto& task0 = runs.front().cfg["task"];
  for (const auto& r : runs)
    if (r.cfg["task"] != task0)
      throw ConfigError("refusing to compare runs with different task configs: " + runs.front().dir.string() + " vs " +
                        r.dir.string());

  const double threshold = runs.front().cfg["train"]["accuracy_threshold"].get<double>();
  nlohmann::ordered_json out;
  out["task"] = task0;
  out["threshold"] = threshold;
  out["runs"] = nlohmann::ordered_json::array();
  std::set<std::size_t> axis;
  std::vector<std::map<std::size_t, double>> curves;
  std::vector<std::pair<std::size_t, std::size_t>> reached;  // (examples, run index)
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    nlohmann::ordered_json item;
    item["dir"] = r.dir.generic_string();
    item["name"] = r.cfg["name"];
    item["family"] = r.cfg["model"]["family"];
    item["seed"] = r.cfg["seeds"].at(0);
    std::map<std::size_t, double> curve;
    nlohmann::ordered_json first = nullptr;
    for (const auto& rec : r.report["records"]) {
      const std::size_t ex = rec["examples_seen"];
      const double acc = rec["val_accuracy"];
      curve[ex] = acc;
      axis.insert(ex);
      if (first.is_null() && acc >= threshold) first = ex;
    }
    item["examples_to_threshold"] = first;
    item["final_accuracy"] = r.report["final_accuracy"];
    if (!first.is_null()) reached.emplace_back(first.get<std::size_t>(), i);
    const auto analysis = r.dir / "analysis.json";
    if (fs::exists(analysis)) {
      const auto a = read_json(analysis);
      if (a["locality"].is_array() && !a["locality"].empty()) {
        const auto& k = a["locality"].back()["knn"];
        const auto ks = k["ks"].get<std::vector<std::size_t>>();
        const auto it = std::find(ks.begin(), ks.end(), 1);
        if (it != ks.end()) item["final_knn_k1"] = k["full"][static_cast<std::size_t>(it - ks.begin())];
      }
    }
    out["runs"].push_back(item);
    curves.push_back(std::move(curve));
  }
  std::stable_sort(reached.begin(), reached.end());
  nlohmann::ordered_json order = nlohmann::ordered_json::array();
  for (const auto& [ex, i] : reached) order.push_back(i);
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (std::none_of(reached.begin(), reached.end(), [&](const auto& p) { return p.second == i; })) order.push_back(i);
  out["ordering"] = order;  // run indices, fewest examples to threshold first; runs that never reached it last
  out["spread"] = reached.size() >= 2 ? nlohmann::ordered_json(reached.back().first - reached.front().first) : nullptr;

  nlohmann::ordered_json aligned = nlohmann::ordered_json::array();
  for (std::size_t ex : axis) {
    nlohmann::ordered_json row;
    row["examples_seen"] = ex;
    row["accuracy"] = nlohmann::ordered_json::array();
    for (const auto& c : curves) {
      const auto it = c.find(ex);
      row["accuracy"].push_back(it == c.end() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(it->second));
    }
    aligned.push_back(row);
  }
  out["aligned"] = aligned;
  return out;
}

}  // namespace recall
