#include "recall/cli/experiment.hpp"

#include <cmath>
#include <cstdlib>

#include "recall/analysis/geometry.hpp"
#include "recall/blocks/checkpoint.hpp"
#include "recall/cli/artifacts.hpp"
#include "recall/core/errors.hpp"
#include "recall/core/json_fields.hpp"
#include "recall/core/rng.hpp"
#include "recall/task/dataset.hpp"
#include "recall/train/evaluate.hpp"
#include "recall/train/trainer.hpp"

namespace recall {

namespace fs = std::filesystem;

ExperimentConfig resolve(ExperimentConfig cfg) {
  if (cfg.model.vocab_size == 0) cfg.model.vocab_size = cfg.task.vocab().size();
  if (cfg.output_dir.empty()) cfg.output_dir = cfg.name;
  auto& lengths = cfg.eval.extrapolation_lengths;
  if (lengths.empty()) {
    const std::size_t base = cfg.task.kind == TaskKind::ngram ? cfg.task.max_len : cfg.task.seq_len;
    const std::size_t cap = cfg.task.kind == TaskKind::ngram
                                ? SIZE_MAX
                                : std::min(cfg.task.vocab().n_positions, cfg.task.n_regular);
    for (double f : {1.0, 1.5, 2.0, 3.0, 4.0}) {
      const auto len = static_cast<std::size_t>(std::floor(f * static_cast<double>(base)));
      if (len <= cap && (lengths.empty() || len > lengths.back())) lengths.push_back(len);
    }
  }
  if (cfg.eval.duplicate_s.empty() && cfg.task.kind == TaskKind::ngram) cfg.eval.duplicate_s = {2, 3, 4, 10};
  return cfg;
}

namespace {

nlohmann::ordered_json eval_to_json(const EvalPlan& e) {
  nlohmann::ordered_json j;
  j["extrapolation_lengths"] = e.extrapolation_lengths;
  j["extrapolation_samples"] = e.extrapolation_samples;
  j["duplicate_s"] = e.duplicate_s;
  j["duplicate_samples"] = e.duplicate_samples;
  j["knn_ks"] = e.knn_ks;
  j["knn_metric"] = to_string(e.knn_metric);
  j["min_accuracy"] = e.min_accuracy;
  return j;
}

void read_counts(const nlohmann::json& j, const char* key, std::vector<std::size_t>& out, FieldReader& r) {
  r.mark(key);
  if (!r.has(key)) return;
  const auto& v = j.at(key);
  bool ok = v.is_array();
  if (ok)
    for (const auto& x : v) ok = ok && x.is_number_integer() && x.get<long long>() > 0;
  if (!ok) return r.error(key, "expected an array of positive integers");
  out = v.get<std::vector<std::size_t>>();
}

EvalPlan eval_from_json(const nlohmann::json& j, std::vector<std::string>& errors) {
  EvalPlan e;
  FieldReader r(j, "eval", errors);
  if (!j.is_object()) return e;
  read_counts(j, "extrapolation_lengths", e.extrapolation_lengths, r);
  r.read("extrapolation_samples", e.extrapolation_samples);
  read_counts(j, "duplicate_s", e.duplicate_s, r);
  r.read("duplicate_samples", e.duplicate_samples);
  read_counts(j, "knn_ks", e.knn_ks, r);
  r.read_enum("knn_metric", e.knn_metric, parse_metric);
  r.read("min_accuracy", e.min_accuracy);
  r.finish();
  if (e.extrapolation_samples == 0) r.error("extrapolation_samples", "must be >= 1");
  if (!(e.min_accuracy >= 0 && e.min_accuracy <= 1)) r.error("min_accuracy", "must lie in [0, 1]");
  return e;
}

// Problems that involve more than one section.
void cross_check(const ExperimentConfig& c, std::vector<std::string>& errors) {
  const auto v = c.task.vocab();
  if (c.model.vocab_size != v.size())
    errors.push_back("model.vocab_size: " + std::to_string(c.model.vocab_size) + " does not match the task vocabulary size " +
                     std::to_string(v.size()));
  if (c.seeds.empty()) errors.push_back("seeds: at least one seed is required");
  if (c.name.empty()) errors.push_back("name: must not be empty");
  if (c.task.kind == TaskKind::position) {
    for (std::size_t len : c.eval.extrapolation_lengths) {
      if (len > v.n_positions)
        errors.push_back("eval.extrapolation_lengths: " + std::to_string(len) + " exceeds the " +
                         std::to_string(v.n_positions) + " position tokens (raise task.max_positions)");
      else if (len > c.task.n_regular)
        errors.push_back("eval.extrapolation_lengths: " + std::to_string(len) + " exceeds task.n_regular " +
                         std::to_string(c.task.n_regular));
    }
    if (!c.eval.duplicate_s.empty()) errors.push_back("eval.duplicate_s: not applicable to task kind position");
  } else {
    for (std::size_t s : c.eval.duplicate_s)
      if (s < 2) errors.push_back("eval.duplicate_s: values must be >= 2");
    if (c.train.per_position_samples != 0)
      errors.push_back("train.per_position_samples: not applicable to task kind ngram");
  }
}

}  // namespace

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  j["model"] = to_json(c.model);
  j["task"] = to_json(c.task);
  auto train = to_json(c.train);
  train.erase("seed");
  j["train"] = train;
  j["eval"] = eval_to_json(c.eval);
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  FieldReader r(j, "experiment", errors);
  if (!j.is_object()) throw ConfigError("invalid experiment config:\n  experiment: expected an object");
  r.read("name", c.name);
  r.read("output_dir", c.output_dir);
  r.mark("seeds");
  if (r.has("seeds")) {
    const auto& s = j.at("seeds");
    bool ok = s.is_array() && !s.empty();
    if (ok)
      for (const auto& x : s) ok = ok && x.is_number_integer() && x.get<long long>() >= 0;
    if (ok) c.seeds = s.get<std::vector<std::uint64_t>>();
    else r.error("seeds", "expected a non-empty array of non-negative integers");
  }
  for (const char* key : {"model", "task", "train", "eval"}) r.mark(key);
  r.finish();

  const nlohmann::json empty = nlohmann::json::object();
  c.task = task_config_from_json(j.contains("task") ? j.at("task") : empty, errors);
  nlohmann::json model = j.contains("model") ? j.at("model") : empty;
  if (model.is_object() && !model.contains("vocab_size")) model["vocab_size"] = c.task.vocab().size();
  c.model = model_config_from_json(model, errors);
  const nlohmann::json& train = j.contains("train") ? j.at("train") : empty;
  if (train.is_object() && train.contains("seed")) errors.push_back("train.seed: use the top-level seeds list");
  c.train = train_config_from_json(train, errors);
  c.eval = eval_from_json(j.contains("eval") ? j.at("eval") : empty, errors);
  c = resolve(c);
  cross_check(c, errors);
  if (!errors.empty()) {
    std::string msg = "invalid experiment config (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  c.train.seed = c.seeds.front();
  return c;
}

nlohmann::json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return experiment_config_from_json(parse_config_text(text, path.string()));
}

fs::path output_root() {
  const char* env = std::getenv("RECALL_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path experiment_dir(const ExperimentConfig& cfg) {
  const fs::path out = cfg.output_dir.empty() ? fs::path(cfg.name) : fs::path(cfg.output_dir);
  return out.is_absolute() ? out : output_root() / out;
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return experiment_dir(cfg) / ("seed-" + std::to_string(seed));
}

namespace {

void require_fresh(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir))
    throw ConfigError("refusing to write into non-empty run directory '" + dir.string() + "'");
}

ExperimentConfig run_config(const fs::path& dir) {
  const auto j = read_json(require_artifact(dir, "config.resolved.json", "train"));
  return experiment_config_from_json(nlohmann::json::parse(j.dump()));
}

std::string step_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step%08zu", step);
  return buf;
}

}  // namespace

RunOutcome train_stage(const ExperimentConfig& cfg_in, std::uint64_t seed, const fs::path& dir) {
  require_fresh(dir);
  fs::create_directories(dir);
  ExperimentConfig cfg = resolve(cfg_in);
  cfg.seeds = {seed};
  cfg.train.seed = seed;
  write_json(dir / "config.resolved.json", to_json(cfg));
  // The first validation examples, for inspection; the full set is regenerated from the seed.
  fs::create_directories(dir / "data");
  write_jsonl(dir / "data" / "val_head.jsonl",
              generate_examples(SeedStreams(seed).val, std::min<std::size_t>(cfg.train.val_size, 64), cfg.task));

  TrainLogWriter log(dir / "train_log.csv");
  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& r) { log.append(r); };
  hooks.on_snapshot = [&](const EmbeddingSnapshot& s) {
    const std::string rel = "snapshots/embed_" + step_name(s.step) + ".csv";
    write_text(dir / rel, matrix_csv(s.embed));
    return rel;
  };
  const TrainResult result = train(cfg.model, cfg.task, cfg.train, hooks);
  write_json(dir / "train_report.json", to_json(result));
  nlohmann::ordered_json meta;
  meta["seed"] = seed;
  meta["steps"] = result.steps;
  meta["status"] = to_string(result.status);
  save_checkpoint(dir / "checkpoint.bin", cfg.model, result.params, meta);

  RunOutcome out;
  out.dir = dir;
  out.seed = seed;
  out.status = to_string(result.status);
  out.final_accuracy = result.final_accuracy;
  out.train_seconds = result.seconds;
  out.ok = result.status == TrainStatus::threshold_reached || result.status == TrainStatus::budget_exhausted;
  out.accepted = cfg.eval.min_accuracy == 0.0 || result.final_accuracy >= cfg.eval.min_accuracy;

  nlohmann::ordered_json summary;
  summary["status"] = out.status;
  if (!result.message.empty()) summary["message"] = result.message;
  summary["steps"] = result.steps;
  summary["examples_seen"] = result.steps * cfg.train.batch_size;
  summary["initial_loss"] = result.initial_loss;
  summary["final_accuracy"] = result.final_accuracy;
  summary["min_accuracy"] = cfg.eval.min_accuracy;
  summary["accepted"] = out.accepted;
  summary["seconds"] = result.seconds;
  update_report(dir, "train", summary);
  if (!out.ok) throw NumericError("training stopped: " + out.status + (result.message.empty() ? "" : " (" + result.message + ")"));
  return out;
}

void eval_stage(const fs::path& dir) {
  if (fs::exists(dir / "eval.json")) throw ConfigError("run directory '" + dir.string() + "' is already evaluated");
  const ExperimentConfig cfg = run_config(dir);
  const auto ckpt = load_checkpoint(require_artifact(dir, "checkpoint.bin", "train"));
  auto params = ckpt.params.cast<float>();
  ModelRunner runner(cfg.model, params);
  const SeedStreams seeds(cfg.train.seed);
  const auto& plan = cfg.eval;
  const auto eos = cfg.task.vocab().eos();

  nlohmann::ordered_json j;
  const auto held_out = generate_examples(derive_seed(seeds.eval, "in_distribution"), plan.extrapolation_samples, cfg.task);
  j["in_distribution"] = {{"samples", held_out.size()},
                          {"teacher_forced", string_accuracy(runner, held_out)},
                          {"greedy", greedy_accuracy(runner, held_out, eos)}};

  std::string csv = "length,accuracy,n_samples,seed\n";
  nlohmann::ordered_json ex = nlohmann::ordered_json::array();
  for (const auto& r : extrapolation_sweep(runner, cfg.task, plan.extrapolation_lengths, plan.extrapolation_samples,
                                           derive_seed(seeds.eval, "extrapolation"))) {
    csv += std::to_string(r.length) + "," + format_real(r.accuracy) + "," + std::to_string(r.n_samples) + "," +
           std::to_string(cfg.train.seed) + "\n";
    ex.push_back({{"length", r.length}, {"accuracy", r.accuracy}, {"n_samples", r.n_samples}});
  }
  write_text(dir / "extrapolation.csv", csv);
  j["extrapolation"] = ex;

  if (!plan.duplicate_s.empty()) {
    std::string pcsv = "s,segment,count,preference,errors,error_rate,samples\n";
    nlohmann::ordered_json pref = nlohmann::ordered_json::array();
    for (std::size_t s : plan.duplicate_s) {
      const auto r = duplicate_preference(runner, cfg.task, s, plan.duplicate_samples,
                                          derive_seed(derive_seed(seeds.eval, "duplicates"), s));
      for (std::size_t seg = 0; seg < s; ++seg)
        pcsv += std::to_string(s) + "," + std::to_string(seg + 1) + "," + std::to_string(r.counts[seg]) + "," +
                format_real(r.preference[seg]) + "," + std::to_string(r.errors) + "," + format_real(r.error_rate) +
                "," + std::to_string(r.samples) + "\n";
      pref.push_back({{"s", s}, {"counts", r.counts}, {"preference", r.preference}, {"errors", r.errors},
                      {"error_rate", r.error_rate}, {"samples", r.samples}});
    }
    write_text(dir / "preference.csv", pcsv);
    j["duplicates"] = pref;
  }
  write_json(dir / "eval.json", j);
  update_report(dir, "eval", j["in_distribution"]);
}

void analyze_stage(const fs::path& dir) {
  if (fs::exists(dir / "analysis.json")) throw ConfigError("run directory '" + dir.string() + "' is already analyzed");
  const ExperimentConfig cfg = run_config(dir);
  const auto train = read_json(require_artifact(dir, "train_report.json", "train"));
  nlohmann::ordered_json j;

  const auto vocab = cfg.task.vocab();
  if (vocab.n_positions == 0) {
    j["locality"] = "skipped: the task has no position tokens";
  } else {
    nlohmann::ordered_json reports = nlohmann::ordered_json::array();
    for (const auto& rec : train["records"]) {
      if (!rec.contains("snapshot")) continue;
      const std::size_t step = rec["step"].get<std::size_t>();
      const auto embed = read_matrix_csv(require_artifact(dir, rec["snapshot"].get<std::string>(), "train"));
      const auto rows = position_rows(embed, vocab);
      const auto rep = locality_report(rows, step, cfg.eval.knn_ks, cfg.eval.knn_metric);
      const std::string tag = step_name(step);
      write_text(dir / "analysis" / ("cosine_full_" + tag + ".csv"), matrix_csv(rep.cosine_full));
      for (std::size_t i = 0; i < rep.pca_dims.size(); ++i)
        write_text(dir / "analysis" / ("cosine_pca" + std::to_string(rep.pca_dims[i]) + "_" + tag + ".csv"),
                   matrix_csv(rep.cosine_pca[i]));
      std::string pca2d = "index,x,y,step\n";
      const auto& p2 = rep.pca.front().projected;
      for (std::size_t l = 0; l < rep.L; ++l)
        pca2d += std::to_string(l + 1) + "," + format_real(p2.at(l, 0)) + "," + format_real(p2.at(l, 1)) + "," +
                 std::to_string(step) + "\n";
      write_text(dir / "analysis" / ("pca2d_" + tag + ".csv"), pca2d);
      auto rj = to_json(rep);
      write_json(dir / "analysis" / ("locality_" + tag + ".json"), rj);
      reports.push_back(rj);
    }
    j["locality"] = reports;
  }

  if (cfg.model.is_twostream()) {
    std::vector<GatePoint> points;
    for (const auto& rec : train["records"])
      points.push_back({rec["step"].get<std::size_t>(), rec["gates"].get<std::vector<double>>()});
    const auto series = gate_series(points);
    std::string csv = "step,layer,magnitude\n";
    for (std::size_t t = 0; t < series.steps.size(); ++t)
      for (std::size_t l = 0; l < series.magnitude.size(); ++l)
        csv += std::to_string(series.steps[t]) + "," + std::to_string(l) + "," + format_real(series.magnitude[l][t]) + "\n";
    write_text(dir / "analysis" / "gates.csv", csv);
    j["gates"] = {{"layers", series.magnitude.size()},
                  {"final", points.empty() ? std::vector<double>{} : points.back().magnitude},
                  {"depth_monotone", series.depth_monotone}};
  }
  write_json(dir / "analysis.json", j);

  nlohmann::ordered_json summary;
  if (j["locality"].is_array() && !j["locality"].empty()) {
    const auto& last = j["locality"].back();
    summary["final_step"] = last["step"];
    summary["knn"] = last["knn"];
  }
  if (j.contains("gates")) summary["gates"] = j["gates"];
  update_report(dir, "analysis", summary);
}

std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg_in) {
  const ExperimentConfig cfg = resolve(cfg_in);
  {
    // Programmatic configs get the same exhaustive validation as parsed ones.
    auto j = nlohmann::json::parse(to_json(cfg).dump());
    experiment_config_from_json(j);
  }
  for (auto seed : cfg.seeds) require_fresh(seed_dir(cfg, seed));
  fs::create_directories(experiment_dir(cfg));
  if (!fs::exists(experiment_dir(cfg) / "config.resolved.json"))
    write_json(experiment_dir(cfg) / "config.resolved.json", to_json(cfg));

  std::vector<RunOutcome> outcomes;
  for (auto seed : cfg.seeds) {
    const fs::path dir = seed_dir(cfg, seed);
    RunOutcome out;
    out.dir = dir;
    out.seed = seed;
    std::string stage = "train";
    try {
      out = train_stage(cfg, seed, dir);
      stage = "eval";
      eval_stage(dir);
      stage = "analyze";
      analyze_stage(dir);
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.status = "failed in " + stage;
      nlohmann::ordered_json failure;
      failure["stage"] = stage;
      failure["message"] = e.what();
      fs::create_directories(dir);
      write_json(dir / "failure.json", failure);
      update_report(dir, "failure", failure);
    }
    outcomes.push_back(out);
  }
  return outcomes;
}

std::vector<RunOutcome> run_experiment(const fs::path& config_path) {
  return run_experiment(load_experiment_config(config_path));
}

}  // namespace recall
