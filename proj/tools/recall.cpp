#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "recall/cli/artifacts.hpp"
#include "recall/cli/experiment.hpp"
#include "recall/cli/plots.hpp"
#include "recall/core/errors.hpp"
#include "recall/task/dataset.hpp"
#include "recall/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace recall;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitAcceptance = 4;

// Config file plus command-line overrides, applied to the parsed JSON before validation.
struct ConfigSource {
  std::string path;
  std::vector<std::string> sets;                 // section.key=value
  std::map<std::string, std::string> train_flags;  // train.<key> from --<key>

  void add_options(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "Experiment config (JSON with comments)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override a field: section.key=value (value parsed as JSON, else string)");
  }

  void add_train_flags(CLI::App* cmd) {
    const auto defaults = to_json(TrainConfig{});
    for (const auto& [key, value] : defaults.items()) {
      if (key == "seed") continue;
      cmd->add_option_function<std::string>(
             "--" + key, [this, key = key](const std::string& v) { train_flags["train." + key] = v; },
             "train." + key + " (default " + value.dump() + ")")
          ->type_name("VALUE");
    }
  }

  static nlohmann::json parse_value(const std::string& v) {
    try {
      return nlohmann::json::parse(v);
    } catch (const nlohmann::json::parse_error&) {
      return v;
    }
  }

  static void apply(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ConfigError("--set: bad field path '" + path + "'");
      if (dot == std::string::npos) {
        (*node)[part] = parse_value(assignment.substr(eq + 1));
        return;
      }
      if (!node->contains(part)) (*node)[part] = nlohmann::json::object();
      node = &(*node)[part];
      start = dot + 1;
    }
  }

  ExperimentConfig load() const {
    auto j = parse_config_text(read_text(path), path);
    for (const auto& s : sets) apply(j, s);
    for (const auto& [k, v] : train_flags) apply(j, k + "=" + v);
    return experiment_config_from_json(j);
  }
};

void print_outcome(const RunOutcome& o) {
  std::printf("%s: %s, final accuracy %.4f, %.1f s%s\n", o.dir.string().c_str(), o.status.c_str(), o.final_accuracy,
              o.train_seconds, o.accepted ? "" : " [below min_accuracy]");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recall: in-context retrieval experiments with Transformer, SSM and hybrid models"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 2 config error, 3 runtime failure, 4 acceptance check failed.\n"
             "Run directories resolve against $RECALL_OUTPUT_ROOT (default ./runs).");

  ConfigSource gen_src, train_src, run_src;
  std::size_t gen_count = 100;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write task examples as JSON lines");
  gen_src.add_options(gen);
  gen->add_option("-n,--count", gen_count, "Number of examples")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Stream seed")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "Output file (default stdout)");

  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  std::string train_out;
  auto* tr = app.add_subcommand("train", "Train one seed and write the training artifacts");
  train_src.add_options(tr);
  train_src.add_train_flags(tr);
  tr->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { train_seed = s, train_seed_set = true; }, "Seed (default: first of seeds)");
  tr->add_option("-o,--out", train_out, "Run directory (default <output root>/<output_dir>/seed-<seed>)");

  std::string eval_dir, analyze_dir;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained run: extrapolation and duplicate-query sweeps");
  ev->add_option("run", eval_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  auto* an = app.add_subcommand("analyze", "Embedding-locality and gate analysis of a trained run");
  an->add_option("run", analyze_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* run = app.add_subcommand("run", "generate, train, eval and analyze every seed of an experiment");
  run_src.add_options(run);
  run_src.add_train_flags(run);

  std::string plot_dir, plot_kind, plot_out;
  auto* plots = app.add_subcommand("emit-plots", "Write figure tables from a run directory");
  plots->add_option("run", plot_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  plots->add_option("-k,--kind", plot_kind, "Figure kind (default: all applicable)");
  plots->add_option("-o,--out", plot_out, "Output file for one kind (default stdout) or directory for all kinds");

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  auto* cmp = app.add_subcommand("compare", "Compare runs that share a task configuration");
  cmp->add_option("runs", compare_dirs, "Run directories")->required();
  cmp->add_option("-o,--out", compare_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const auto cfg = gen_src.load();
      const auto examples = generate_examples(gen_seed, gen_count, cfg.task);
      if (gen_out.empty()) write_jsonl(std::cout, examples);
      else write_jsonl(gen_out, examples);
    } else if (*tr) {
      const auto cfg = train_src.load();
      const auto seed = train_seed_set ? train_seed : cfg.seeds.front();
      const fs::path dir = train_out.empty() ? seed_dir(cfg, seed) : fs::path(train_out);
      const auto outcome = train_stage(cfg, seed, dir);
      print_outcome(outcome);
      if (!outcome.accepted) return kExitAcceptance;
    } else if (*ev) {
      eval_stage(eval_dir);
      std::cout << read_json(fs::path(eval_dir) / "eval.json")["in_distribution"].dump() << "\n";
    } else if (*an) {
      analyze_stage(analyze_dir);
      std::cout << load_report(analyze_dir)["analysis"].dump() << "\n";
    } else if (*run) {
      const auto outcomes = run_experiment(run_src.load());
      bool ok = true, accepted = true;
      for (const auto& o : outcomes) {
        print_outcome(o);
        ok = ok && o.ok;
        accepted = accepted && o.accepted;
      }
      if (!ok) return kExitRuntime;
      if (!accepted) return kExitAcceptance;
    } else if (*plots) {
      if (!plot_kind.empty()) {
        const auto table = emit_plot_data(plot_dir, plot_kind);
        if (plot_out.empty()) std::cout << table;
        else write_text(plot_out, table);
      } else {
        if (plot_out.empty()) throw ConfigError("emit-plots without --kind needs --out DIR");
        for (const auto& k : emit_all_plots(plot_dir, plot_out)) std::cout << k << "\n";
      }
    } else if (*cmp) {
      const auto report = compare_runs(std::vector<fs::path>(compare_dirs.begin(), compare_dirs.end()));
      if (compare_out.empty()) std::cout << report.dump(2) << "\n";
      else write_json(compare_out, report);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
