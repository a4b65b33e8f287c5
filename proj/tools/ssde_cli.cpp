#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ssde/checkpoint.hpp"
#include "ssde/config.hpp"
#include "ssde/errors.hpp"
#include "ssde/harness.hpp"
#include "ssde/metrics.hpp"

namespace fs = std::filesystem;
using namespace ssde;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::string out;
  bool resume = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value config file");
  app->add_option("--set", c.overrides, "override one key, e.g. --set beta=0.5")->take_all();
  app->add_option("--seed", c.seed, "run seed");
  app->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  cfg.validate();
  return cfg;
}

void print_metrics(const MetricsResult& m) {
  std::cout << std::setprecision(6) << "P = " << m.P << "\nF = " << m.F << "\n";
  if (!m.transfer.empty()) {
    for (const auto& t : m.transfer)
      std::cout << "  task " << t.task_id << ": AUC " << t.auc << " AUC_b " << t.auc_baseline << " FT " << t.ft
                << (t.defined ? "" : " (undefined)") << "\n";
    std::cout << "FT = " << m.mean_ft << "\n";
  }
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, ',')) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw config_error("bad sweep value '" + part + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse sub-network continual RL: allocation, training and evaluation"};
  app.require_subcommand(1);
  Common common;

  auto* alloc = app.add_subcommand("allocate", "allocate masks for every task (no RL)");
  add_common(alloc, common);

  auto* base = app.add_subcommand("baseline", "single-task from-scratch curves for FT, cached");
  add_common(base, common);
  std::vector<int> base_tasks;
  base->add_option("--task", base_tasks, "task indices (default: all)");

  auto* train = app.add_subcommand("train", "run the task sequence");
  add_common(train, common);
  train->add_flag("--resume", common.resume, "continue from OUT/checkpoint.bin");
  bool with_baselines = false;
  train->add_flag("--baselines", with_baselines, "compute FT against cached baselines");
  int stop_after = 0;
  train->add_option("--stop-after", stop_after, "stop after this many tasks (for resume tests)");

  auto* eval = app.add_subcommand("eval", "re-evaluate every task in a checkpoint");
  add_common(eval, common);
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file (default OUT/checkpoint.bin)");

  auto* metrics = app.add_subcommand("metrics", "P, F and FT from eval CSV files");
  add_common(metrics, common);
  std::string eval_csv, baseline_csv;
  int64_t delta = 0;
  metrics->add_option("--eval", eval_csv, "eval CSV (default OUT/eval.csv)");
  metrics->add_option("--baseline-csv", baseline_csv, "baseline curves, one per task");
  metrics->add_option("--delta", delta, "steps per task (default from config)");

  auto* sw = app.add_subcommand("sweep", "one run per parameter value");
  add_common(sw, common);
  std::string sweep_param = "beta", sweep_values;
  sw->add_option("--param", sweep_param, "beta or tau")->check(CLI::IsMember({"beta", "tau"}));
  sw->add_option("--values", sweep_values, "comma-separated values")->required();
  sw->add_flag("--baselines", with_baselines, "compute FT against cached baselines");

  auto* exp = app.add_subcommand("export-masks", "mask files and similarity matrices from a checkpoint");
  add_common(exp, common);
  std::string exp_ckpt, exp_dir;
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint file (default OUT/checkpoint.bin)");
  exp->add_option("--dir", exp_dir, "target directory (default OUT/masks)");

  auto* abl = app.add_subcommand("ablate", "ablation arms over several seeds");
  add_common(abl, common);
  std::vector<std::string> arms = ablation_arms();
  std::vector<uint64_t> seeds{1, 2, 3};
  abl->add_option("--arms", arms, "subset of full,no_beta,no_dormant,global_only,redo")->delimiter(',');
  abl->add_option("--seeds", seeds, "run seeds")->delimiter(',');
  abl->add_flag("--baselines", with_baselines, "compute FT against cached baselines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const RunConfig cfg = resolve(common);
    const fs::path out(cfg.out);

    if (*alloc) {
      const auto rep = allocate_only(cfg);
      fs::create_directories(out);
      std::ofstream(out / "masks.txt") << mask_manifest(rep.masks);
      std::ofstream timing(out / "alloc_timing.csv");
      timing << std::setprecision(9) << "task_id,seconds\n";
      for (std::size_t i = 0; i < rep.masks.size(); ++i) timing << rep.masks[i].task_id << ',' << rep.seconds[i] << '\n';
      std::cout << "allocated " << rep.masks.size() << " tasks in " << rep.total_seconds << " s\n";
      for (const auto& m : rep.masks) {
        std::cout << "  task " << m.task_id << " density";
        for (double d : hidden_density(m)) std::cout << ' ' << std::setprecision(3) << d;
        std::cout << '\n';
      }
    } else if (*base) {
      const auto suite = make_suite(cfg);
      const auto rep = allocate_only(cfg);
      if (base_tasks.empty())
        for (std::size_t i = 0; i < suite.size(); ++i) base_tasks.push_back(static_cast<int>(i));
      for (int k : base_tasks) {
        if (k < 0 || k >= static_cast<int>(suite.size())) throw invalid_input("--task out of range");
        const auto& spec = suite[static_cast<std::size_t>(k)];
        const auto curve = baseline_curve(cfg, spec, rep.masks[static_cast<std::size_t>(k)]);
        std::cout << "task " << k << ": AUC " << area_under_curve(curve, 0, cfg.steps_per_task) << "  "
                  << baseline_cache_path(cfg, spec, rep.masks[static_cast<std::size_t>(k)]).string() << '\n';
      }
    } else if (*train) {
      RunOptions ro;
      ro.resume = common.resume;
      ro.with_baselines = with_baselines;
      if (stop_after > 0) ro.stop_after = stop_after;
      const auto art = run_sequence(cfg, ro);
      if (art.complete)
        print_metrics(*art.metrics);
      else
        std::cout << "stopped after " << art.tasks_done << " tasks; continue with --resume\n";
    } else if (*eval) {
      const fs::path path = eval_ckpt.empty() ? out / "checkpoint.bin" : fs::path(eval_ckpt);
      const auto ck = load_checkpoint(path);
      const auto ck_cfg = parse_config(ck.config_text);
      const auto rates = evaluate_checkpoint(ck, ck_cfg);
      for (std::size_t k = 0; k < rates.size(); ++k) {
        const double stored = ck.curves[k].samples.back().rate;
        std::cout << "task " << ck.masks[k].task_id << ": success " << rates[k] << " (recorded " << stored << ")"
                  << (rates[k] == stored ? "" : "  MISMATCH") << '\n';
      }
    } else if (*metrics) {
      const auto curves = read_eval_csv(eval_csv.empty() ? out / "eval.csv" : fs::path(eval_csv));
      std::optional<std::vector<EvalCurve>> baselines;
      if (!baseline_csv.empty()) baselines = read_eval_csv(baseline_csv);
      const auto m = compute_metrics(curves, delta > 0 ? delta : cfg.steps_per_task, baselines);
      fs::create_directories(out);
      write_metrics_csv(out / "metrics.csv", m);
      print_metrics(m);
    } else if (*sw) {
      const auto rows = sweep(cfg, sweep_param, parse_values(sweep_values), with_baselines);
      write_sweep_csv(out / ("sweep_" + sweep_param + ".csv"), sweep_param, rows);
      for (const auto& r : rows)
        std::cout << sweep_param << ' ' << r.value << ": P " << r.P << " F " << r.F << " FT " << r.FT
                  << (r.error.empty() ? "" : "  error: " + r.error) << '\n';
    } else if (*exp) {
      const auto ck = load_checkpoint(exp_ckpt.empty() ? out / "checkpoint.bin" : fs::path(exp_ckpt));
      const fs::path dir = exp_dir.empty() ? out / "masks" : fs::path(exp_dir);
      export_masks(ck, dir);
      std::cout << "wrote masks for " << ck.masks.size() << " tasks to " << dir.string() << '\n';
    } else if (*abl) {
      const auto rows = ablation(cfg, arms, seeds, with_baselines);
      fs::create_directories(out);
      write_ablation_csv(out / "ablation.csv", rows);
      std::cout << "arm          runs  P        F        FT\n";
      for (const auto& s : summarize_ablation(rows))
        std::cout << std::left << std::setw(13) << s.arm << std::setw(6) << s.runs << std::setw(9) << s.mean_P
                  << std::setw(9) << s.mean_F << s.mean_FT << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::runtime);
  }
  return 0;
}
