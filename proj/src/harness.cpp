#include "ssde/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ssde/errors.hpp"
#include "ssde/sac.hpp"

namespace ssde {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void say(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << msg << '\n';
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream os(path, std::ios::out | mode);
  if (!os) throw runtime_error("cannot write " + path.string());
  os << std::setprecision(17);
  return os;
}

std::string fmt_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void write_train_log(const fs::path& path, const TaskResult& res, int64_t base) {
  auto os = open_out(path);
  os << "step,global_step,critic_loss,actor_loss,alpha,entropy,resets,episodes,recent_success\n";
  for (const auto& r : res.log)
    os << r.step << ',' << base + r.step << ',' << r.critic_loss << ',' << r.actor_loss << ',' << r.alpha << ','
       << r.entropy << ',' << r.resets << ',' << r.episodes << ',' << r.recent_success << '\n';
}

void write_dormant_log(const fs::path& path, const TaskResult& res) {
  auto os = open_out(path);
  os << "step,layer,neuron,score,dormant,reset_count\n";
  for (const auto& r : res.dormant)
    os << r.step << ',' << r.layer << ',' << r.neuron << ',' << r.score << ',' << (r.dormant ? 1 : 0) << ','
       << r.reset_count << '\n';
}

void append_diagnostics(const fs::path& path, const TaskDiagnostics& d) {
  const bool fresh = !fs::exists(path);
  auto os = open_out(path, std::ios::app);
  if (fresh)
    os << "task_id,reset_events,reset_coordinates,updates,clipped_actions,alloc_seconds,train_seconds,utilization\n";
  os << d.task_id << ',' << d.reset_events << ',' << d.reset_coordinates << ',' << d.updates << ','
     << d.clipped_actions << ',' << d.alloc_seconds << ',' << d.train_seconds << ',' << d.utilization << '\n';
}

MaskedForward<float> bound_view(const NetworkShape& shape, const MaskSet& masks, const FrozenSnapshot& frozen,
                                double beta, const Params<float>& params) {
  MaskedForward<float> view(shape, TaskBinding::bind(masks, frozen), static_cast<float>(beta));
  view.load(params);
  return view;
}

}  // namespace

int log_level() {
  const char* v = std::getenv("SSDE_LOG_LEVEL");
  if (!v || !*v) return 1;
  return std::atoi(v);
}

std::vector<TaskSpec> make_suite(const RunConfig& cfg) { return repeated_suite(cfg.tasks, cfg.repeats, cfg.suite_seed); }

NetworkShape actor_shape(const RunConfig& cfg) {
  NetworkShape s;
  s.widths.push_back(kObservationDim);
  s.widths.insert(s.widths.end(), cfg.sac.actor_hidden.begin(), cfg.sac.actor_hidden.end());
  s.widths.push_back(2 * kActionDim);
  s.leaky_slope = cfg.sac.leaky_slope;
  return s;
}

std::vector<TaskEmbedding> suite_embeddings(const RunConfig& cfg, const std::vector<TaskSpec>& suite) {
  std::vector<TaskEmbedding> out;
  if (cfg.embed_file.empty()) {
    for (const auto& spec : suite) {
      auto e = embed_description({spec.task_id, spec.description}, cfg.embed_dim, cfg.embed_seed);
      e.task_id = spec.task_id;
      out.push_back(std::move(e));
    }
    return out;
  }
  const auto table = load_embeddings(cfg.embed_file, cfg.embed_dim);
  for (const auto& spec : suite) {
    const int key = spec.task_id % cfg.tasks;
    const TaskEmbedding* hit = nullptr;
    for (const auto& e : table)
      if (e.task_id == key) hit = &e;
    if (!hit) throw config_error("embedding file has no row for task " + std::to_string(key));
    auto e = *hit;
    e.task_id = spec.task_id;
    out.push_back(std::move(e));
  }
  return out;
}

AllocationReport allocate_only(const RunConfig& cfg) {
  cfg.validate();
  const auto suite = make_suite(cfg);
  const auto embeddings = suite_embeddings(cfg, suite);
  const auto shape = actor_shape(cfg);
  AllocationReport rep;
  const auto t_all = Clock::now();
  for (const auto& e : embeddings) {
    const auto t0 = Clock::now();
    rep.masks.push_back(allocate_task(e, cfg.alloc, shape.widths));
    rep.seconds.push_back(seconds_since(t0));
  }
  rep.total_seconds = seconds_since(t_all);
  return rep;
}

std::string mask_manifest(const std::vector<MaskSet>& masks) {
  std::ostringstream os;
  os << "# task_id layer active bits\n";
  for (const auto& m : masks)
    for (int l = 1; l < m.layers(); ++l) {
      const auto& phi = m.phi[static_cast<std::size_t>(l)];
      os << m.task_id << ' ' << l << ' ' << phi.popcount() << ' ' << phi.to_string() << '\n';
    }
  return os.str();
}

RunArtifacts run_sequence(const RunConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  if (opt.resume && !cfg.sac.reset_critics)
    throw config_error("resume needs sac.reset_critics = true (carried critics are not checkpointed)");
  const fs::path out(cfg.out);
  fs::create_directories(out);
  const auto ckpt_path = out / "checkpoint.bin";

  const auto suite = make_suite(cfg);
  const int n = static_cast<int>(suite.size());
  const auto embeddings = suite_embeddings(cfg, suite);
  const auto shape = actor_shape(cfg);
  const int64_t delta = cfg.steps_per_task;

  SacAgent agent(cfg.sac, kObservationDim, kActionDim, cfg.actor_seed());
  FrozenLedger ledger(shape.widths);
  RunArtifacts art;
  int start = 0;

  if (opt.resume && fs::exists(ckpt_path)) {
    auto ck = load_checkpoint(ckpt_path);
    if (ck.config_hash != cfg.hash())
      throw config_error("refusing to resume: checkpoint config hash " + hex64(ck.config_hash) +
                         " differs from the current config " + hex64(cfg.hash()));
    if (ck.actor_shape.widths != shape.widths) throw format_error("checkpoint network widths differ from config");
    if (ck.global_step != static_cast<int64_t>(ck.tasks_done) * delta)
      throw format_error("checkpoint step counter is inconsistent with its task cursor");
    agent.actor().restore(shape, ck.actor_params, ck.actor_init);
    ledger = ck.ledger();
    art.masks = ck.masks;
    art.curves = ck.curves;
    start = ck.tasks_done;
    say(1, "resuming after task " + std::to_string(start) + " of " + std::to_string(n));
  } else {
    for (const char* f : {"diagnostics.csv", "metrics.csv", "eval.csv"}) fs::remove(out / f);
  }
  {
    auto os = open_out(out / "config.resolved");
    os << cfg.to_text();
  }

  for (int k = start; k < n; ++k) {
    const auto& spec = suite[static_cast<std::size_t>(k)];
    const auto t_alloc = Clock::now();
    const MaskSet masks = allocate_task(embeddings[static_cast<std::size_t>(k)], cfg.alloc, shape.widths);
    TaskDiagnostics diag;
    diag.task_id = spec.task_id;
    diag.alloc_seconds = seconds_since(t_alloc);

    agent.begin_task(TaskBinding::bind(masks, ledger.current()), static_cast<float>(cfg.beta), cfg.task_seed(k));
    const int64_t base = static_cast<int64_t>(k) * delta;
    EvalCurve curve;
    curve.task_id = spec.task_id;
    curve.add(base, evaluate_policy(agent.actor_view(), spec, cfg.eval_episodes, cfg.eval_seed()));

    TrainTaskOptions topt;
    topt.steps = delta;
    topt.eval_interval = cfg.eval_interval;
    topt.log_interval = cfg.log_interval;
    topt.dormant = cfg.dormant;
    topt.seed = cfg.task_seed(k);
    const auto t_train = Clock::now();
    topt.on_eval = [&](int64_t t) {
      const double rate = evaluate_policy(agent.actor_view(), spec, cfg.eval_episodes, cfg.eval_seed());
      curve.add(base + t, rate);
      // Earlier tasks, each through its own pre-task snapshot and the live parameters.
      for (int j = 0; j < k; ++j) {
        const auto view = bound_view(shape, art.masks[static_cast<std::size_t>(j)], ledger.pre_task(j), cfg.beta,
                                     agent.actor().params());
        art.curves[static_cast<std::size_t>(j)].add(
            base + t, evaluate_policy(view, suite[static_cast<std::size_t>(j)], cfg.eval_episodes, cfg.eval_seed()));
      }
      std::ostringstream os;
      os << "  task " << spec.task_id << " step " << t << " success " << rate << " (" << std::fixed
         << std::setprecision(1) << seconds_since(t_train) << "s)";
      say(2, os.str());
      return false;
    };
    const auto res = train_task(agent, spec, topt);
    diag.train_seconds = seconds_since(t_train);
    diag.reset_events = res.reset_events;
    diag.reset_coordinates = res.reset_coordinates;
    diag.updates = res.updates;
    diag.clipped_actions = res.clipped_actions;
    write_train_log(out / ("train_task" + std::to_string(k) + ".csv"), res, base);
    write_dormant_log(out / ("dormant_task" + std::to_string(k) + ".csv"), res);

    ledger.commit(masks);
    art.masks.push_back(masks);
    art.curves.push_back(std::move(curve));
    diag.utilization = utilization(ledger);

    Checkpoint ck;
    ck.config_hash = cfg.hash();
    ck.config_text = cfg.to_text();
    ck.tasks_done = k + 1;
    ck.global_step = base + delta;
    ck.beta = cfg.beta;
    ck.run_seed = cfg.seed;
    ck.actor_seed = cfg.actor_seed();
    ck.eval_seed = cfg.eval_seed();
    ck.alloc_seed = cfg.alloc.global_seed;
    ck.embed_seed = cfg.embed_seed;
    ck.actor_shape = shape;
    ck.masks = art.masks;
    ck.archive = ledger.archive();
    ck.actor_params = agent.actor().params();
    ck.actor_init = agent.actor().init_store();
    ck.curves = art.curves;
    save_checkpoint(ckpt_path, ck);
    write_eval_csv(out / "eval.csv", art.curves);
    append_diagnostics(out / "diagnostics.csv", diag);
    {
      auto os = open_out(out / "masks.txt");
      os << mask_manifest(art.masks);
    }
    art.diagnostics.push_back(diag);

    std::ostringstream os;
    os << "task " << k + 1 << "/" << n << " (" << spec.description << "): final success "
       << art.curves.back().samples.back().rate << ", resets " << diag.reset_events << ", utilization "
       << std::setprecision(3) << diag.utilization << ", " << std::fixed << std::setprecision(1)
       << diag.train_seconds << "s";
    say(1, os.str());

    if (opt.stop_after && k + 1 >= *opt.stop_after && k + 1 < n) {
      art.tasks_done = k + 1;
      return art;
    }
  }

  art.tasks_done = n;
  art.complete = true;
  std::optional<std::vector<EvalCurve>> baselines;
  if (opt.with_baselines) {
    baselines.emplace();
    for (int k = 0; k < n; ++k)
      baselines->push_back(baseline_curve(cfg, suite[static_cast<std::size_t>(k)], art.masks[static_cast<std::size_t>(k)]));
  }
  art.metrics = compute_metrics(art.curves, delta, baselines);
  write_metrics_csv(out / "metrics.csv", *art.metrics);
  return art;
}

MaskedForward<float> task_view(const Checkpoint& ckpt, int task_index) {
  if (task_index < 0 || task_index >= ckpt.tasks_done) throw invalid_input("task index not in checkpoint");
  const auto ledger = ckpt.ledger();
  return bound_view(ckpt.actor_shape, ckpt.masks[static_cast<std::size_t>(task_index)], ledger.pre_task(task_index),
                    ckpt.beta, ckpt.actor_params);
}

std::vector<double> evaluate_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg) {
  const auto suite = make_suite(cfg);
  if (ckpt.tasks_done > static_cast<int>(suite.size())) throw format_error("checkpoint has more tasks than the suite");
  const auto ledger = ckpt.ledger();
  std::vector<double> rates;
  for (int k = 0; k < ckpt.tasks_done; ++k) {
    const auto view = bound_view(ckpt.actor_shape, ckpt.masks[static_cast<std::size_t>(k)], ledger.pre_task(k),
                                 ckpt.beta, ckpt.actor_params);
    rates.push_back(evaluate_policy(view, suite[static_cast<std::size_t>(k)], cfg.eval_episodes, ckpt.eval_seed));
  }
  return rates;
}

fs::path baseline_cache_path(const RunConfig& cfg, const TaskSpec& spec, const MaskSet& masks) {
  std::string bits;
  for (const auto& phi : masks.phi) bits += phi.to_string() + "|";
  const uint64_t run = derive_seed(fnv1a(bits), static_cast<uint64_t>(cfg.steps_per_task),
                                   static_cast<uint64_t>(cfg.eval_interval), static_cast<uint64_t>(cfg.eval_episodes),
                                   cfg.seed);
  return fs::path(cfg.baseline_cache) /
         ("task" + std::to_string(spec.task_id) + "-" + hex64(spec.hash()) + "-" + hex64(cfg.sac.hash()) + "-" +
          hex64(run) + ".csv");
}

EvalCurve baseline_curve(const RunConfig& cfg, const TaskSpec& spec, const MaskSet& masks) {
  const auto path = baseline_cache_path(cfg, spec, masks);
  if (fs::exists(path)) {
    auto curves = read_eval_csv(path);
    if (curves.size() != 1) throw format_error(path.string() + ": expected one baseline curve");
    return curves.front();
  }
  say(1, "baseline for task " + std::to_string(spec.task_id) + " -> " + path.string());
  const auto shape = actor_shape(cfg);
  SacAgent agent(cfg.sac, kObservationDim, kActionDim, cfg.actor_seed());
  agent.begin_task(TaskBinding::bind(masks, empty_snapshot(shape.widths)), static_cast<float>(cfg.beta),
                   cfg.task_seed(spec.task_id));
  EvalCurve curve;
  curve.task_id = spec.task_id;
  curve.add(0, evaluate_policy(agent.actor_view(), spec, cfg.eval_episodes, cfg.eval_seed()));
  TrainTaskOptions topt;
  topt.steps = cfg.steps_per_task;
  topt.eval_interval = cfg.eval_interval;
  topt.log_interval = cfg.log_interval;
  topt.dormant = cfg.dormant;
  topt.dormant.variant = DormantVariant::off;
  topt.seed = cfg.task_seed(spec.task_id);
  topt.record_dormant_scores = false;
  topt.on_eval = [&](int64_t t) {
    curve.add(t, evaluate_policy(agent.actor_view(), spec, cfg.eval_episodes, cfg.eval_seed()));
    return false;
  };
  train_task(agent, spec, topt);
  fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  write_eval_csv(tmp, {curve});
  fs::rename(tmp, path);
  return curve;
}

std::vector<SweepRow> sweep(const RunConfig& cfg, const std::string& parameter, const std::vector<double>& values,
                            bool with_baselines) {
  if (values.empty()) throw config_error("sweep needs at least one value");
  if (parameter != "beta" && parameter != "tau") throw config_error("sweep parameter must be beta or tau");
  std::vector<SweepRow> rows;
  for (double v : values) {
    SweepRow row;
    row.value = v;
    row.label = parameter + "_" + fmt_value(v);
    try {
      RunConfig c = cfg;
      if (parameter == "beta")
        c.beta = v;
      else
        c.dormant.tau = v;
      c.out = (fs::path(cfg.out) / row.label).string();
      RunOptions ro;
      ro.with_baselines = with_baselines;
      const auto art = run_sequence(c, ro);
      row.P = art.metrics->P;
      row.F = art.metrics->F;
      row.FT = art.metrics->mean_ft;
    } catch (const std::exception& e) {
      row.P = row.F = row.FT = std::nan("");
      row.error = e.what();
      say(1, "sweep arm " + row.label + " failed: " + row.error);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const fs::path& path, const std::string& parameter, const std::vector<SweepRow>& rows) {
  auto os = open_out(path);
  os << parameter << ",P,F,FT,error\n";
  for (const auto& r : rows) os << r.value << ',' << r.P << ',' << r.F << ',' << r.FT << ',' << r.error << '\n';
}

const std::vector<std::string>& ablation_arms() {
  static const std::vector<std::string> arms = {"full", "no_beta", "no_dormant", "global_only", "redo"};
  return arms;
}

RunConfig apply_arm(RunConfig cfg, const std::string& arm) {
  if (arm == "full") return cfg;
  if (arm == "no_beta") {
    cfg.beta = 1.0;
  } else if (arm == "no_dormant") {
    cfg.dormant.variant = DormantVariant::off;
  } else if (arm == "global_only") {
    cfg.alloc.use_local = false;
  } else if (arm == "redo") {
    cfg.dormant.variant = DormantVariant::redo;
  } else {
    throw config_error("unknown ablation arm '" + arm + "'");
  }
  return cfg;
}

std::vector<AblationRow> ablation(const RunConfig& cfg, const std::vector<std::string>& arms,
                                  const std::vector<uint64_t>& seeds, bool with_baselines) {
  if (arms.empty() || seeds.empty()) throw config_error("ablation needs arms and seeds");
  for (const auto& a : arms) apply_arm(cfg, a);  // reject unknown names up front
  std::vector<AblationRow> rows;
  for (uint64_t seed : seeds) {
    for (const auto& arm : arms) {
      AblationRow row;
      row.arm = arm;
      row.seed = seed;
      try {
        RunConfig c = apply_arm(cfg, arm);
        c.seed = seed;
        c.out = (fs::path(cfg.out) / arm / ("seed_" + std::to_string(seed))).string();
        say(1, "ablation arm " + arm + " seed " + std::to_string(seed));
        RunOptions ro;
        ro.with_baselines = with_baselines;
        const auto art = run_sequence(c, ro);
        row.P = art.metrics->P;
        row.F = art.metrics->F;
        row.FT = art.metrics->mean_ft;
      } catch (const std::exception& e) {
        row.P = row.F = row.FT = std::nan("");
        row.error = e.what();
        say(1, "ablation arm " + arm + " failed: " + row.error);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows) {
  std::vector<AblationSummary> out;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const AblationSummary& s) { return s.arm == r.arm; });
    if (it == out.end()) {
      out.push_back({r.arm, 0.0, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    it->mean_P += r.P;
    it->mean_F += r.F;
    it->mean_FT += r.FT;
    ++it->runs;
  }
  for (auto& s : out) {
    s.mean_P /= s.runs;
    s.mean_F /= s.runs;
    s.mean_FT /= s.runs;
  }
  return out;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  auto os = open_out(path);
  os << "arm,seed,P,F,FT,error\n";
  for (const auto& r : rows) os << r.arm << ',' << r.seed << ',' << r.P << ',' << r.F << ',' << r.FT << ',' << r.error << '\n';
  os << "# summary\narm,runs,mean_P,mean_F,mean_FT\n";
  for (const auto& s : summarize_ablation(rows))
    os << s.arm << ',' << s.runs << ',' << s.mean_P << ',' << s.mean_F << ',' << s.mean_FT << '\n';
}

void export_masks(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& masks = ckpt.masks;
  if (masks.empty()) throw invalid_input("checkpoint has no completed task");
  const int layers = masks.front().layers();
  for (const auto& m : masks)
    for (int l = 1; l < layers; ++l) {
      auto os = open_out(dir / ("task" + std::to_string(m.task_id) + "_layer" + std::to_string(l) + ".txt"));
      os << m.phi[static_cast<std::size_t>(l)].to_string() << '\n';
    }
  auto write_matrix = [&](const fs::path& path, int layer) {
    auto os = open_out(path);
    os << "task_id";
    for (const auto& m : masks) os << ',' << m.task_id;
    os << '\n';
    for (const auto& a : masks) {
      os << a.task_id;
      for (const auto& b : masks) os << ',' << mask_similarity(a, b, layer);
      os << '\n';
    }
  };
  for (int l = 1; l < layers; ++l) write_matrix(dir / ("similarity_layer" + std::to_string(l) + ".csv"), l);
  write_matrix(dir / "similarity_mean.csv", kMeanLayer);
}

BitVector read_mask_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw invalid_input("cannot open mask file " + path.string());
  std::string line;
  std::getline(is, line);
  return BitVector::from_string(line);
}

std::vector<std::vector<double>> read_similarity_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw invalid_input("cannot open " + path.string());
  std::string line;
  std::getline(is, line);  // header
  std::vector<std::vector<double>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');  // task id
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw format_error(path.string() + ": bad similarity value '" + cell + "'");
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace ssde
