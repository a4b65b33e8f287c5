// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   acceptance [criterion numbers...]     default: all of 1..10
//
// Run outputs go under $SSDE_ACCEPT_DIR (default ./acceptance_runs).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "netgen.hpp"
#include "oracles.hpp"
#include "ssde/allocation.hpp"
#include "ssde/checkpoint.hpp"
#include "ssde/dormant.hpp"
#include "ssde/harness.hpp"
#include "ssde/metrics.hpp"
#include "ssde/sac.hpp"
#include "ssde/sparse_coding.hpp"

using namespace ssde;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path root_dir() {
  const char* d = std::getenv("SSDE_ACCEPT_DIR");
  return d ? fs::path(d) : fs::path("acceptance_runs");
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// Desk-scale sequence config shared by criteria 1, 5 and 10.
RunConfig desk(const fs::path& out, int tasks) {
  RunConfig c;
  c.tasks = tasks;
  c.out = out.string();
  c.baseline_cache = (root_dir() / "baselines").string();
  return c;
}

// The 5-task run is shared by criteria 1 and 5.
const RunArtifacts& five_task_run() {
  static std::optional<RunArtifacts> art;
  if (!art) {
    const auto cfg = desk(root_dir() / "c1_sequence", 5);
    std::cerr << "[1] 5 tasks x " << cfg.steps_per_task << " steps\n";
    art = run_sequence(cfg);
  }
  return *art;
}

Outcome zero_forgetting() {
  const auto cfg = desk(root_dir() / "c1_sequence", 5);
  const auto t0 = Clock::now();
  const auto& art = five_task_run();
  const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
  const auto ck = load_checkpoint(fs::path(cfg.out) / "checkpoint.bin");
  const auto rates = evaluate_checkpoint(ck, cfg);
  bool exact = true;
  for (std::size_t k = 0; k < rates.size(); ++k) exact = exact && rates[k] == art.curves[k].samples.back().rate;
  // every evaluation of a finished task equals its end-of-window value
  bool frozen = true;
  for (std::size_t k = 0; k < art.curves.size(); ++k) {
    const int64_t end = static_cast<int64_t>(k + 1) * cfg.steps_per_task;
    for (const auto& s : art.curves[k].samples)
      if (s.step >= end && s.rate != art.curves[k].at(end)) frozen = false;
  }
  const double F = art.metrics->F;
  std::string finals;
  for (const auto& c : art.curves) finals += num(c.samples.back().rate, 3) + " ";
  return {F == 0.0 && exact && frozen,
          "F = " + num(F) + ", re-eval bit-exact " + (exact ? "yes" : "no") + ", later evals unchanged " +
              (frozen ? "yes" : "no") + ", P = " + num(art.metrics->P, 3) + " (final " + finals + "), " +
              num(minutes, 3) + " min"};
}

Outcome lasso_oracle() {
  Rng rng(20240611);
  double worst_obj = 0.0, worst_kkt = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 8);
    const int n = 1 + static_cast<int>(rng.next_u64() % 32);
    Eigen::MatrixXd D(m, n);
    Eigen::VectorXd e(m);
    for (Eigen::Index k = 0; k < D.size(); ++k) D.data()[k] = rng.normal();
    for (int k = 0; k < m; ++k) e(k) = rng.normal();
    const double lmax = (D.transpose() * e).cwiseAbs().maxCoeff();
    const double lambda = lmax * rng.uniform(0.01, 0.9);
    const auto code = solve_lasso_lars(D, e, lambda);
    const auto ref = oracle::lasso_cd(D, e, lambda);
    worst_obj = std::max(worst_obj, std::abs(oracle::lasso_obj(D, e, code.values, lambda) - oracle::lasso_obj(D, e, ref, lambda)));
    worst_kkt = std::max(worst_kkt, oracle::kkt_residual(D, e, code.values, lambda));
  }
  return {worst_obj <= 1e-8 && worst_kkt <= 1e-8,
          "100 instances, worst objective gap " + num(worst_obj, 3) + ", worst KKT residual " + num(worst_kkt, 3)};
}

Outcome gradient_check() {
  Rng rng(7);
  double worst = 0.0;
  long checked = 0, kinks = 0;
  bool masked = true;
  int mixed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = netgen::random_net(rng);
    bool any_frozen = false, any_free = false;
    for (const auto& lb : net.binding.layers) {
      any_frozen = any_frozen || lb.frozen.popcount() > 0;
      any_free = any_free || lb.frozen.popcount() < lb.frozen.rows() * lb.frozen.cols();
    }
    mixed += any_frozen && any_free ? 1 : 0;
    for (double beta : {0.0, 0.3, 1.0}) {
      const auto r = netgen::grad_check(net, beta, 1000 + static_cast<uint64_t>(trial));
      worst = std::max(worst, r.worst_rel);
      checked += r.checked;
      kinks += r.skipped_kinks;
      masked = masked && r.masked_ok;
    }
  }
  return {worst <= 1e-5 && masked && checked > 0,
          "20 shapes x 3 betas (" + std::to_string(mixed) + " with mixed frozen/trainable), " +
              std::to_string(checked) + " coordinates, worst relative error " + num(worst, 3) + ", " +
              std::to_string(kinks) + " skipped at kinks, masking " + (masked ? "exact" : "WRONG")};
}

Outcome utilization_order() {
  RunConfig co = desk(root_dir() / "c4", 10);
  RunConfig glob = co;
  glob.alloc.use_local = false;
  const auto a = allocate_only(co), b = allocate_only(glob);
  const auto widths = actor_shape(co).widths;
  FrozenLedger la(widths), lb(widths);
  bool ok = true;
  std::string trace;
  double ua = 0.0, ub = 0.0;
  for (std::size_t k = 0; k < a.masks.size(); ++k) {
    la.commit(a.masks[k]);
    lb.commit(b.masks[k]);
    ua = utilization(la);
    ub = utilization(lb);
    ok = ok && ua >= ub;
    trace += num(ua, 3) + "/" + num(ub, 3) + " ";
  }
  return {ok && ua > ub, "co/global per task: " + trace};
}

Outcome allocation_rl_free() {
  const auto cfg5 = desk(root_dir() / "c1_sequence", 5);
  const auto& art = five_task_run();
  const auto rep5 = allocate_only(cfg5);
  const bool same = rep5.masks == art.masks;
  const bool same_text = mask_manifest(rep5.masks) == mask_manifest(art.masks);
  const auto rep10 = allocate_only(desk(root_dir() / "c5", 10));
  return {same && same_text && rep10.total_seconds < 1.0 && rep10.seconds.size() == 10,
          std::string("allocate vs train masks ") + (same && same_text ? "identical" : "DIFFER") + ", 10 tasks in " +
              num(rep10.total_seconds, 3) + " s"};
}

Outcome dormant_mechanics() {
  bool ok = true;
  std::string notes;
  // hand case: hidden sensitivities (2, 1, 1)
  {
    NetworkShape sh;
    sh.widths = {1, 3, 1};
    Params<float> p = zeros_like<float>(sh);
    p[0].weight.col(0) << 2, 1, 1;
    p[0].bias.setConstant(5.0f);
    p[1].weight.setOnes();
    MaskedForward<float> v(sh, TaskBinding::dense(sh), 0.3f);
    v.load(p);
    Eigen::MatrixXf s(1, 3);
    s << 0.1f, 0.2f, -0.3f;
    const auto rep = sensitivity_scores(v, s, Eigen::VectorXf::Ones(1));
    const auto& sc = rep.layers[0].scores;
    const bool hand = std::abs(sc[0] - 1.5) < 1e-6 && std::abs(sc[1] - 0.75) < 1e-6 && std::abs(sc[2] - 0.75) < 1e-6;
    ok = ok && hand;
    notes += "scores (" + num(sc[0]) + ", " + num(sc[1]) + ", " + num(sc[2]) + ")";
  }
  // random nets: reset safety and normalization
  Rng rng(99);
  double worst_mean = 0.0;
  long reset_coords = 0;
  bool frozen_ok = true, init_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = netgen::random_net(rng, 12);
    MaskedMlp<float> mlp(net.shape, 500 + static_cast<uint64_t>(trial));
    auto& p = mlp.params();
    for (auto& l : p) {
      l.weight.array() += 0.25f;
      l.bias.array() -= 0.5f;
    }
    const auto before = p;
    MaskedForward<float> view(net.shape, net.binding, 0.3f);
    view.load(p);
    Eigen::MatrixXf states(net.shape.input_dim(), 32);
    for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = static_cast<float>(rng.normal());
    const auto rep = sensitivity_scores(view, states, Eigen::VectorXf::Constant(net.shape.input_dim(), 0.05f));
    for (const auto& ls : rep.layers) {
      if (ls.degenerate) continue;
      double m = 0.0;
      for (double s : ls.scores) m += s;
      worst_mean = std::max(worst_mean, std::abs(m / static_cast<double>(ls.scores.size()) - 1.0));
    }
    const auto trainable = trainable_mask<float>(net.shape, net.binding);
    const auto found = find_dormant(rep, 1.0, trainable);
    reset_coords += static_cast<long>(reset_dormant(p, mlp.init_store(), found, trainable));
    for (std::size_t l = 0; l < p.size(); ++l) {
      for (Eigen::Index r = 0; r < p[l].weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < p[l].weight.cols(); ++c) {
          const bool changed = p[l].weight(r, c) != before[l].weight(r, c);
          if (trainable[l].weight(r, c) == 0.0f && changed) frozen_ok = false;
          if (changed && p[l].weight(r, c) != mlp.init_store()[l].weight(r, c)) init_ok = false;
        }
        const bool changed = p[l].bias(r) != before[l].bias(r);
        if (trainable[l].bias(r) == 0.0f && changed) frozen_ok = false;
        if (changed && p[l].bias(r) != mlp.init_store()[l].bias(r)) init_ok = false;
      }
    }
  }
  ok = ok && frozen_ok && init_ok && worst_mean <= 1e-6 && reset_coords > 0;
  notes += ", 50 random nets: " + std::to_string(reset_coords) + " coordinates reset, frozen " +
           (frozen_ok ? "untouched" : "CHANGED") + ", reset values " + (init_ok ? "= init" : "WRONG") +
           ", worst |mean score - 1| " + num(worst_mean, 3);
  return {ok, notes};
}

Outcome single_task_plasticity() {
  const auto suite = task_suite(10, 7);
  const auto& spec = suite.front();  // unobstructed
  int solvable = 0;
  for (uint64_t s = 0; s < 20; ++s) solvable += scripted_episode_succeeds(spec, 1000 + s) ? 1 : 0;
  int reached = 0;
  std::string detail = "scripted oracle " + std::to_string(solvable) + "/20; steps to 0.9:";
  for (uint64_t seed : {1, 2, 3}) {
    RunConfig cfg;
    cfg.seed = seed;
    SacAgent agent(cfg.sac, kObservationDim, kActionDim, cfg.actor_seed());
    agent.begin_task(TaskBinding::dense(agent.actor_shape()), 1.0f, cfg.task_seed(0));
    TrainTaskOptions opt;
    opt.steps = cfg.steps_per_task;
    opt.eval_interval = cfg.eval_interval;
    opt.seed = cfg.task_seed(0);
    opt.dormant = cfg.dormant;
    opt.record_dormant_scores = false;
    int64_t hit = -1;
    double best = 0.0;
    opt.on_eval = [&](int64_t t) {
      const double r = evaluate_policy(agent.actor_view(), spec, cfg.eval_episodes, cfg.eval_seed());
      best = std::max(best, r);
      if (r >= 0.9) hit = t;
      return r >= 0.9;
    };
    std::cerr << "[7] seed " << seed << "\n";
    train_task(agent, spec, opt);
    if (hit > 0) ++reached;
    detail += " " + (hit > 0 ? std::to_string(hit) : "never (best " + num(best, 2) + ")");
  }
  return {reached == 3 && solvable == 20, detail + " (" + std::to_string(reached) + "/3 seeds)"};
}

Outcome ablation_order() {
  // default per-task budget: shorter windows end before single-task training converges
  RunConfig cfg = desk(root_dir() / "c8_ablation", 3);
  std::cerr << "[8] 5 arms x 3 seeds x 3 tasks x " << cfg.steps_per_task << " steps\n";
  const auto rows = ablation(cfg, ablation_arms(), {1, 2, 3});
  write_ablation_csv(fs::path(cfg.out) / "ablation.csv", rows);
  const auto summary = summarize_ablation(rows);
  bool complete = summary.size() == 5;
  for (const auto& s : summary) complete = complete && s.runs == 3;
  double full = -1.0;
  for (const auto& s : summary)
    if (s.arm == "full") full = s.mean_P;
  bool order = complete;
  std::string detail;
  for (const auto& s : summary) {
    detail += s.arm + " " + num(s.mean_P, 3) + "  ";
    if (s.arm != "full" && s.mean_P > full) order = false;
  }
  return {complete && order, "mean P: " + detail + (complete ? "" : "(missing runs)")};
}

Outcome metrics_algebra() {
  double worst = 0.0;
  auto curve = [](std::vector<EvalSample> s) {
    EvalCurve c;
    for (const auto& x : s) c.add(x.step, x.rate);
    return c;
  };
  // AUC 0.8 against baseline 0.5
  {
    const auto r = forward_transfer(curve({{0, 0.0}, {1000, 0.6}, {1500, 1.0}}), curve({{0, 0.0}, {500, 1.0}}), 1000, 1000);
    worst = std::max(worst, std::abs(r.ft - 0.6));
  }
  // random piecewise-constant pairs against closed-form rectangle sums
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t delta = 1000;
    std::vector<EvalSample> a, b;
    double sa = 0.0, sb = 0.0;
    for (int64_t t = 0; t < delta; t += 100) {
      const double va = std::round(rng.uniform() * 10) / 10;
      const double vb = std::round(rng.uniform() * 9) / 10;  // < 1 keeps FT defined
      a.push_back({delta + t, va});
      b.push_back({t, vb});
      sa += va * 100;
      sb += vb * 100;
    }
    a.insert(a.begin(), {0, 0.0});
    const double auc = sa / delta, aucb = sb / delta;
    const auto r = forward_transfer(curve(a), curve(b), delta, delta);
    worst = std::max(worst, std::abs(r.ft - (auc - aucb) / (1.0 - aucb)));
  }
  return {worst <= 1e-12, "201 cases, worst FT error " + num(worst, 3)};
}

Outcome resume_equivalence() {
  auto cfg_full = desk(root_dir() / "c10_full", 5);
  auto cfg_part = desk(root_dir() / "c10_part", 5);
  for (auto* c : {&cfg_full, &cfg_part}) c->steps_per_task = 10000;
  fs::remove_all(cfg_part.out);
  std::cerr << "[10] uninterrupted and interrupted 5 x " << cfg_full.steps_per_task << " steps\n";
  const auto full = run_sequence(cfg_full);
  RunOptions stop;
  stop.stop_after = 3;
  run_sequence(cfg_part, stop);
  RunOptions resume;
  resume.resume = true;
  const auto rest = run_sequence(cfg_part, resume);
  const auto& a = *full.metrics;
  const auto& b = *rest.metrics;
  const auto ca = load_checkpoint(fs::path(cfg_full.out) / "checkpoint.bin");
  const auto cb = load_checkpoint(fs::path(cfg_part.out) / "checkpoint.bin");
  bool params = ca.actor_params.size() == cb.actor_params.size();
  for (std::size_t l = 0; params && l < ca.actor_params.size(); ++l)
    params = ca.actor_params[l].weight == cb.actor_params[l].weight && ca.actor_params[l].bias == cb.actor_params[l].bias;
  // losses, temperature and episode counts of every task after the interruption
  bool logs = true;
  for (int k = 3; k < 5; ++k) {
    const auto name = "train_task" + std::to_string(k) + ".csv";
    logs = logs && slurp(fs::path(cfg_full.out) / name) == slurp(fs::path(cfg_part.out) / name);
  }
  const bool same = a.P == b.P && a.F == b.F && full.curves == rest.curves && ca.masks == cb.masks && params && logs;
  return {same, "P " + num(a.P) + " vs " + num(b.P) + ", F " + num(a.F) + " vs " + num(b.F) + ", curves " +
                    (full.curves == rest.curves ? "identical" : "DIFFER") + ", masks " +
                    (ca.masks == cb.masks ? "identical" : "DIFFER") + ", actor parameters " +
                    (params ? "bit-identical" : "DIFFER") + ", post-resume training logs " +
                    (logs ? "identical" : "DIFFER")};
}

const std::vector<std::pair<int, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<int, std::function<Outcome()>>> c = {
      {1, zero_forgetting},   {2, lasso_oracle},       {3, gradient_check},         {4, utilization_order},
      {5, allocation_rl_free}, {6, dormant_mechanics}, {7, single_task_plasticity}, {8, ablation_order},
      {9, metrics_algebra},   {10, resume_equivalence},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  if (!std::getenv("SSDE_LOG_LEVEL")) setenv("SSDE_LOG_LEVEL", "1", 1);
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  fs::create_directories(root_dir());
  int failed = 0;
  for (const auto& [id, fn] : criteria()) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
              << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
