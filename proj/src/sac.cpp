#include "ssde/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "ssde/errors.hpp"

namespace ssde {

namespace {

constexpr uint64_t kCriticTag = 0x637269746963ULL;  // "critic"
constexpr float kHalfLog2Pi = 0.91893853320467274f;

float softplus(float x) { return std::max(x, 0.0f) + std::log1p(std::exp(-std::abs(x))); }

/// log(1 - tanh(u)^2), stable for large |u|.
float log_one_minus_tanh_sq(float u) {
  return 2.0f * (static_cast<float>(std::numbers::ln2) - u - softplus(-2.0f * u));
}

NetworkShape with_hidden(int in, const std::vector<int>& hidden, int out, double slope) {
  NetworkShape s;
  s.widths.push_back(in);
  s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
  s.widths.push_back(out);
  s.leaky_slope = slope;
  return s;
}

/// Reparameterized squashed-Gaussian sample for a batch.
struct PolicySample {
  Eigen::MatrixXf mean;
  Eigen::MatrixXf log_std;  // clamped
  Eigen::MatrixXf clamp_pass;  // 1 where the clamp was inactive
  Eigen::MatrixXf eps;
  Eigen::MatrixXf pre_tanh;
  Eigen::MatrixXf action;
  Eigen::RowVectorXf log_prob;
};

PolicySample sample_policy(const Eigen::MatrixXf& out, int act_dim, float ls_min, float ls_max, Rng& rng) {
  PolicySample p;
  const auto B = out.cols();
  p.mean = out.topRows(act_dim);
  const Eigen::MatrixXf raw = out.bottomRows(act_dim);
  p.log_std = raw.cwiseMax(ls_min).cwiseMin(ls_max);
  p.clamp_pass = ((raw.array() >= ls_min) && (raw.array() <= ls_max)).cast<float>();
  p.eps.resize(act_dim, B);
  for (Eigen::Index c = 0; c < B; ++c)
    for (int r = 0; r < act_dim; ++r) p.eps(r, c) = static_cast<float>(rng.normal());
  p.pre_tanh = p.mean.array() + p.log_std.array().exp() * p.eps.array();
  p.action = p.pre_tanh.array().tanh();
  p.log_prob.resize(B);
  for (Eigen::Index c = 0; c < B; ++c) {
    float lp = 0.0f;
    for (int r = 0; r < act_dim; ++r)
      lp += -0.5f * p.eps(r, c) * p.eps(r, c) - p.log_std(r, c) - kHalfLog2Pi -
            log_one_minus_tanh_sq(p.pre_tanh(r, c));
    p.log_prob[c] = lp;
  }
  return p;
}

Eigen::MatrixXf concat_rows(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) {
  Eigen::MatrixXf out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

void SacConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw config_error("sac.gamma must be in [0, 1)");
  if (!(polyak > 0.0 && polyak <= 1.0)) throw config_error("sac.polyak must be in (0, 1]");
  if (batch < 1) throw config_error("sac.batch must be >= 1");
  if (buffer_capacity < batch) throw config_error("sac.batch must not exceed sac.buffer_capacity");
  if (exploratory_steps < 0) throw config_error("sac.exploratory_steps must be >= 0");
  if (!(lr > 0.0)) throw config_error("sac.lr must be > 0");
  if (actor_hidden.empty() || critic_hidden.empty()) throw config_error("networks need hidden layers");
  for (int w : actor_hidden)
    if (w < 1) throw config_error("actor widths must be positive");
  for (int w : critic_hidden)
    if (w < 1) throw config_error("critic widths must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw config_error("leaky slope must be in [0, 1)");
  if (!(init_temperature > 0.0)) throw config_error("sac.init_temperature must be > 0");
  if (!(log_std_min < log_std_max)) throw config_error("log-std bounds are inverted");
}

double SacConfig::resolved_target_entropy(int action_dim) const {
  return std::isnan(target_entropy) ? -static_cast<double>(action_dim) : target_entropy;
}

uint64_t SacConfig::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << gamma << ' ' << target_entropy << ' ' << polyak << ' ' << batch << ' ' << buffer_capacity << ' '
     << exploratory_steps << ' ' << lr << ' ' << leaky_slope << ' ' << init_temperature << ' ' << log_std_min
     << ' ' << log_std_max << ' ' << reset_critics << " a";
  for (int w : actor_hidden) os << ' ' << w;
  os << " c";
  for (int w : critic_hidden) os << ' ' << w;
  return fnv1a(os.str());
}

SacAgent::SacAgent(SacConfig cfg, int obs_dim, int action_dim, uint64_t actor_seed)
    : cfg_(std::move(cfg)),
      obs_dim_(obs_dim),
      action_dim_(action_dim),
      actor_(with_hidden(obs_dim, cfg_.actor_hidden, 2 * action_dim, cfg_.leaky_slope), actor_seed),
      critic_shape_(with_hidden(obs_dim + action_dim, cfg_.critic_hidden, 1, cfg_.leaky_slope)),
      alpha_adam_(AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8}),
      rng_(derive_seed(actor_seed, 1)) {
  cfg_.validate();
  const AdamConfig ac{cfg_.lr, 0.9, 0.999, 1e-8};
  actor_adam_ = Adam<float>(actor_.shape(), ac);
  critic_adams_ = {Adam<float>(critic_shape_, ac), Adam<float>(critic_shape_, ac)};
  const auto dense = TaskBinding::dense(critic_shape_);
  critic_views_ = {MaskedForward<float>(critic_shape_, dense, 1.0f), MaskedForward<float>(critic_shape_, dense, 1.0f)};
  target_views_ = critic_views_;
  begin_task(TaskBinding::dense(actor_.shape()), 1.0f, derive_seed(actor_seed, 2));
}

void SacAgent::begin_task(const TaskBinding& binding, float beta, uint64_t task_seed) {
  actor_view_ = MaskedForward<float>(actor_.shape(), binding, beta);
  actor_view_.load(actor_.params());
  actor_trainable_ = trainable_mask<float>(actor_.shape(), binding);
  actor_adam_.reset();

  if (cfg_.reset_critics || critics_.empty()) {
    critics_.clear();
    for (int i = 0; i < 2; ++i)
      critics_.push_back(MaskedMlp<float>(critic_shape_, derive_seed(task_seed, kCriticTag, static_cast<uint64_t>(i))).params());
    targets_ = critics_;
  }
  for (auto& a : critic_adams_) a.reset();
  load_critics();
  log_alpha_ = std::log(cfg_.init_temperature);
  alpha_adam_.reset();
  rng_.reseed(derive_seed(task_seed, 0x6e6f697365ULL));
}

void SacAgent::load_critics() {
  for (int i = 0; i < 2; ++i) {
    critic_views_[static_cast<std::size_t>(i)].load(critics_[static_cast<std::size_t>(i)]);
    target_views_[static_cast<std::size_t>(i)].load(targets_[static_cast<std::size_t>(i)]);
  }
}

Eigen::VectorXf SacAgent::act(const Eigen::VectorXf& state, ActionMode mode) {
  if (state.size() != obs_dim_) throw invalid_input("act: state has wrong dimension");
  const Eigen::MatrixXf out = actor_view_.forward(Eigen::MatrixXf(state));
  if (!out.allFinite()) {
    std::ostringstream os;
    os << "actor produced a non-finite output (updates=" << updates_ << ", state=" << state.transpose() << ")";
    throw runtime_error(os.str());
  }
  if (mode == ActionMode::deterministic) return out.topRows(action_dim_).array().tanh();
  const auto p = sample_policy(out, action_dim_, static_cast<float>(cfg_.log_std_min),
                               static_cast<float>(cfg_.log_std_max), rng_);
  return p.action.col(0);
}

void SacAgent::soft_update(Params<float>& target, const Params<float>& online, float rho) {
  const float keep = 1.0f - rho;
  for (std::size_t l = 0; l < target.size(); ++l) {
    target[l].weight = keep * target[l].weight.array() + rho * online[l].weight.array();
    target[l].bias = keep * target[l].bias.array() + rho * online[l].bias.array();
  }
}

UpdateStats SacAgent::update(const Batch& b) {
  const auto B = b.states.cols();
  const float inv_b = 1.0f / static_cast<float>(B);
  const float gamma = static_cast<float>(cfg_.gamma);
  const float ls_min = static_cast<float>(cfg_.log_std_min);
  const float ls_max = static_cast<float>(cfg_.log_std_max);
  const float alpha = static_cast<float>(std::exp(log_alpha_));
  UpdateStats st;
  st.alpha = alpha;

  // Critic targets.
  ForwardCache<float> cache;
  const Eigen::MatrixXf next_out = actor_view_.forward(b.next_states);
  const auto next = sample_policy(next_out, action_dim_, ls_min, ls_max, rng_);
  const Eigen::MatrixXf next_in = concat_rows(b.next_states, next.action);
  const Eigen::RowVectorXf q1t = target_views_[0].forward(next_in);
  const Eigen::RowVectorXf q2t = target_views_[1].forward(next_in);
  const Eigen::RowVectorXf soft_v = q1t.cwiseMin(q2t) - alpha * next.log_prob;
  const Eigen::RowVectorXf y = b.rewards.array() + gamma * b.not_done.array() * soft_v.array();

  const Eigen::MatrixXf cur_in = concat_rows(b.states, b.actions);
  std::vector<Params<float>> critic_grads(2);
  double critic_loss = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    critic_views_[i].forward(cur_in, cache);
    const Eigen::RowVectorXf q = critic_views_[i].output(cache);
    const Eigen::RowVectorXf err = q - y;
    critic_loss += 0.5 * static_cast<double>(err.squaredNorm()) / static_cast<double>(B);
    critic_views_[i].backward(cache, Eigen::MatrixXf(err * inv_b), critic_grads[i]);
  }
  if (!std::isfinite(critic_loss) || !all_finite(critic_grads[0]) || !all_finite(critic_grads[1])) {
    ++skipped_;
    st.skipped = true;
    return st;
  }
  for (std::size_t i = 0; i < 2; ++i) {
    critic_adams_[i].step(critics_[i], critic_grads[i]);
    critic_views_[i].load(critics_[i]);
  }
  st.critic_loss = 0.5 * critic_loss;

  // Actor.
  ForwardCache<float> actor_cache;
  actor_view_.forward(b.states, actor_cache);
  const Eigen::MatrixXf out = actor_view_.output(actor_cache);
  const auto pol = sample_policy(out, action_dim_, ls_min, ls_max, rng_);
  const Eigen::MatrixXf pol_in = concat_rows(b.states, pol.action);
  ForwardCache<float> c1, c2;
  critic_views_[0].forward(pol_in, c1);
  critic_views_[1].forward(pol_in, c2);
  const Eigen::RowVectorXf q1 = critic_views_[0].output(c1);
  const Eigen::RowVectorXf q2 = critic_views_[1].output(c2);
  const Eigen::RowVectorXf qmin = q1.cwiseMin(q2);
  const Eigen::RowVectorXf use1 = (q1.array() <= q2.array()).cast<float>();
  const Eigen::MatrixXf g1 = critic_views_[0].backward_input(c1, Eigen::MatrixXf(use1));
  const Eigen::MatrixXf g2 = critic_views_[1].backward_input(c2, Eigen::MatrixXf((1.0f - use1.array()).matrix()));
  const Eigen::MatrixXf dq_da = (g1 + g2).bottomRows(action_dim_);

  const Eigen::ArrayXXf one_minus_a2 = 1.0f - pol.action.array().square();
  const Eigen::ArrayXXf sigma_eps = pol.log_std.array().exp() * pol.eps.array();
  Eigen::MatrixXf grad_out(2 * action_dim_, B);
  grad_out.topRows(action_dim_) = (alpha * 2.0f * pol.action.array() - dq_da.array() * one_minus_a2) * inv_b;
  grad_out.bottomRows(action_dim_) =
      ((alpha * (2.0f * pol.action.array() * sigma_eps - 1.0f) - dq_da.array() * one_minus_a2 * sigma_eps) *
       pol.clamp_pass.array()) *
      inv_b;
  Params<float> actor_grads;
  actor_view_.backward(actor_cache, grad_out, actor_grads, true);
  st.actor_loss = static_cast<double>((alpha * pol.log_prob - qmin).mean());
  st.entropy = -static_cast<double>(pol.log_prob.mean());
  st.q_mean = static_cast<double>(qmin.mean());
  if (!std::isfinite(st.actor_loss) || !actor_adam_.step(actor_.params(), actor_grads, &actor_trainable_)) {
    ++skipped_;
    st.skipped = true;
  } else {
    actor_view_.load(actor_.params());
  }

  // Temperature: loss = -log_alpha * (log pi + target entropy).
  const double target_h = cfg_.resolved_target_entropy(action_dim_);
  const double mean_lp = static_cast<double>(pol.log_prob.mean());
  st.alpha_loss = -log_alpha_ * (mean_lp + target_h);
  log_alpha_ = alpha_adam_.step(log_alpha_, -(mean_lp + target_h));

  const auto rho = static_cast<float>(cfg_.polyak);
  for (std::size_t i = 0; i < 2; ++i) {
    soft_update(targets_[i], critics_[i], rho);
    target_views_[i].load(targets_[i]);
  }
  ++updates_;
  return st;
}

Eigen::MatrixXf deterministic_actions(const MaskedForward<float>& actor, const Eigen::MatrixXf& states) {
  const Eigen::MatrixXf out = actor.forward(states);
  const int act_dim = static_cast<int>(out.rows()) / 2;
  return out.topRows(act_dim).array().tanh();
}

uint64_t eval_episode_seed(uint64_t eval_seed, int task_id, int episode) {
  return derive_seed(eval_seed, 0x6576616cULL, static_cast<uint64_t>(task_id), static_cast<uint64_t>(episode));
}

double evaluate_policy(const MaskedForward<float>& actor, const TaskSpec& spec, int episodes, uint64_t eval_seed) {
  if (episodes < 1) throw invalid_input("evaluation needs at least one episode");
  int successes = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    PointPushEnv env(spec, eval_episode_seed(eval_seed, spec.task_id, ep));
    Eigen::VectorXf s = env.reset();
    for (int t = 0; t < spec.horizon; ++t) {
      const Eigen::MatrixXf a = deterministic_actions(actor, Eigen::MatrixXf(s));
      if (!a.allFinite()) throw runtime_error("evaluation: actor produced a non-finite action");
      const auto r = env.step(Eigen::VectorXf(a.col(0)));
      if (r.success) {
        ++successes;
        break;
      }
      if (r.done) break;
      s = r.observation;
    }
  }
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

TaskResult train_task(SacAgent& agent, const TaskSpec& spec, const TrainTaskOptions& opt) {
  if (opt.steps < 1) throw config_error("steps per task must be >= 1");
  if (opt.eval_interval < 1) throw config_error("eval interval must be >= 1");
  opt.dormant.validate();
  const auto& cfg = agent.config();

  PointPushEnv env(spec, derive_seed(opt.seed, 0x656e76ULL));
  ReplayBuffer buffer(cfg.buffer_capacity, kObservationDim, kActionDim, derive_seed(opt.seed, 0x627566ULL));
  Rng explore(derive_seed(opt.seed, 0x6578706cULL));
  Rng dormant_rng(derive_seed(opt.seed, 0x646f726dULL));
  StateHistory history(opt.dormant.state_window);

  TaskResult res;
  const int64_t updates_before = agent.updates();
  Eigen::VectorXf s = env.reset();
  double sum_critic = 0.0, sum_actor = 0.0, sum_alpha = 0.0, sum_entropy = 0.0;
  int64_t n_stats = 0;
  int64_t resets_since_log = 0;
  int64_t episodes = 0;
  int recent_success = 0;
  int recent_episodes = 0;

  for (int64_t t = 1; t <= opt.steps; ++t) {
    Eigen::VectorXf a(kActionDim);
    if (t <= cfg.exploratory_steps) {
      for (int i = 0; i < kActionDim; ++i) a[i] = static_cast<float>(explore.uniform(-1.0, 1.0));
    } else {
      a = agent.act(s, ActionMode::stochastic);
    }
    const auto r = env.step(a);
    history.push(s);
    buffer.add({s, a, static_cast<float>(r.reward), r.observation, r.success, r.success});
    if (r.done) {
      ++episodes;
      ++recent_episodes;
      recent_success += r.success ? 1 : 0;
      s = env.reset();
    } else {
      s = r.observation;
    }

    if (t > cfg.exploratory_steps && buffer.size() >= cfg.batch) {
      const auto st = agent.update(buffer.sample(cfg.batch));
      if (!st.skipped) {
        sum_critic += st.critic_loss;
        sum_actor += st.actor_loss;
        sum_alpha += st.alpha;
        sum_entropy += st.entropy;
        ++n_stats;
      }
    }

    if (opt.dormant.variant != DormantVariant::off && t % opt.dormant.reset_interval == 0) {
      const Eigen::MatrixXf states = buffer.sample_states(opt.dormant.sample_batch, dormant_rng);
      const auto report = opt.dormant.variant == DormantVariant::redo
                              ? redo_scores(agent.actor_view(), states)
                              : sensitivity_scores(agent.actor_view(), states,
                                                   compute_delta(history, opt.dormant.delta_scale));
      const auto found = find_dormant(report, opt.dormant.tau, agent.actor_trainable(), t <= cfg.exploratory_steps);
      const auto written = reset_dormant(agent.actor().params(), agent.actor().init_store(), found,
                                         agent.actor_trainable(), &agent.actor_optimizer());
      agent.reload_actor();
      ++res.reset_events;
      res.reset_coordinates += static_cast<int64_t>(written);
      resets_since_log += static_cast<int64_t>(found.size());
      if (opt.record_dormant_scores) {
        for (const auto& layer : report.layers)
          for (std::size_t i = 0; i < layer.neurons.size(); ++i) {
            const NeuronRef ref{layer.layer, layer.neurons[i]};
            const bool is_dormant = std::find(found.begin(), found.end(), ref) != found.end();
            res.dormant.push_back({t, layer.layer, layer.neurons[i], layer.scores[i], is_dormant, written});
          }
      }
    }

    if (t % opt.log_interval == 0) {
      const double n = n_stats > 0 ? static_cast<double>(n_stats) : 1.0;
      res.log.push_back({t, sum_critic / n, sum_actor / n, sum_alpha / n, sum_entropy / n, resets_since_log, episodes,
                         recent_episodes > 0 ? static_cast<double>(recent_success) / recent_episodes : 0.0});
      sum_critic = sum_actor = sum_alpha = sum_entropy = 0.0;
      n_stats = 0;
      resets_since_log = 0;
      recent_success = recent_episodes = 0;
    }

    res.steps = t;
    if (t % opt.eval_interval == 0 && opt.on_eval && opt.on_eval(t)) break;
  }
  res.updates = agent.updates() - updates_before;
  res.clipped_actions = env.clipped_actions();
  return res;
}

}  // namespace ssde
