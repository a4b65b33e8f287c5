#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssde/adam.hpp"
#include "ssde/dormant.hpp"
#include "ssde/envs.hpp"
#include "ssde/masked_net.hpp"
#include "ssde/replay.hpp"
#include "ssde/rng.hpp"

namespace ssde {

struct SacConfig {
  double gamma = 0.99;
  /// NaN means -action_dim.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double polyak = 5e-3;
  int batch = 128;
  int64_t buffer_capacity = 60000;
  int64_t exploratory_steps = 2000;
  double lr = 3e-4;
  std::vector<int> actor_hidden{256, 256, 256};
  std::vector<int> critic_hidden{128, 128};
  double leaky_slope = 0.01;
  double init_temperature = 1.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  /// Fresh critics, temperature and buffer at each task (the default), or
  /// critics carried over from the previous task.
  bool reset_critics = true;

  void validate() const;
  double resolved_target_entropy(int action_dim) const;
  uint64_t hash() const;
  // NaN target entropy compares equal to NaN
  friend bool operator==(const SacConfig& a, const SacConfig& b) {
    const bool te = a.target_entropy == b.target_entropy ||
                    (std::isnan(a.target_entropy) && std::isnan(b.target_entropy));
    return te && a.gamma == b.gamma && a.polyak == b.polyak && a.batch == b.batch &&
           a.buffer_capacity == b.buffer_capacity && a.exploratory_steps == b.exploratory_steps && a.lr == b.lr &&
           a.actor_hidden == b.actor_hidden && a.critic_hidden == b.critic_hidden &&
           a.leaky_slope == b.leaky_slope && a.init_temperature == b.init_temperature &&
           a.log_std_min == b.log_std_min && a.log_std_max == b.log_std_max && a.reset_critics == b.reset_critics;
  }
};

enum class ActionMode { stochastic, deterministic };

struct UpdateStats {
  double critic_loss = 0.0;  // mean of the two critics
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;        // temperature used in this update
  double entropy = 0.0;      // -E[log pi] on the batch
  double q_mean = 0.0;
  bool skipped = false;
};

/// SAC with a masked actor and dense twin critics.
class SacAgent {
 public:
  SacAgent(SacConfig cfg, int obs_dim, int action_dim, uint64_t actor_seed);

  const SacConfig& config() const { return cfg_; }
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }
  const NetworkShape& actor_shape() const { return actor_.shape(); }
  const NetworkShape& critic_shape() const { return critic_shape_; }

  /// Binds the actor to a task's masks, resets optimizer state and the
  /// temperature, and (re)initializes critics and targets from task_seed.
  void begin_task(const TaskBinding& binding, float beta, uint64_t task_seed);

  Eigen::VectorXf act(const Eigen::VectorXf& state, ActionMode mode);

  UpdateStats update(const Batch& batch);

  MaskedMlp<float>& actor() { return actor_; }
  const MaskedMlp<float>& actor() const { return actor_; }
  const MaskedForward<float>& actor_view() const { return actor_view_; }
  const Params<float>& actor_trainable() const { return actor_trainable_; }
  Adam<float>& actor_optimizer() { return actor_adam_; }
  /// Re-gathers the actor view after the parameters were changed externally.
  void reload_actor() { actor_view_.load(actor_.params()); }

  Params<float>& critic(int i) { return critics_[static_cast<std::size_t>(i)]; }
  Params<float>& target(int i) { return targets_[static_cast<std::size_t>(i)]; }
  const Params<float>& critic(int i) const { return critics_[static_cast<std::size_t>(i)]; }
  const Params<float>& target(int i) const { return targets_[static_cast<std::size_t>(i)]; }
  double log_alpha() const { return log_alpha_; }
  void set_log_alpha(double v) { log_alpha_ = v; }

  int64_t updates() const { return updates_; }
  int64_t skipped_updates() const { return skipped_; }
  Rng& noise() { return rng_; }

  /// Soft interpolation target = (1 - rho) target + rho online.
  static void soft_update(Params<float>& target, const Params<float>& online, float rho);

 private:
  void load_critics();

  SacConfig cfg_;
  int obs_dim_;
  int action_dim_;
  MaskedMlp<float> actor_;
  MaskedForward<float> actor_view_;
  Params<float> actor_trainable_;
  Adam<float> actor_adam_;

  NetworkShape critic_shape_;
  std::vector<Params<float>> critics_;
  std::vector<Params<float>> targets_;
  std::vector<MaskedForward<float>> critic_views_;
  std::vector<MaskedForward<float>> target_views_;
  std::vector<Adam<float>> critic_adams_;

  double log_alpha_ = 0.0;
  ScalarAdam alpha_adam_;
  Rng rng_;
  int64_t updates_ = 0;
  int64_t skipped_ = 0;
};

/// tanh(mean) of a bound actor view for a batch of states (n_obs x batch).
Eigen::MatrixXf deterministic_actions(const MaskedForward<float>& actor, const Eigen::MatrixXf& states);

/// Episode seed used by evaluation; a pure function of its arguments.
uint64_t eval_episode_seed(uint64_t eval_seed, int task_id, int episode);

/// Deterministic-policy success rate over `episodes` episodes.
double evaluate_policy(const MaskedForward<float>& actor, const TaskSpec& spec, int episodes,
                       uint64_t eval_seed);

struct TrainLogRow {
  int64_t step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
  int64_t resets = 0;
  int64_t episodes = 0;
  double recent_success = 0.0;
};

struct DormantRow {
  int64_t step = 0;
  int layer = 0;
  int neuron = 0;
  double score = 0.0;
  bool dormant = false;
  std::size_t reset_count = 0;  // coordinates written at this event
};

struct TrainTaskOptions {
  int64_t steps = 60000;
  int64_t eval_interval = 2000;
  int64_t log_interval = 1000;
  DormantConfig dormant;
  uint64_t seed = 0;
  /// Called after every eval_interval-th step with the local step count. A
  /// true return stops training early.
  std::function<bool(int64_t)> on_eval;
  bool record_dormant_scores = true;
};

struct TaskResult {
  std::vector<TrainLogRow> log;
  std::vector<DormantRow> dormant;
  int64_t steps = 0;
  int64_t updates = 0;
  int64_t reset_events = 0;
  int64_t reset_coordinates = 0;
  int64_t clipped_actions = 0;
};

/// Inner loop on one task: random actions for the exploratory steps, then
/// one SAC update per environment step, dormant resets every reset_interval
/// steps, and the eval hook every eval_interval steps. The agent must
/// already be bound with begin_task.
TaskResult train_task(SacAgent& agent, const TaskSpec& spec, const TrainTaskOptions& opt);

}  // namespace ssde
