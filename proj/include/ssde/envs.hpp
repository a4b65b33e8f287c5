#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssde/rng.hpp"

namespace ssde {

/// Static circular obstacle.
struct Obstacle {
  Eigen::Vector2d center;
  double radius = 0.0;
};

struct TaskSpec {
  int task_id = 0;
  std::string description;
  Eigen::Vector2d goal{0.0, 0.0};
  Eigen::Vector2d object_start{0.0, 0.0};
  double object_jitter = 0.05;
  Eigen::Vector2d agent_start{0.0, -0.35};
  double agent_jitter = 0.1;
  int obstacle_layout = 0;
  double success_radius = 0.1;
  int horizon = 200;

  void validate() const;
  /// Stable hash of every field, used to key cached baselines.
  uint64_t hash() const;
};

/// Dynamics and reward constants shared by every task of the family.
struct PointPushPhysics {
  static constexpr double dt = 0.05;
  static constexpr double force = 15.0;
  static constexpr double damping = 10.0;
  static constexpr double agent_radius = 0.05;
  static constexpr double object_radius = 0.07;
  static constexpr double arena = 1.0;
  static constexpr double agent_object_weight = 0.1;
  static constexpr double object_goal_weight = 1.0;
  static constexpr double success_bonus = 10.0;
};

inline constexpr int kObservationDim = 8;
inline constexpr int kActionDim = 2;

/// Obstacles of a layout id for a given task geometry.
std::vector<Obstacle> obstacle_layout(int layout, const Eigen::Vector2d& object_start,
                                      const Eigen::Vector2d& goal);

struct EnvState {
  Eigen::Vector2d agent_pos{0.0, 0.0};
  Eigen::Vector2d agent_vel{0.0, 0.0};
  Eigen::Vector2d object_pos{0.0, 0.0};
  Eigen::Vector2d goal{0.0, 0.0};

  /// (agent pos, agent vel, object pos, goal), length 8.
  Eigen::VectorXf observation() const;
};

struct StepResult {
  Eigen::VectorXf observation;
  double reward = 0.0;
  bool done = false;       // success or horizon reached
  bool success = false;
  bool truncated = false;  // horizon reached without success
};

/// Force-controlled point agent that pushes a disk toward a goal in [-1,1]^2.
class PointPushEnv {
 public:
  PointPushEnv(TaskSpec spec, uint64_t seed);

  Eigen::VectorXf reset();
  StepResult step(const Eigen::Vector2d& action);
  StepResult step(const Eigen::VectorXf& action);

  const TaskSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }
  void set_state(const EnvState& s) { state_ = s; }
  int elapsed() const { return t_; }
  int64_t clipped_actions() const { return clipped_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }

  double reward_of(const EnvState& s, bool success) const;

 private:
  TaskSpec spec_;
  Rng rng_;
  EnvState state_;
  std::vector<Obstacle> obstacles_;
  int t_ = 0;
  int64_t clipped_ = 0;
};

/// Hand-written controller: circle behind the object, then push it to the goal.
Eigen::Vector2d scripted_action(const EnvState& s, const std::vector<Obstacle>& obstacles);

/// Runs one episode of the scripted controller; true on success.
bool scripted_episode_succeeds(const TaskSpec& spec, uint64_t seed);

/// Built-in suite of n tasks with near-duplicate and dissimilar descriptions.
std::vector<TaskSpec> task_suite(int n, uint64_t seed);

/// The suite repeated `repeats` times; later copies get fresh task ids.
std::vector<TaskSpec> repeated_suite(int n, int repeats, uint64_t seed);

/// Text manifest: task_id, description, goal, obstacle id.
std::string suite_manifest(const std::vector<TaskSpec>& suite);

}  // namespace ssde
