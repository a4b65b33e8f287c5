#include "ssde/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ssde/errors.hpp"

namespace ssde {

using P = PointPushPhysics;

void TaskSpec::validate() const {
  if (description.empty()) throw config_error("task description is empty");
  const double lim = P::arena - P::object_radius;
  if (std::abs(goal.x()) > lim || std::abs(goal.y()) > lim) throw config_error("task goal outside arena");
  if (!(success_radius > 0.0)) throw config_error("task success radius must be > 0");
  if (horizon < 1) throw config_error("task horizon must be >= 1");
  if (object_jitter < 0.0 || agent_jitter < 0.0) throw config_error("start jitter must be >= 0");
  if (obstacle_layout < 0 || obstacle_layout > 2) throw config_error("unknown obstacle layout");
}

uint64_t TaskSpec::hash() const {
  uint64_t h = fnv1a(description);
  auto mix_double = [&h](double v) {
    uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    h = derive_seed(h, bits);
  };
  h = derive_seed(h, static_cast<uint64_t>(task_id), static_cast<uint64_t>(obstacle_layout),
                  static_cast<uint64_t>(horizon));
  for (double v : {goal.x(), goal.y(), object_start.x(), object_start.y(), object_jitter, agent_start.x(),
                   agent_start.y(), agent_jitter, success_radius})
    mix_double(v);
  return h;
}

std::vector<Obstacle> obstacle_layout(int layout, const Eigen::Vector2d& object_start,
                                      const Eigen::Vector2d& goal) {
  const Eigen::Vector2d dir = (goal - object_start).normalized();
  const Eigen::Vector2d perp(-dir.y(), dir.x());
  const Eigen::Vector2d mid = 0.5 * (object_start + goal);
  switch (layout) {
    case 0: return {};
    case 1: return {{mid + 0.35 * perp, 0.1}};
    case 2: return {{mid + 0.32 * perp, 0.1}, {mid - 0.32 * perp, 0.1}};
    default: throw config_error("unknown obstacle layout " + std::to_string(layout));
  }
}

Eigen::VectorXf EnvState::observation() const {
  Eigen::VectorXf o(kObservationDim);
  o << static_cast<float>(agent_pos.x()), static_cast<float>(agent_pos.y()), static_cast<float>(agent_vel.x()),
      static_cast<float>(agent_vel.y()), static_cast<float>(object_pos.x()), static_cast<float>(object_pos.y()),
      static_cast<float>(goal.x()), static_cast<float>(goal.y());
  return o;
}

PointPushEnv::PointPushEnv(TaskSpec spec, uint64_t seed) : spec_(std::move(spec)), rng_(seed) {
  spec_.validate();
  obstacles_ = obstacle_layout(spec_.obstacle_layout, spec_.object_start, spec_.goal);
  state_.goal = spec_.goal;
}

Eigen::VectorXf PointPushEnv::reset() {
  t_ = 0;
  auto jitter = [this](double amount) {
    const double x = rng_.uniform(-amount, amount);
    const double y = rng_.uniform(-amount, amount);
    return Eigen::Vector2d(x, y);
  };
  state_.agent_pos = spec_.agent_start + jitter(spec_.agent_jitter);
  state_.agent_vel.setZero();
  state_.object_pos = spec_.object_start + jitter(spec_.object_jitter);
  state_.goal = spec_.goal;
  return state_.observation();
}

namespace {

void push_out(Eigen::Vector2d& pos, double radius, const Obstacle& ob, Eigen::Vector2d* vel) {
  const Eigen::Vector2d d = pos - ob.center;
  const double dist = d.norm();
  const double min_dist = radius + ob.radius;
  if (dist >= min_dist) return;
  const Eigen::Vector2d n = dist > 0.0 ? Eigen::Vector2d(d / dist) : Eigen::Vector2d(1.0, 0.0);
  pos = ob.center + n * min_dist;
  if (vel) {
    const double into = vel->dot(n);
    if (into < 0.0) *vel -= into * n;
  }
}

bool clip_to_arena(Eigen::Vector2d& pos, double radius, Eigen::Vector2d* vel) {
  const double lim = P::arena - radius;
  bool hit = false;
  for (int i = 0; i < 2; ++i) {
    if (pos[i] > lim || pos[i] < -lim) {
      pos[i] = std::clamp(pos[i], -lim, lim);
      if (vel) (*vel)[i] = 0.0;
      hit = true;
    }
  }
  return hit;
}

}  // namespace

double PointPushEnv::reward_of(const EnvState& s, bool success) const {
  return -P::agent_object_weight * (s.agent_pos - s.object_pos).norm() -
         P::object_goal_weight * (s.object_pos - s.goal).norm() + (success ? P::success_bonus : 0.0);
}

StepResult PointPushEnv::step(const Eigen::Vector2d& raw_action) {
  Eigen::Vector2d a = raw_action;
  if (!a.allFinite()) throw invalid_input("action is not finite");
  if (a.cwiseAbs().maxCoeff() > 1.0) {
    ++clipped_;
    a = a.cwiseMax(-1.0).cwiseMin(1.0);
  }

  auto& s = state_;
  s.agent_vel = (1.0 - P::damping * P::dt) * s.agent_vel + P::dt * P::force * a;
  s.agent_pos += P::dt * s.agent_vel;
  clip_to_arena(s.agent_pos, P::agent_radius, &s.agent_vel);
  for (const auto& ob : obstacles_) push_out(s.agent_pos, P::agent_radius, ob, &s.agent_vel);

  const Eigen::Vector2d d = s.object_pos - s.agent_pos;
  const double dist = d.norm();
  const double contact = P::agent_radius + P::object_radius;
  if (dist < contact) {
    const Eigen::Vector2d n = dist > 0.0 ? Eigen::Vector2d(d / dist) : Eigen::Vector2d(1.0, 0.0);
    s.object_pos = s.agent_pos + n * contact;
    clip_to_arena(s.object_pos, P::object_radius, nullptr);
    for (const auto& ob : obstacles_) push_out(s.object_pos, P::object_radius, ob, nullptr);
  }

  ++t_;
  StepResult r;
  r.success = (s.object_pos - s.goal).norm() < spec_.success_radius;
  r.reward = reward_of(s, r.success);
  r.truncated = !r.success && t_ >= spec_.horizon;
  r.done = r.success || t_ >= spec_.horizon;
  r.observation = s.observation();
  return r;
}

StepResult PointPushEnv::step(const Eigen::VectorXf& action) {
  if (action.size() != kActionDim) throw invalid_input("action must have 2 entries");
  return step(Eigen::Vector2d(action.cast<double>()));
}

Eigen::Vector2d scripted_action(const EnvState& s, const std::vector<Obstacle>& obstacles) {
  const double contact = P::agent_radius + P::object_radius;
  const Eigen::Vector2d to_goal = s.goal - s.object_pos;
  const Eigen::Vector2d dir = to_goal.norm() > 1e-9 ? Eigen::Vector2d(to_goal.normalized()) : Eigen::Vector2d(1.0, 0.0);
  const Eigen::Vector2d perp(-dir.y(), dir.x());
  const Eigen::Vector2d rel = s.agent_pos - s.object_pos;
  const double along = rel.dot(dir);
  const double lateral = rel.dot(perp);

  Eigen::Vector2d target;
  if (along > -0.7 * contact) {
    // In front of or beside the object: swing around on the near side.
    const double side = lateral >= 0.0 ? 1.0 : -1.0;
    target = s.object_pos + side * perp * (contact + 0.1) - dir * (contact + 0.05);
  } else if (std::abs(lateral) > 0.03) {
    target = s.object_pos - dir * (contact + 0.03);
  } else {
    target = s.object_pos + dir * 0.3;
  }
  const Eigen::Vector2d a = 6.0 * (target - s.agent_pos) - 0.3 * s.agent_vel;
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

bool scripted_episode_succeeds(const TaskSpec& spec, uint64_t seed) {
  PointPushEnv env(spec, seed);
  env.reset();
  for (int t = 0; t < spec.horizon; ++t) {
    const auto r = env.step(scripted_action(env.state(), env.obstacles()));
    if (r.success) return true;
    if (r.done) break;
  }
  return false;
}

namespace {

struct Template {
  const char* description;
  double gx, gy;
  int layout;
};

// Near-duplicate "push the puck to the X goal" family plus dissimilar
// obstacle tasks with their own vocabulary.
constexpr Template kTemplates[] = {
    {"push the puck to the left goal", -0.6, 0.0, 0},
    {"push the puck to the right goal", 0.6, 0.0, 0},
    {"push the puck to the top goal", 0.0, 0.6, 0},
    {"steer a heavy crate around one pillar into the upper right corner", 0.55, 0.55, 1},
    {"push the puck to the top left goal", -0.45, 0.45, 0},
    {"guide block through narrow gate between two posts toward far wall", 0.0, 0.7, 2},
    {"push the puck to the top right goal", 0.45, 0.45, 0},
    {"nudge disc sideways past pillar toward western corner", -0.6, 0.3, 1},
    {"push the puck to the lower left goal", -0.5, -0.3, 0},
    {"push the puck to the lower right goal", 0.5, -0.3, 0},
};
constexpr int kTemplateCount = static_cast<int>(std::size(kTemplates));

}  // namespace

std::vector<TaskSpec> task_suite(int n, uint64_t seed) {
  if (n < 2) throw config_error("task suite needs at least 2 tasks");
  std::vector<TaskSpec> suite;
  for (int k = 0; k < n; ++k) {
    const auto& tpl = kTemplates[k % kTemplateCount];
    Rng rng(derive_seed(seed, static_cast<uint64_t>(k), 0x7375697465ULL));
    TaskSpec spec;
    spec.task_id = k;
    spec.description = tpl.description;
    spec.goal = Eigen::Vector2d(tpl.gx + rng.uniform(-0.03, 0.03), tpl.gy + rng.uniform(-0.03, 0.03));
    spec.obstacle_layout = tpl.layout;
    // The agent starts behind the object, on the far side from the goal.
    spec.agent_start = spec.object_start - 0.25 * (spec.goal - spec.object_start).normalized();
    spec.agent_jitter = 0.05;
    spec.validate();
    suite.push_back(std::move(spec));
  }
  return suite;
}

std::vector<TaskSpec> repeated_suite(int n, int repeats, uint64_t seed) {
  if (repeats < 1) throw config_error("suite repeat factor must be >= 1");
  const auto base = task_suite(n, seed);
  std::vector<TaskSpec> out;
  for (int r = 0; r < repeats; ++r) {
    for (auto spec : base) {
      spec.task_id = r * n + spec.task_id;
      out.push_back(std::move(spec));
    }
  }
  return out;
}

std::string suite_manifest(const std::vector<TaskSpec>& suite) {
  std::ostringstream os;
  os.precision(17);
  os << "# task_id\tgoal_x\tgoal_y\tobstacle_layout\tdescription\n";
  for (const auto& s : suite)
    os << s.task_id << '\t' << s.goal.x() << '\t' << s.goal.y() << '\t' << s.obstacle_layout << '\t'
       << s.description << '\n';
  return os.str();
}

}  // namespace ssde
