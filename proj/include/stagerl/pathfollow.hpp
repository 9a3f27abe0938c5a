#pragma once

// Long-range path following with a short-range goal policy: a dense pose
// path is under-sampled into sub-goals roughly a meter apart, each sub-goal
// is re-expressed in the robot's local frame every policy step (the policy
// was trained on nearby goals around the origin), and the executed trace is
// reduced to surveillance metrics (length, duration, average speed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stagerl/csv.hpp"
#include "stagerl/dynamics.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/jsonl.hpp"
#include "stagerl/sac.hpp"

namespace stagerl {

// A pose path at map resolution. Poses reuse the Goal struct (x, y, theta).
using Path = std::vector<Goal>;

inline void validate_path(const Path& path) {
  if (path.size() < 2) throw InvalidInput("path: at least 2 poses required");
  for (const Goal& p : path)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.theta))
      throw InvalidInput("path: non-finite pose");
}

// Reads a pose path from a CSV with columns x, y, theta (radians).
inline Path path_from_csv(const std::string& file) {
  const CsvTable t = read_csv(file);
  const int cx = t.column("x"), cy = t.column("y"), ct = t.column("theta");
  Path path;
  path.reserve(t.rows.size());
  for (const auto& row : t.rows) path.push_back({row[cx], row[cy], row[ct]});
  validate_path(path);
  return path;
}

// Synthesizes a dense path from straight segments between waypoints: poses
// every `resolution` meters along each segment plus the segment end, with
// headings along the direction of travel. The first pose is the first
// waypoint, heading down the first segment.
inline Path waypoints_to_path(const std::vector<std::pair<double, double>>& waypoints,
                              double resolution = 0.05) {
  if (waypoints.size() < 2) throw InvalidInput("waypoints: at least 2 required");
  if (!(resolution > 0.0)) throw InvalidInput("waypoints: resolution must be positive");
  Path path;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const auto [x0, y0] = waypoints[i];
    const auto [x1, y1] = waypoints[i + 1];
    const double dx = x1 - x0, dy = y1 - y0;
    const double len = std::hypot(dx, dy);
    if (!(len > 0.0)) throw InvalidInput("waypoints: consecutive waypoints must be distinct");
    const double bearing = std::atan2(dy, dx);
    const long inner = static_cast<long>(std::ceil(len / resolution)) - 1;
    if (i == 0) path.push_back({x0, y0, bearing});
    for (long k = 1; k <= inner; ++k) {
      const double s = static_cast<double>(k) * resolution;
      if (s >= len) break;
      path.push_back({x0 + dx * (s / len), y0 + dy * (s / len), bearing});
    }
    path.push_back({x1, y1, bearing});
  }
  validate_path(path);
  return path;
}

// Reads waypoints from a CSV with columns x, y.
inline std::vector<std::pair<double, double>> waypoints_from_csv(const std::string& file) {
  const CsvTable t = read_csv(file);
  const int cx = t.column("x"), cy = t.column("y");
  std::vector<std::pair<double, double>> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.emplace_back(row[cx], row[cy]);
  return out;
}

struct SubGoalPlan {
  std::vector<Goal> goals;
  Tolerances tol{0.3, deg_to_rad(17.0)};
};

// Greedy arc-length walk: emits a sub-goal whenever the accumulated length
// since the last emission reaches `spacing` (within 1e-9 slack), and always
// emits the final pose. The start pose is never a sub-goal.
inline SubGoalPlan undersample(const Path& path, double spacing) {
  validate_path(path);
  if (!(spacing > 0.0)) throw InvalidInput("undersample: spacing must be positive");
  SubGoalPlan plan;
  double acc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    acc += std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
    if (acc >= spacing - 1e-9) {
      plan.goals.push_back(path[i]);
      acc = 0.0;
    }
  }
  const Goal& last = path.back();
  if (plan.goals.empty() || plan.goals.back().x != last.x || plan.goals.back().y != last.y ||
      plan.goals.back().theta != last.theta)
    plan.goals.push_back(last);
  return plan;
}

// Expresses `goal` in the robot's local frame (translate to the robot, rotate
// by -theta). Position errors and wrapped heading errors are invariant under
// this transform. A goal beyond `r_max` is replaced by a chase point on the
// r_max circle along the goal bearing, heading down that bearing.
inline Goal relative_goal(const RobotState& s, const Goal& g, double r_max) {
  if (!(r_max > 0.0)) throw InvalidInput("relative_goal: r_max must be positive");
  const double dx = g.x - s.x, dy = g.y - s.y;
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  double rx = c * dx + sn * dy;  // rotate by -theta
  double ry = -sn * dx + c * dy;
  double rtheta = wrap_angle(g.theta - s.theta);
  const double d = std::hypot(rx, ry);
  if (d > r_max) {
    const double scale = r_max / d;
    rx *= scale;
    ry *= scale;
    rtheta = std::atan2(ry, rx);  // face down the bearing while chasing
  }
  return {rx, ry, rtheta};
}

struct RunMetrics {
  double path_length_m = 0.0;
  double duration_s = 0.0;
  double average_speed_mps = 0.0;
  std::vector<double> subgoal_times;  // arrival time (s) per reached sub-goal
};

inline nlohmann::json metrics_to_json(const RunMetrics& m) {
  return nlohmann::json{{"path_length_m", m.path_length_m},
                        {"duration_s", m.duration_s},
                        {"average_speed_mps", m.average_speed_mps},
                        {"subgoal_times", m.subgoal_times}};
}

// A sub-goal was not reached within the per-sub-goal timeout. Carries the
// metrics of the partial run and how many sub-goals were reached.
struct FollowFailed : std::runtime_error {
  RunMetrics partial;
  int reached = 0;
  FollowFailed(const std::string& what, RunMetrics metrics, int reached_count)
      : std::runtime_error(what), partial(std::move(metrics)), reached(reached_count) {}
};

struct FollowConfig {
  double speed_cap = 1.0;    // m/s (and rad/s), applied per action component
  double timeout_s = 60.0;   // per sub-goal
};

struct FollowResult {
  RunMetrics metrics;
  long steps = 0;
  RobotState final_state;
};

// Drives the deterministic policy through the sub-goals in order, starting
// from `start`. Each policy step the current sub-goal is re-expressed in the
// robot's frame and the policy observes the robot at the origin; its action
// is clamped to the tighter of the command ranges and +-speed_cap before
// execution. Arrival is checked against the plan tolerances before each
// step, so at most one sub-goal is retired per step time and arrival times
// strictly increase. Exceeding the per-sub-goal timeout raises FollowFailed
// with the metrics of the partial run.
inline FollowResult follow(const SubGoalPlan& plan, const PolicyParams& params,
                           const ActionRanges& ranges, const EnvConfig& env_config,
                           const RobotState& start, const FollowConfig& cfg,
                           std::uint64_t seed, JsonlWriter* trace = nullptr) {
  if (plan.goals.empty()) throw InvalidInput("follow: plan has no sub-goals");
  if (!(plan.tol.pos > 0.0) || !(plan.tol.ang > 0.0))
    throw InvalidInput("follow: plan tolerances must be positive");
  if (!(cfg.speed_cap > 0.0)) throw InvalidInput("follow: speed cap must be positive");
  if (!(cfg.timeout_s > 0.0)) throw InvalidInput("follow: timeout must be positive");
  validate_policy_shapes(params);
  for (int d = 0; d < 3; ++d)
    if (env_config.ranges.lo[d] != ranges.lo[d] || env_config.ranges.hi[d] != ranges.hi[d])
      throw ConfigError("follow: environment action ranges differ from the policy's");

  Environment env(env_config);
  const double dt = env_config.policy_dt();
  const long timeout_steps = static_cast<long>(std::llround(cfg.timeout_s / dt));
  Rng obs_rng(split_seed(seed, 1));
  Rng unused(0);  // deterministic mode draws nothing

  double lo[3], hi[3];
  for (int d = 0; d < 3; ++d) {
    lo[d] = std::max(ranges.lo[d], -cfg.speed_cap);
    hi[d] = std::min(ranges.hi[d], cfg.speed_cap);
    if (!(lo[d] < hi[d])) throw ConfigError("follow: speed cap leaves an empty command range");
  }

  RobotState state = env.reset_to(start, plan.goals.front(), split_seed(seed, 0)).state;

  RunMetrics metrics;
  long step = 0;
  long steps_on_subgoal = 0;
  std::size_t k = 0;

  const auto finish_metrics = [&]() {
    metrics.duration_s = static_cast<double>(step) * dt;
    metrics.average_speed_mps =
        metrics.duration_s > 0.0 ? metrics.path_length_m / metrics.duration_s : 0.0;
  };

  if (trace) {
    const auto [ep0, eth0] = pose_errors(state, plan.goals[k]);
    nlohmann::json rec = trace_record(0.0, state, Action{0.0, 0.0, 0.0}, 0.0, ep0, eth0,
                                      at_goal(state, plan.goals[k], plan.tol));
    rec["subgoal"] = static_cast<long>(k);
    trace->write(rec);
  }

  while (true) {
    if (at_goal(state, plan.goals[k], plan.tol)) {
      metrics.subgoal_times.push_back(static_cast<double>(step) * dt);
      ++k;
      steps_on_subgoal = 0;
      if (k == plan.goals.size()) break;  // mission complete
    }
    if (steps_on_subgoal >= timeout_steps) {
      finish_metrics();
      throw FollowFailed("follow: sub-goal " + std::to_string(k) + " of " +
                             std::to_string(plan.goals.size()) + " not reached within " +
                             std::to_string(cfg.timeout_s) + " s",
                         metrics, static_cast<int>(k));
    }

    const Goal rel = relative_goal(state, plan.goals[k], env_config.r_max);
    const Observation obs =
        observe(RobotState{0.0, 0.0, 0.0}, rel, env.obs_sigma(), env_config.r_max, obs_rng);
    Action a = sample_action(params, obs, true, ranges, unused).first;
    a.ax = std::clamp(a.ax, lo[0], hi[0]);
    a.ay = std::clamp(a.ay, lo[1], hi[1]);
    a.atheta = std::clamp(a.atheta, lo[2], hi[2]);

    // Keep the environment's notion of the goal on the current chase point
    // (world frame) so its per-step bookkeeping stays coherent.
    const double cw = std::cos(state.theta), sw = std::sin(state.theta);
    env.set_goal({state.x + cw * rel.x - sw * rel.y, state.y + sw * rel.x + cw * rel.y,
                  wrap_angle(state.theta + rel.theta)});
    const StepResult sr = env.step(a);
    metrics.path_length_m += std::hypot(sr.next_state.x - state.x, sr.next_state.y - state.y);
    state = sr.next_state;
    ++step;
    ++steps_on_subgoal;

    if (trace) {
      const auto [ep, eth] = pose_errors(state, plan.goals[k]);
      nlohmann::json rec =
          trace_record(static_cast<double>(step) * dt, state, env.prev_action(), sr.reward, ep,
                       eth, at_goal(state, plan.goals[k], plan.tol));
      rec["subgoal"] = static_cast<long>(k);
      trace->write(rec);
    }
  }

  finish_metrics();
  FollowResult result;
  result.metrics = std::move(metrics);
  result.steps = step;
  result.final_state = state;
  return result;
}

}  // namespace stagerl
