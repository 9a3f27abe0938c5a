#pragma once

// Goal-conditioned planar kinematic environment.
//
// The policy runs at 10 Hz and the integrator at 30 Hz: each policy step
// holds one command for three substeps. Commanded body velocities pass
// through the identified velocity model, are rotated into the world frame by
// the current heading, and integrated forward. A perturbed variant layers
// command latency, a first-order velocity lag, a minimum command duration,
// and extra observation noise on top of the same substep loop; the default
// (inert) configuration reproduces the clean simulator bit for bit.

#include <cmath>
#include <deque>
#include <fstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "json.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/geometry.hpp"
#include "stagerl/rng.hpp"
#include "stagerl/sysid.hpp"

namespace stagerl {

inline constexpr int kObsDim = 8;

struct RobotState {
  double x = 0.0, y = 0.0, theta = 0.0;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta);
  }
};

struct Goal {
  double x = 0.0, y = 0.0, theta = 0.0;
};

inline Goal goal_from_state(const RobotState& s) { return {s.x, s.y, s.theta}; }

struct Tolerances {
  double pos = 0.05;                  // metres
  double ang = deg_to_rad(1.0);       // radians
};

// Reward is -(u'Ru + (u-u_prev)'S(u-u_prev) + lambda) with diagonal R, S and
// lambda = 1 away from the goal, 0 inside the tolerance box.
struct RewardWeights {
  Eigen::Vector3d r_diag{0.0, 0.8, 0.8};
  Eigen::Vector3d s_diag{0.2, 0.2, 0.2};
};

using Observation = Eigen::Matrix<double, kObsDim, 1>;

struct StepResult {
  RobotState next_state;
  Observation observation;
  double reward = 0.0;
  bool success = false;
  int elapsed_steps = 0;
};

// Position error is Euclidean; heading error is the wrapped absolute
// difference, in [0, pi].
inline std::pair<double, double> pose_errors(const RobotState& s, const Goal& g) {
  double ep = std::hypot(g.x - s.x, g.y - s.y);
  double eth = angular_distance(s.theta, g.theta);
  return {ep, eth};
}

inline double step_reward(const Action& u, const Action& u_prev, bool at_goal,
                          const RewardWeights& w) {
  Eigen::Vector3d uv = u.vec();
  Eigen::Vector3d du = uv - u_prev.vec();
  double cost = uv.dot(w.r_diag.cwiseProduct(uv)) + du.dot(w.s_diag.cwiseProduct(du));
  return -(cost + (at_goal ? 0.0 : 1.0));
}

// Success test: both errors strictly below tolerance, on the true pose.
inline bool at_goal(const RobotState& s, const Goal& g, const Tolerances& tol) {
  auto [ep, eth] = pose_errors(s, g);
  return ep < tol.pos && eth < tol.ang;
}

// Writes the goal half of an observation (entries 4..7): scaled position
// plus heading sin/cos, always noise-free.
inline void encode_goal(Observation& o, const Goal& g, double r_max) {
  o[4] = g.x / r_max;
  o[5] = g.y / r_max;
  o[6] = std::sin(g.theta);
  o[7] = std::cos(g.theta);
}

// Noise-free observation encoding: positions scaled by r_max, headings as
// sin/cos pairs; goal half exact.
inline Observation encode_observation(const RobotState& s, const Goal& g, double r_max) {
  Observation o;
  o << s.x / r_max, s.y / r_max, std::sin(s.theta), std::cos(s.theta), 0, 0, 0, 0;
  encode_goal(o, g, r_max);
  return o;
}

// Adds i.i.d. Gaussian noise (std sigma) to the robot state before encoding
// (draw order x, y, theta); the goal is encoded exactly.
inline Observation observe(const RobotState& s, const Goal& g, double sigma, double r_max,
                           Rng& rng) {
  RobotState noisy = s;
  if (sigma > 0.0) {
    noisy.x += sigma * rng.normal();
    noisy.y += sigma * rng.normal();
    noisy.theta += sigma * rng.normal();
  }
  return encode_observation(noisy, g, r_max);
}

// Perturbations layered onto the clean simulator. Defaults are inert.
struct SurrogateConfig {
  int latency_steps = 0;           // command delay, in substeps
  double vel_time_constant = 0.0;  // first-order lag tau (s); 0 = none
  int min_action_duration = 1;     // substeps a command must persist
  double extra_obs_noise = 0.0;    // added to the observation noise std

  bool inert() const {
    return latency_steps == 0 && vel_time_constant == 0.0 &&
           min_action_duration <= 1 && extra_obs_noise == 0.0;
  }

  void validate() const {
    if (latency_steps < 0 || min_action_duration < 1 || vel_time_constant < 0.0 ||
        extra_obs_noise < 0.0)
      throw InvalidInput("surrogate config: latency >= 0, min duration >= 1, "
                         "time constant >= 0, extra noise >= 0");
  }
};

struct EnvConfig {
  VelocityModel model;
  ActionRanges ranges;
  Tolerances tol{0.05, deg_to_rad(1.0)};
  RewardWeights weights;
  double obs_noise_sigma = 0.01;
  double start_noise_sigma = 0.05;
  int horizon = 300;               // policy steps per episode
  double goal_min = -2.0, goal_max = 2.0;
  double r_max = 2.0;
  int sim_hz = 30, policy_hz = 10;
  SurrogateConfig surrogate;

  int substeps() const { return sim_hz / policy_hz; }
  double dt() const { return 1.0 / sim_hz; }
  double policy_dt() const { return 1.0 / policy_hz; }

  void validate() const {
    if (sim_hz <= 0 || policy_hz <= 0 || sim_hz % policy_hz != 0)
      throw ConfigError("env: sim_hz must be a positive multiple of policy_hz");
    if (horizon <= 0) throw ConfigError("env: horizon must be positive");
    if (tol.pos <= 0.0 || tol.ang <= 0.0) throw ConfigError("env: tolerances must be positive");
    if (!(goal_min < goal_max)) throw ConfigError("env: goal_min must be < goal_max");
    if (r_max <= 0.0) throw ConfigError("env: r_max must be positive");
    if (obs_noise_sigma < 0.0 || start_noise_sigma < 0.0)
      throw ConfigError("env: noise sigmas must be >= 0");
    surrogate.validate();
  }
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)), tol_(cfg_.tol) {
    cfg_.validate();
    reset_pipeline();
  }

  struct ResetResult {
    RobotState state;
    Goal goal;
    Observation observation;
  };

  // Start pose is the origin plus Gaussian noise; goal uniform over the
  // training region. Draw order: start x, y, theta; goal x, y, theta.
  ResetResult reset(std::uint64_t seed) {
    rng_.seed(seed);
    state_ = RobotState{};
    if (cfg_.start_noise_sigma > 0.0) {
      state_.x = cfg_.start_noise_sigma * rng_.normal();
      state_.y = cfg_.start_noise_sigma * rng_.normal();
      state_.theta = wrap_angle(cfg_.start_noise_sigma * rng_.normal());
    }
    goal_.x = rng_.uniform(cfg_.goal_min, cfg_.goal_max);
    goal_.y = rng_.uniform(cfg_.goal_min, cfg_.goal_max);
    goal_.theta = rng_.uniform(-kPi, kPi);
    begin_episode();
    return {state_, goal_, observe(state_, goal_, obs_sigma(), cfg_.r_max, rng_)};
  }

  // Places the robot exactly; used by controllers that manage their own
  // goals (path following) and by tests.
  ResetResult reset_to(const RobotState& s, const Goal& g, std::uint64_t seed) {
    rng_.seed(seed);
    state_ = s;
    goal_ = g;
    begin_episode();
    return {state_, goal_, observe(state_, goal_, obs_sigma(), cfg_.r_max, rng_)};
  }

  StepResult step(const Action& commanded) {
    if (!commanded.finite()) throw InvalidInput("step: non-finite action");
    bool clamped = false;
    const Action cmd = cfg_.ranges.clamp(commanded, &clamped);
    if (clamped) ++clamp_events_;

    const double dt = cfg_.dt();
    const int n = cfg_.substeps();
    for (int k = 0; k < n; ++k) {
      const Action applied = pipeline_substep(cmd);
      const Eigen::Vector3d target = cfg_.model.predict(applied).vec();
      if (cfg_.surrogate.vel_time_constant > 0.0) {
        // Exact first-order step response over one substep; reproduces the
        // continuous lag at the substep boundaries for any tau.
        const double a = 1.0 - std::exp(-dt / cfg_.surrogate.vel_time_constant);
        vel_ += a * (target - vel_);
      } else {
        vel_ = target;
      }
      const double c = std::cos(state_.theta), s = std::sin(state_.theta);
      state_.x += (c * vel_[0] - s * vel_[1]) * dt;
      state_.y += (s * vel_[0] + c * vel_[1]) * dt;
      state_.theta = wrap_angle(state_.theta + vel_[2] * dt);
    }
    if (!state_.finite())
      throw SimulationDiverged("step: state became non-finite");

    const bool success = at_goal(state_, goal_, tol_);
    const double r = step_reward(cmd, prev_action_, success, cfg_.weights);
    prev_action_ = cmd;
    ++steps_;
    Observation obs = observe(state_, goal_, obs_sigma(), cfg_.r_max, rng_);
    return {state_, obs, r, success, steps_};
  }

  bool episode_done(const StepResult& r) const {
    return r.success || r.elapsed_steps >= cfg_.horizon;
  }

  const RobotState& state() const { return state_; }
  const Goal& goal() const { return goal_; }
  void set_goal(const Goal& g) { goal_ = g; }
  const Tolerances& tolerances() const { return tol_; }
  void set_tolerances(const Tolerances& t) { tol_ = t; }
  const Action& prev_action() const { return prev_action_; }
  int elapsed_steps() const { return steps_; }
  long clamp_events() const { return clamp_events_; }
  const EnvConfig& config() const { return cfg_; }
  double obs_sigma() const { return cfg_.obs_noise_sigma + cfg_.surrogate.extra_obs_noise; }
  Rng& rng() { return rng_; }
  // Body velocity executed during the most recent substep.
  const Eigen::Vector3d& executed_velocity() const { return vel_; }

 private:
  void begin_episode() {
    prev_action_ = Action{};
    steps_ = 0;
    reset_pipeline();
  }

  void reset_pipeline() {
    latched_ = Action{};
    held_ = cfg_.surrogate.min_action_duration;  // first real command latches at once
    fifo_.assign(static_cast<std::size_t>(cfg_.surrogate.latency_steps), Action{});
    vel_.setZero();
  }

  // One substep of the command pipeline: minimum-duration latch, then the
  // latency FIFO. Returns the command the dynamics should apply now.
  Action pipeline_substep(const Action& cmd) {
    if (held_ >= cfg_.surrogate.min_action_duration && !(latched_ == cmd)) {
      latched_ = cmd;
      held_ = 0;
    }
    ++held_;
    if (cfg_.surrogate.latency_steps > 0) {
      fifo_.push_back(latched_);
      Action out = fifo_.front();
      fifo_.pop_front();
      return out;
    }
    return latched_;
  }

  EnvConfig cfg_;
  Tolerances tol_;
  RobotState state_;
  Goal goal_;
  Action prev_action_;
  int steps_ = 0;
  long clamp_events_ = 0;
  Rng rng_;

  // Command-pipeline state (inert config leaves it pass-through).
  Action latched_;
  int held_ = 1;
  std::deque<Action> fifo_;
  Eigen::Vector3d vel_{0.0, 0.0, 0.0};
};

// Per-policy-step trace record; `t` is simulated time in seconds.
inline nlohmann::json trace_record(double t, const RobotState& s, const Action& a,
                                   double reward, double e_p, double e_theta, bool success) {
  return nlohmann::json{
      {"t", t},           {"x", s.x},        {"y", s.y},
      {"theta", s.theta}, {"a_x", a.ax},     {"a_y", a.ay},
      {"a_theta", a.atheta}, {"reward", reward}, {"e_p", e_p},
      {"e_theta", e_theta},  {"success", success}};
}

// ---------------------------------------------------------------------------
// Config JSON. "model" may be a path (resolved against base_dir) or an
// inline model object, which keeps run manifests self-contained.

inline nlohmann::json env_config_to_json(const EnvConfig& c, bool inline_model = true) {
  nlohmann::json j;
  j["model"] = inline_model ? model_to_json(c.model) : nlohmann::json();
  j["action_ranges"] = {{"lo", {c.ranges.lo[0], c.ranges.lo[1], c.ranges.lo[2]}},
                        {"hi", {c.ranges.hi[0], c.ranges.hi[1], c.ranges.hi[2]}}};
  j["tolerance_pos"] = c.tol.pos;
  j["tolerance_ang_deg"] = rad_to_deg(c.tol.ang);
  j["reward"] = {{"r_diag", {c.weights.r_diag[0], c.weights.r_diag[1], c.weights.r_diag[2]}},
                 {"s_diag", {c.weights.s_diag[0], c.weights.s_diag[1], c.weights.s_diag[2]}}};
  j["obs_noise_sigma"] = c.obs_noise_sigma;
  j["start_noise_sigma"] = c.start_noise_sigma;
  j["horizon"] = c.horizon;
  j["goal_min"] = c.goal_min;
  j["goal_max"] = c.goal_max;
  j["r_max"] = c.r_max;
  j["sim_hz"] = c.sim_hz;
  j["policy_hz"] = c.policy_hz;
  if (!c.surrogate.inert())
    j["surrogate"] = {{"latency_steps", c.surrogate.latency_steps},
                      {"vel_time_constant", c.surrogate.vel_time_constant},
                      {"min_action_duration", c.surrogate.min_action_duration},
                      {"extra_obs_noise", c.surrogate.extra_obs_noise}};
  return j;
}

inline EnvConfig env_config_from_json(const nlohmann::json& j,
                                      const std::string& base_dir = ".") {
  EnvConfig c;
  try {
    if (!j.is_object()) throw ConfigError("env: config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
      if (key == "model") {
        if (v.is_string()) {
          std::string p = v.get<std::string>();
          if (!p.empty() && p[0] != '/') p = base_dir + "/" + p;
          c.model = load_model(p);
        } else if (v.is_object()) {
          c.model = model_from_json(v);
        } else if (!v.is_null()) {
          throw ConfigError("env: 'model' must be a path or an inline model object");
        }
      } else if (key == "action_ranges") {
        for (int d = 0; d < 3; ++d) {
          c.ranges.lo[d] = v.at("lo")[d].get<double>();
          c.ranges.hi[d] = v.at("hi")[d].get<double>();
        }
      } else if (key == "tolerance_pos") {
        c.tol.pos = v.get<double>();
      } else if (key == "tolerance_ang_deg") {
        c.tol.ang = deg_to_rad(v.get<double>());
      } else if (key == "reward") {
        for (int d = 0; d < 3; ++d) {
          c.weights.r_diag[d] = v.at("r_diag")[d].get<double>();
          c.weights.s_diag[d] = v.at("s_diag")[d].get<double>();
        }
      } else if (key == "obs_noise_sigma") {
        c.obs_noise_sigma = v.get<double>();
      } else if (key == "start_noise_sigma") {
        c.start_noise_sigma = v.get<double>();
      } else if (key == "horizon") {
        c.horizon = v.get<int>();
      } else if (key == "goal_min") {
        c.goal_min = v.get<double>();
      } else if (key == "goal_max") {
        c.goal_max = v.get<double>();
      } else if (key == "r_max") {
        c.r_max = v.get<double>();
      } else if (key == "sim_hz") {
        c.sim_hz = v.get<int>();
      } else if (key == "policy_hz") {
        c.policy_hz = v.get<int>();
      } else if (key == "surrogate") {
        if (v.is_null()) continue;
        if (!v.is_object()) throw ConfigError("env: 'surrogate' must be an object");
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "latency_steps") c.surrogate.latency_steps = sv.get<int>();
          else if (sk == "vel_time_constant") c.surrogate.vel_time_constant = sv.get<double>();
          else if (sk == "min_action_duration") c.surrogate.min_action_duration = sv.get<int>();
          else if (sk == "extra_obs_noise") c.surrogate.extra_obs_noise = sv.get<double>();
          else throw ConfigError("env: unknown surrogate key \"" + sk + "\"");
        }
      } else {
        throw ConfigError("env: unknown key \"" + key + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("env config: malformed JSON: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

}  // namespace stagerl
