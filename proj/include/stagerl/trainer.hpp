#pragma once

// The training and evaluation loops that drive an agent against the
// simulator: off-policy collection with hindsight relabeling, curriculum
// tolerance tracking, periodic deterministic evaluation with early stopping,
// and a deterministic seed-stream layout so every run is replayable.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stagerl/agent.hpp"
#include "stagerl/curriculum.hpp"
#include "stagerl/dynamics.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/jsonl.hpp"
#include "stagerl/replay.hpp"

namespace stagerl {

struct TrainerConfig {
  long warmup_steps = 1000;  // uniform-random actions, no gradient updates
  int update_every = 1;      // one gradient update per this many env steps
  int her_k = 4;             // future-goal relabels per stored transition
  long eval_every = 5000;    // periodic deterministic eval cadence; 0 = off
  int eval_episodes = 100;
  double early_stop_threshold = 0.95;  // stop once periodic eval reaches this
  Tolerances eval_tol{0.3, deg_to_rad(17.0)};
  CurriculumConfig curriculum;
  // Optional fixed starting tolerances; non-positive means "derive from the
  // goal region" (80% of half-width / 80% of pi).
  Tolerances initial_tol{0.0, 0.0};

  void validate() const {
    if (warmup_steps < 0) throw ConfigError("trainer: warmup_steps must be >= 0");
    if (update_every <= 0) throw ConfigError("trainer: update_every must be positive");
    if (her_k < 0) throw ConfigError("trainer: her_k must be >= 0");
    if (eval_every < 0) throw ConfigError("trainer: eval_every must be >= 0");
    if (eval_episodes <= 0) throw ConfigError("trainer: eval_episodes must be positive");
    if (!(eval_tol.pos > 0.0) || !(eval_tol.ang > 0.0))
      throw ConfigError("trainer: eval tolerances must be positive");
    curriculum.validate();
  }
};

inline nlohmann::json trainer_config_to_json(const TrainerConfig& c) {
  return nlohmann::json{
      {"warmup_steps", c.warmup_steps},
      {"update_every", c.update_every},
      {"her_k", c.her_k},
      {"eval_every", c.eval_every},
      {"eval_episodes", c.eval_episodes},
      {"early_stop_threshold", c.early_stop_threshold},
      {"eval_tolerance_pos", c.eval_tol.pos},
      {"eval_tolerance_ang_deg", rad_to_deg(c.eval_tol.ang)},
      {"initial_tolerance_pos", c.initial_tol.pos},
      {"initial_tolerance_ang_deg", rad_to_deg(c.initial_tol.ang)},
      {"curriculum",
       {{"shrink_factor", c.curriculum.shrink_factor},
        {"promote_threshold", c.curriculum.promote_threshold},
        {"window_size", c.curriculum.window_size},
        {"floor_pos", c.curriculum.floor.pos},
        {"floor_ang_deg", rad_to_deg(c.curriculum.floor.ang)}}}};
}

inline TrainerConfig trainer_config_from_json(const nlohmann::json& j) {
  TrainerConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "warmup_steps") c.warmup_steps = value.get<long>();
      else if (key == "update_every") c.update_every = value.get<int>();
      else if (key == "her_k") c.her_k = value.get<int>();
      else if (key == "eval_every") c.eval_every = value.get<long>();
      else if (key == "eval_episodes") c.eval_episodes = value.get<int>();
      else if (key == "early_stop_threshold") c.early_stop_threshold = value.get<double>();
      else if (key == "eval_tolerance_pos") c.eval_tol.pos = value.get<double>();
      else if (key == "eval_tolerance_ang_deg") c.eval_tol.ang = deg_to_rad(value.get<double>());
      else if (key == "initial_tolerance_pos") c.initial_tol.pos = value.get<double>();
      else if (key == "initial_tolerance_ang_deg")
        c.initial_tol.ang = deg_to_rad(value.get<double>());
      else if (key == "curriculum") {
        for (const auto& [ck, cv] : value.items()) {
          if (ck == "shrink_factor") c.curriculum.shrink_factor = cv.get<double>();
          else if (ck == "promote_threshold") c.curriculum.promote_threshold = cv.get<double>();
          else if (ck == "window_size") c.curriculum.window_size = cv.get<int>();
          else if (ck == "floor_pos") c.curriculum.floor.pos = cv.get<double>();
          else if (ck == "floor_ang_deg") c.curriculum.floor.ang = deg_to_rad(cv.get<double>());
          else throw ConfigError("trainer: unknown curriculum key \"" + ck + "\"");
        }
      } else {
        throw ConfigError("trainer: unknown key \"" + key + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trainer: malformed JSON: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Seed-stream layout. Every random decision in a run draws from a stream
// derived from one base seed, so runs are replayable and independent
// concerns never share a stream.

namespace seed_stream {
inline constexpr std::uint64_t kRollout = 1;   // exploration noise + warmup actions
inline constexpr std::uint64_t kSampling = 2;  // replay draws + hindsight coins
inline constexpr std::uint64_t kEval = 3;      // periodic evaluation episodes
inline constexpr std::uint64_t kReset = 4;     // per-episode environment seeds
}  // namespace seed_stream

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  double mean_episode_length = 0.0;
  int episodes = 0;
};

inline nlohmann::json eval_result_to_json(const EvalResult& r) {
  return nlohmann::json{{"success_rate", r.success_rate},
                        {"mean_return", r.mean_return},
                        {"mean_episode_length", r.mean_episode_length},
                        {"episodes", r.episodes}};
}

// Runs deterministic-mode episodes at the given tolerances. Episode e is
// seeded with split_seed(seed, e), matching what independent per-episode
// workers would use. Policy parameters are never modified. When `trace` is
// given, every step of every episode is appended as one JSON line.
inline EvalResult evaluate_policy(const PolicyParams& params, const ActionRanges& ranges,
                                  const EnvConfig& env_config, int episodes,
                                  const Tolerances& tol, std::uint64_t seed,
                                  JsonlWriter* trace = nullptr) {
  if (episodes <= 0) throw InvalidInput("evaluate: episodes must be positive");
  validate_policy_shapes(params);
  Environment env(env_config);
  env.set_tolerances(tol);
  Rng unused(0);  // deterministic mode draws nothing
  EvalResult out;
  out.episodes = episodes;
  const double dt = env_config.policy_dt();
  for (int e = 0; e < episodes; ++e) {
    auto start = env.reset(split_seed(seed, static_cast<std::uint64_t>(e)));
    Observation obs = start.observation;
    double ep_return = 0.0;
    bool success = false;
    while (true) {
      const Action a = sample_action(params, obs, true, ranges, unused).first;
      const StepResult r = env.step(a);
      ep_return += r.reward;
      if (trace) {
        const auto [ep_err, eth_err] = pose_errors(r.next_state, env.goal());
        nlohmann::json rec = trace_record(r.elapsed_steps * dt, r.next_state,
                                          env.prev_action(), r.reward, ep_err, eth_err,
                                          r.success);
        rec["episode"] = e;
        trace->write(rec);
      }
      obs = r.observation;
      if (env.episode_done(r)) {
        success = r.success;
        out.mean_episode_length += r.elapsed_steps;
        break;
      }
    }
    out.mean_return += ep_return;
    out.success_rate += success ? 1.0 : 0.0;
  }
  out.success_rate /= episodes;
  out.mean_return /= episodes;
  out.mean_episode_length /= episodes;
  return out;
}

struct PromotionEvent {
  long step = 0;
  Tolerances before;
  Tolerances after;
};

inline nlohmann::json promotion_to_json(const PromotionEvent& p) {
  return nlohmann::json{{"step", p.step},
                        {"old_eps_p", p.before.pos},
                        {"old_eps_theta", p.before.ang},
                        {"new_eps_p", p.after.pos},
                        {"new_eps_theta", p.after.ang}};
}

struct TrainResult {
  long env_steps = 0;
  long updates = 0;
  long episodes = 0;
  bool early_stopped = false;
  std::vector<PromotionEvent> promotions;
  Tolerances final_tolerances;
  std::vector<std::pair<long, EvalResult>> evals;  // (env step, result)
  SacLosses last_losses;
};

// Off-policy training for `budget_steps` environment steps (or until an
// early-stop evaluation clears the threshold). The environment's goal
// tolerances follow the curriculum; stored episodes are relabeled and
// re-graded at sampling time. A budget or early stop mid-episode stores the
// truncated episode (terminal-marked) without recording it in the
// curriculum window.
inline TrainResult train_policy(SacAgent& agent, Environment& env, ReplayBuffer& buffer,
                                Curriculum& curriculum, long budget_steps,
                                const TrainerConfig& cfg, std::uint64_t seed,
                                JsonlWriter* log = nullptr) {
  if (budget_steps <= 0) throw InvalidInput("train: budget must be positive");
  cfg.validate();
  const SacHyper& hyper = agent.hyper();
  Rng rollout_rng(split_seed(seed, seed_stream::kRollout));
  Rng sample_rng(split_seed(seed, seed_stream::kSampling));

  env.set_tolerances(curriculum.current());
  TrainResult result;
  long episode_index = 0;
  auto start = env.reset(split_seed(seed, seed_stream::kReset + 16 * episode_index));
  Observation obs = start.observation;
  Episode current;
  double ep_return = 0.0;

  const auto random_action = [&]() {
    return Action{rollout_rng.uniform(agent.ranges().lo[0], agent.ranges().hi[0]),
                  rollout_rng.uniform(agent.ranges().lo[1], agent.ranges().hi[1]),
                  rollout_rng.uniform(agent.ranges().lo[2], agent.ranges().hi[2])};
  };

  for (long step = 1; step <= budget_steps; ++step) {
    const Action chosen =
        (step <= cfg.warmup_steps) ? random_action() : agent.act(obs, false, rollout_rng);
    const Action prev = env.prev_action();
    const StepResult r = env.step(chosen);

    Transition t;
    t.obs = obs;
    t.action = env.prev_action();  // post-step: the clamped, executed command
    t.prev_action = prev;
    t.reward = r.reward;
    t.next_obs = r.observation;
    t.achieved_state = r.next_state;
    t.goal = env.goal();
    t.success = r.success;
    t.done = false;
    current.push_back(t);
    ep_return += r.reward;
    obs = r.observation;
    result.env_steps = step;
    agent.set_train_step(step);

    if (env.episode_done(r)) {
      current.back().done = true;
      buffer.push_episode(std::move(current));
      current = Episode{};
      ++result.episodes;
      const Tolerances before = curriculum.current();
      const bool promoted = curriculum.record_episode(r.success);
      if (log)
        log->write({{"type", "episode"},
                    {"step", step},
                    {"index", episode_index},
                    {"length", r.elapsed_steps},
                    {"return", ep_return},
                    {"success", r.success},
                    {"eps_p", before.pos},
                    {"eps_theta", before.ang}});
      if (promoted) {
        PromotionEvent ev{step, before, curriculum.current()};
        result.promotions.push_back(ev);
        env.set_tolerances(curriculum.current());
        if (log) {
          nlohmann::json rec = promotion_to_json(ev);
          rec["type"] = "promotion";
          log->write(rec);
        }
      }
      ++episode_index;
      auto next = env.reset(split_seed(seed, seed_stream::kReset + 16 * episode_index));
      obs = next.observation;
      ep_return = 0.0;
    }

    if (step > cfg.warmup_steps && buffer.ready(hyper.batch_size) &&
        step % cfg.update_every == 0) {
      SacBatch batch =
          buffer.sample_training(hyper.batch_size, cfg.her_k, curriculum.current(),
                                 env.config().weights, env.config().r_max, sample_rng);
      result.last_losses = agent.update(batch);
      ++result.updates;
    }

    if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
      const std::uint64_t eval_seed =
          split_seed(split_seed(seed, seed_stream::kEval), static_cast<std::uint64_t>(step));
      EvalResult er = evaluate_policy(agent.params(), agent.ranges(), env.config(),
                                      cfg.eval_episodes, cfg.eval_tol, eval_seed);
      result.evals.emplace_back(step, er);
      if (log) {
        nlohmann::json rec = eval_result_to_json(er);
        rec["type"] = "eval";
        rec["step"] = step;
        log->write(rec);
      }
      if (cfg.early_stop_threshold > 0.0 && er.success_rate >= cfg.early_stop_threshold) {
        result.early_stopped = true;
        break;
      }
    }
  }

  if (!current.empty()) {
    current.back().done = true;  // truncated by budget or early stop
    buffer.push_episode(std::move(current));
    ++result.episodes;
  }
  result.final_tolerances = curriculum.current();
  return result;
}

}  // namespace stagerl
