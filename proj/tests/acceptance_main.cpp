// End-to-end acceptance suite. Each numbered check prints exactly one
// [PASS]/[FAIL] line; the process exit code is the number of failures.
//
//   usage: stagerl_acceptance <cli-binary> [scratch-dir]
//
// The checks run fast ones first (1, 2, 3, 6, 7), then the desk-scale
// training run that checks 4, 5, and 8 share, then the command-line
// reproducibility check (9), which shells out to <cli-binary>.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stagerl/agent.hpp"
#include "stagerl/curriculum.hpp"
#include "stagerl/pathfollow.hpp"
#include "stagerl/replay.hpp"
#include "stagerl/sysid.hpp"
#include "stagerl/trainer.hpp"

namespace fs = std::filesystem;
using namespace stagerl;

namespace {

std::string g_cli;      // path to the command-line binary
std::string g_scratch;  // fresh scratch directory for artifacts

const Tolerances kTolRelaxed{0.3, deg_to_rad(17.0)};
const Tolerances kTolTight{0.05, deg_to_rad(1.0)};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Outcome ok(std::string d) { return {true, std::move(d)}; }
Outcome bad(std::string d) { return {false, std::move(d)}; }

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-6});
}

// ---------------------------------------------------------------------------
// 1. Model recovery: a random degree-3 coefficient matrix, sampled on the
//    full command grid without noise, must be identified to 1e-6 relative
//    accuracy in under a second.

Outcome check_model_recovery() {
  Rng rng(101);
  VelocityModel truth;
  for (int d = 0; d < 3; ++d)
    for (int n = 0; n < kFeatureCount; ++n) {
      const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      truth.coeffs(d, n) = sign * rng.uniform(0.1, 1.0);
    }

  const auto t0 = std::chrono::steady_clock::now();
  const auto commands = make_grid(ActionRanges{}, {9, 9, 9});
  const IdentificationDataset data = synthesize_dataset(truth, commands, 0.0, rng);
  const VelocityModel fitted = fit(data);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  double worst = 0.0;
  for (int d = 0; d < 3; ++d)
    for (int n = 0; n < kFeatureCount; ++n)
      worst = std::max(worst, std::abs(fitted.coeffs(d, n) - truth.coeffs(d, n)) /
                                  std::abs(truth.coeffs(d, n)));
  if (worst > 1e-6)
    return bad(fmt("worst relative coefficient error %.3e exceeds 1e-6", worst));
  if (wall >= 1.0) return bad(fmt("identification took %.3f s (limit 1 s)", wall));
  return ok(
      fmt("worst relative error %.3e over %zu samples in %.3f s", worst, data.size(), wall));
}

// ---------------------------------------------------------------------------
// 2. Feature count and reward bookkeeping: the regression basis has exactly
//    19 monomials, and over 1000 random command sequences the negated
//    accumulated reward must equal an independently computed cost total.

Outcome check_reward_accounting() {
  if (expand_features(Action{0.1, -0.2, 0.3}).size() != 19)
    return bad("feature expansion does not emit 19 monomials");

  EnvConfig cfg;
  cfg.model = default_ground_truth_model();
  Environment env(cfg);
  const RewardWeights& w = cfg.weights;
  Rng rng(202);
  double worst = 0.0;

  for (int seq = 0; seq < 1000; ++seq) {
    env.reset(split_seed(909, static_cast<std::uint64_t>(seq)));
    const int steps = 1 + static_cast<int>(rng.uniform_index(40));
    double acc_reward = 0.0, acc_cost = 0.0;
    double px = 0.0, py = 0.0, pt = 0.0;  // previous executed command
    for (int s = 0; s < steps; ++s) {
      // Deliberately overshoot the ranges now and then to exercise clamping.
      const Action a{rng.uniform(cfg.ranges.lo[0] - 0.1, cfg.ranges.hi[0] + 0.1),
                     rng.uniform(cfg.ranges.lo[1] - 0.1, cfg.ranges.hi[1] + 0.1),
                     rng.uniform(cfg.ranges.lo[2] - 0.1, cfg.ranges.hi[2] + 0.1)};
      const StepResult r = env.step(a);
      const Action& u = env.prev_action();  // executed (clamped) command
      const double dx = u.ax - px, dy = u.ay - py, dt = u.atheta - pt;
      acc_cost += w.r_diag[0] * u.ax * u.ax + w.r_diag[1] * u.ay * u.ay +
                  w.r_diag[2] * u.atheta * u.atheta + w.s_diag[0] * dx * dx +
                  w.s_diag[1] * dy * dy + w.s_diag[2] * dt * dt + (r.success ? 0.0 : 1.0);
      acc_reward += r.reward;
      px = u.ax;
      py = u.ay;
      pt = u.atheta;
      if (env.episode_done(r)) break;
    }
    const double diff = std::abs(-acc_reward - acc_cost);
    worst = std::max(worst, diff);
    if (diff > 1e-12 * std::max(1.0, acc_cost))
      return bad(fmt("sequence %d: |-reward - cost| = %.3e", seq, diff));
  }
  return ok(fmt("1000 sequences; worst |-reward - cost| = %.3e", worst));
}

// ---------------------------------------------------------------------------
// 3. Gradient suite: analytic actor, critic, and temperature gradients match
//    central finite differences to 1e-3 relative on 24 random configurations.

bool relu_safe(const Mlp& net, const Eigen::MatrixXd& x, double margin) {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
    Eigen::MatrixXd z = (net.weights[l] * a).colwise() + net.biases[l];
    if (z.cwiseAbs().minCoeff() < margin) return false;
    a = z.cwiseMax(0.0);
  }
  return true;
}

struct FdConfig {
  Mlp actor, critic1, critic2;
  Eigen::MatrixXd obs, eps;
  double alpha = 0.0;
  sac_detail::SquashSpec sq;
};

// Draws an actor-critic probe whose ReLU pre-activations, log-std clamp, and
// min-critic margin are all far from their switching points, so central
// differences see a smooth function.
bool make_fd_config(std::uint64_t seed, int obs_dim, int batch, FdConfig& f) {
  Rng rng(seed);
  f.sq = sac_detail::squash_spec(ActionRanges{});
  for (int attempt = 0; attempt < 200; ++attempt) {
    f.actor = Mlp::random({obs_dim, 8, 2 * kActionDim}, rng);
    f.critic1 = Mlp::random({obs_dim + kActionDim, 10, 1}, rng);
    f.critic2 = Mlp::random({obs_dim + kActionDim, 10, 1}, rng);
    f.obs = Eigen::MatrixXd::NullaryExpr(obs_dim, batch, [&] { return rng.uniform(-1.0, 1.0); });
    f.eps = Eigen::MatrixXd::NullaryExpr(kActionDim, batch, [&] { return rng.normal(); });
    f.alpha = rng.uniform(0.05, 0.5);
    if (!relu_safe(f.actor, f.obs, 1e-3)) continue;
    sac_detail::ActorEval e = sac_detail::actor_eval(f.actor, f.obs);
    if ((e.log_std_raw.array() - kLogStdMax).abs().minCoeff() < 1e-2 ||
        (e.log_std_raw.array() - kLogStdMin).abs().minCoeff() < 1e-2)
      continue;
    sac_detail::SampledActions s = sac_detail::squash_sample(e, f.eps, f.sq);
    Eigen::MatrixXd in = sac_detail::critic_input(f.obs, s.actions);
    if (!relu_safe(f.critic1, in, 1e-3) || !relu_safe(f.critic2, in, 1e-3)) continue;
    Eigen::VectorXd q1 = f.critic1.forward(in).transpose();
    Eigen::VectorXd q2 = f.critic2.forward(in).transpose();
    if ((q1 - q2).cwiseAbs().minCoeff() < 1e-3) continue;
    return true;
  }
  return false;
}

Outcome check_gradients() {
  int configs = 0;
  double worst = 0.0;
  const double h = 1e-5;

  // Critic gradients: 8 random network/batch draws, every parameter probed.
  for (std::uint64_t seed = 301; seed < 309; ++seed) {
    Rng rng(seed);
    Mlp critic;
    Eigen::MatrixXd input;
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      critic = Mlp::random({6, 9, 1}, rng);
      input = Eigen::MatrixXd::NullaryExpr(6, 5, [&] { return rng.uniform(-1.0, 1.0); });
      found = relu_safe(critic, input, 1e-3);
    }
    if (!found)
      return bad(fmt("no kink-free critic configuration for seed %llu",
                     static_cast<unsigned long long>(seed)));
    Eigen::VectorXd targets =
        Eigen::VectorXd::NullaryExpr(5, [&] { return rng.uniform(-1.0, 1.0); });
    MlpGrads g;
    sac_detail::critic_loss_and_grad(critic, input, targets, &g);
    auto probe = [&](double& param, double analytic) {
      const double orig = param;
      param = orig + h;
      const double up = sac_detail::critic_loss_and_grad(critic, input, targets, nullptr);
      param = orig - h;
      const double dn = sac_detail::critic_loss_and_grad(critic, input, targets, nullptr);
      param = orig;
      worst = std::max(worst, rel_err(analytic, (up - dn) / (2 * h)));
      return worst < 1e-3;
    };
    for (std::size_t l = 0; l < critic.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < critic.weights[l].rows(); ++i)
        for (Eigen::Index j = 0; j < critic.weights[l].cols(); ++j)
          if (!probe(critic.weights[l](i, j), g.dweights[l](i, j)))
            return bad(fmt("critic gradient mismatch (seed %llu), rel err %.3e",
                           static_cast<unsigned long long>(seed), worst));
      for (Eigen::Index i = 0; i < critic.biases[l].size(); ++i)
        if (!probe(critic.biases[l][i], g.dbiases[l][i]))
          return bad(fmt("critic bias gradient mismatch (seed %llu), rel err %.3e",
                         static_cast<unsigned long long>(seed), worst));
    }
    ++configs;
  }

  // Actor gradients through the squashed sample and the min of both critics.
  for (std::uint64_t seed = 401; seed < 409; ++seed) {
    FdConfig f;
    if (!make_fd_config(seed, 5, 4, f))
      return bad(fmt("no kink-free actor configuration for seed %llu",
                     static_cast<unsigned long long>(seed)));
    const sac_detail::ActorStep step = sac_detail::actor_loss_and_grad(
        f.actor, f.critic1, f.critic2, f.obs, f.eps, f.alpha, f.sq, true);
    auto loss_at = [&] {
      return sac_detail::actor_loss_and_grad(f.actor, f.critic1, f.critic2, f.obs, f.eps,
                                             f.alpha, f.sq, false)
          .loss;
    };
    auto probe = [&](double& param, double analytic) {
      const double orig = param;
      param = orig + h;
      const double up = loss_at();
      param = orig - h;
      const double dn = loss_at();
      param = orig;
      worst = std::max(worst, rel_err(analytic, (up - dn) / (2 * h)));
      return worst < 1e-3;
    };
    for (std::size_t l = 0; l < f.actor.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < f.actor.weights[l].rows(); ++i)
        for (Eigen::Index j = 0; j < f.actor.weights[l].cols(); ++j)
          if (!probe(f.actor.weights[l](i, j), step.grads.dweights[l](i, j)))
            return bad(fmt("actor gradient mismatch (seed %llu), rel err %.3e",
                           static_cast<unsigned long long>(seed), worst));
      for (Eigen::Index i = 0; i < f.actor.biases[l].size(); ++i)
        if (!probe(f.actor.biases[l][i], step.grads.dbiases[l][i]))
          return bad(fmt("actor bias gradient mismatch (seed %llu), rel err %.3e",
                         static_cast<unsigned long long>(seed), worst));
    }
    ++configs;
  }

  // Temperature gradient at 8 random operating points.
  Rng rng(500);
  for (int k = 0; k < 8; ++k) {
    const double log_t = rng.uniform(-2.0, 1.0);
    const double mlp = rng.uniform(-6.0, 2.0);
    const double ht = 1e-6;
    const double fd = (sac_detail::temperature_loss(log_t + ht, mlp, -3.0) -
                       sac_detail::temperature_loss(log_t - ht, mlp, -3.0)) /
                      (2 * ht);
    worst = std::max(worst, rel_err(sac_detail::temperature_grad(log_t, mlp, -3.0), fd));
    if (worst >= 1e-3) return bad(fmt("temperature gradient mismatch, rel err %.3e", worst));
    ++configs;
  }
  return ok(fmt("%d configurations, worst relative error %.3e", configs, worst));
}

// ---------------------------------------------------------------------------
// 6. Hindsight relabeling: 10,000+ relabeled transitions must match the
//    environment's own success/reward/termination judgments exactly, with
//    goals taken from the achieved pose of a same-or-later step.

Episode rollout_random_episode(Environment& env, std::uint64_t seed, Rng& action_rng) {
  auto reset = env.reset(seed);
  Observation obs = reset.observation;
  Episode ep;
  while (true) {
    Transition t;
    t.obs = obs;
    t.prev_action = env.prev_action();
    const auto& rg = env.config().ranges;
    const Action a{action_rng.uniform(rg.lo[0], rg.hi[0]),
                   action_rng.uniform(rg.lo[1], rg.hi[1]),
                   action_rng.uniform(rg.lo[2], rg.hi[2])};
    const StepResult r = env.step(a);
    t.action = env.prev_action();
    t.reward = r.reward;
    t.next_obs = r.observation;
    t.achieved_state = r.next_state;
    t.goal = env.goal();
    t.success = r.success;
    t.done = env.episode_done(r);
    ep.push_back(t);
    obs = r.observation;
    if (t.done) return ep;
  }
}

Outcome check_hindsight_relabeling() {
  EnvConfig cfg;
  cfg.model = default_ground_truth_model();
  Environment env(cfg);
  Rng action_rng(606), her_rng(607);
  const int k = 4;
  long relabeled = 0, from_later = 0;

  for (int e = 0; relabeled < 10000; ++e) {
    if (e >= 200) return bad("relabel volume not reached within 200 episodes");
    const Episode ep = rollout_random_episode(env, split_seed(711, e), action_rng);
    const Episode out = her_relabel(ep, k, kTolRelaxed, cfg.weights, cfg.r_max, her_rng);
    if (out.size() != ep.size() * (1 + k))
      return bad(fmt("episode %d: expected %zu output transitions, got %zu", e,
                     ep.size() * (1 + k), out.size()));
    for (std::size_t i = 0; i < ep.size(); ++i) {
      const Transition& src = ep[i];
      const Transition& orig = out[i * (1 + k)];
      if (orig.goal.x != src.goal.x || orig.reward != src.reward || orig.done != src.done)
        return bad(fmt("episode %d step %zu: original transition altered", e, i));
      for (int c = 1; c <= k; ++c) {
        const Transition& r = out[i * (1 + k) + c];
        // Goal provenance: the achieved pose of some step j >= i.
        std::size_t j = ep.size();
        for (std::size_t cand = i; cand < ep.size(); ++cand) {
          const RobotState& a = ep[cand].achieved_state;
          if (a.x == r.goal.x && a.y == r.goal.y && a.theta == r.goal.theta) {
            j = cand;
            break;
          }
        }
        if (j == ep.size())
          return bad(
              fmt("episode %d step %zu: goal is not a same-or-later achieved pose", e, i));
        if (j > i) ++from_later;
        // Environment oracle: success, reward, and termination re-derived
        // from the stored poses and commands.
        const bool want_success = at_goal(src.achieved_state, r.goal, kTolRelaxed);
        const double want_reward =
            step_reward(src.action, src.prev_action, want_success, cfg.weights);
        if (r.success != want_success)
          return bad(fmt("episode %d step %zu: relabeled success disagrees", e, i));
        if (r.reward != want_reward)
          return bad(fmt("episode %d step %zu: relabeled reward %.17g, oracle %.17g", e, i,
                         r.reward, want_reward));
        if (r.done != want_success)
          return bad(fmt("episode %d step %zu: relabeled done flag disagrees", e, i));
        // Observation goal halves re-encoded, state halves untouched.
        Observation want_obs = src.obs, want_next = src.next_obs;
        encode_goal(want_obs, r.goal, cfg.r_max);
        encode_goal(want_next, r.goal, cfg.r_max);
        if (r.obs != want_obs || r.next_obs != want_next)
          return bad(fmt("episode %d step %zu: relabeled observations disagree", e, i));
        if (r.action.vec() != src.action.vec() ||
            r.prev_action.vec() != src.prev_action.vec())
          return bad(fmt("episode %d step %zu: relabeled commands altered", e, i));
        ++relabeled;
      }
    }
  }
  if (from_later == 0) return bad("no relabeled goal ever came from a strictly later step");
  return ok(fmt("%ld relabeled transitions verified (%ld from strictly later steps)",
                relabeled, from_later));
}

// ---------------------------------------------------------------------------
// 7. Tolerance schedule: never widens, position tolerance reaches its floor
//    after exactly ceil(log(0.05/1.6)/log(0.8)) = 16 promotions, and no
//    promotion happens below a 95% success window.

Outcome check_tolerance_schedule() {
  const int expected = static_cast<int>(std::ceil(std::log(0.05 / 1.6) / std::log(0.8)));
  if (expected != 16) return bad(fmt("promotion-count formula gives %d, not 16", expected));

  // (a) All-success feed: position floor at exactly the 16th promotion.
  {
    Curriculum c(initial_tolerances(-2.0, 2.0), {});
    if (c.current().pos != 1.6) return bad("initial position tolerance is not 1.6");
    double prev_pos = c.current().pos, prev_ang = c.current().ang;
    int pos_floor_at = -1;
    for (int episode = 0; episode < 6000 && !c.at_floor(); ++episode) {
      const bool promoted = c.record_episode(true);
      if (c.current().pos > prev_pos || c.current().ang > prev_ang)
        return bad("tolerances widened");
      if (c.current().pos < c.config().floor.pos || c.current().ang < c.config().floor.ang)
        return bad("tolerances fell below the floor");
      prev_pos = c.current().pos;
      prev_ang = c.current().ang;
      if (promoted && c.window_fill() != 0) return bad("window kept after a promotion");
      if (promoted && pos_floor_at < 0 && c.current().pos <= c.config().floor.pos)
        pos_floor_at = c.promotions();
    }
    if (pos_floor_at != expected)
      return bad(fmt("position floor reached after %d promotions, expected %d", pos_floor_at,
                     expected));
    if (!c.at_floor()) return bad("schedule never reached the full floor");
    const int final_promotions = c.promotions();
    for (int episode = 0; episode < 300; ++episode) c.record_episode(true);
    if (c.promotions() != final_promotions) return bad("promotion happened at the floor");
  }

  // (b) Promotion threshold boundary: 94% never promotes, 95% does.
  {
    Curriculum c(initial_tolerances(-2.0, 2.0), {});
    for (int i = 0; i < 6; ++i) c.record_episode(false);
    for (int i = 0; i < 94; ++i)
      if (c.record_episode(true)) return bad("promoted on a window below 95%");
    if (c.promotions() != 0) return bad("promoted below the 95% threshold");
    if (!c.record_episode(true)) return bad("did not promote at exactly 95%");
  }

  // (c) Random outcome stream: monotone non-increasing throughout.
  {
    Curriculum c(initial_tolerances(-2.0, 2.0), {});
    Rng rng(777);
    double prev_pos = c.current().pos, prev_ang = c.current().ang;
    for (int episode = 0; episode < 3000; ++episode) {
      c.record_episode(rng.uniform01() < 0.9);
      if (c.current().pos > prev_pos || c.current().ang > prev_ang)
        return bad("tolerances widened under a mixed outcome stream");
      prev_pos = c.current().pos;
      prev_ang = c.current().ang;
    }
  }
  return ok("floor after exactly 16 promotions; promotions only at a 95% window");
}

// ---------------------------------------------------------------------------
// 4. Desk-scale training: default hyperparameters, future-goal relabeling
//    (k=4), and the tolerance schedule must reach a 90% deterministic eval
//    success rate at (0.3 m, 17 deg) within 300k environment steps and two
//    hours of wall clock, single-threaded.

struct Trained {
  std::optional<SacAgent> agent;
  EnvConfig env_cfg;
  TrainResult result;
  double wall_s = 0.0;
};

Trained g_trained;

Outcome check_training() {
  const std::uint64_t master = 42;
  Rng rng(7);
  EnvConfig cfg;
  cfg.model = fit(synthesize_dataset(default_ground_truth_model(),
                                     make_grid(ActionRanges{}, {9, 9, 9}), 0.0, rng));
  const SacHyper hyper;
  TrainerConfig tc;
  tc.warmup_steps = 1000;
  tc.her_k = 4;
  tc.eval_every = 5000;
  tc.eval_episodes = 100;
  tc.eval_tol = kTolRelaxed;
  tc.early_stop_threshold = 0.95;

  SacAgent agent(hyper, cfg.ranges, split_seed(master, 1));
  Environment env(cfg);
  ReplayBuffer buffer(hyper.buffer_capacity);
  Curriculum curriculum(initial_tolerances(cfg.goal_min, cfg.goal_max), tc.curriculum);

  // Same seed chain as a pipeline run with master seed 42, stage 0, attempt 1.
  const std::uint64_t train_seed = split_seed(split_seed(master, 100), 1);
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  try {
    result = train_policy(agent, env, buffer, curriculum, hyper.total_steps, tc, train_seed);
  } catch (const std::exception& e) {
    return bad(fmt("training raised: %s", e.what()));
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  g_trained.agent.emplace(std::move(agent));
  g_trained.env_cfg = cfg;
  g_trained.result = result;
  g_trained.wall_s = wall;

  double best = 0.0;
  long best_step = 0;
  for (const auto& [step, ev] : result.evals)
    if (ev.success_rate > best) {
      best = ev.success_rate;
      best_step = step;
    }
  if (result.env_steps > hyper.total_steps)
    return bad(
        fmt("used %ld environment steps, budget %ld", result.env_steps, hyper.total_steps));
  if (best < 0.90)
    return bad(
        fmt("best eval success %.2f (step %ld) below 0.90 within %ld steps; wall %.0f s", best,
            best_step, result.env_steps, wall));
  if (wall > 7200.0) return bad(fmt("training took %.0f s (limit 7200 s)", wall));
  return ok(fmt("eval success %.2f at step %ld of %ld; %d promotions; wall %.0f s", best,
                best_step, result.env_steps, static_cast<int>(result.promotions.size()),
                wall));
}

// ---------------------------------------------------------------------------
// 5. Transfer: on a perturbed surrogate (3-substep latency, 0.2 s velocity
//    lag, minimum command duration 3) the relaxed-tolerance success rate
//    must be at least the strict-tolerance one and at least 80%.

Outcome check_transfer() {
  if (!g_trained.agent) return bad("no trained policy available");
  EnvConfig surr = g_trained.env_cfg;
  surr.surrogate.latency_steps = 3;
  surr.surrogate.vel_time_constant = 0.2;
  surr.surrogate.min_action_duration = 3;

  const std::uint64_t seed = split_seed(42, 55);
  const SacAgent& agent = *g_trained.agent;
  const EvalResult tight =
      evaluate_policy(agent.params(), agent.ranges(), surr, 100, kTolTight, seed);
  const EvalResult relaxed =
      evaluate_policy(agent.params(), agent.ranges(), surr, 100, kTolRelaxed, seed);
  if (relaxed.success_rate < tight.success_rate)
    return bad(fmt("relaxed success %.2f below strict success %.2f", relaxed.success_rate,
                   tight.success_rate));
  if (relaxed.success_rate < 0.80)
    return bad(fmt("relaxed success %.2f below 0.80 (strict %.2f)", relaxed.success_rate,
                   tight.success_rate));
  return ok(fmt("surrogate success %.2f relaxed vs %.2f strict over 100 episodes",
                relaxed.success_rate, tight.success_rate));
}

// ---------------------------------------------------------------------------
// 8. Path following: a rectangular four-corner mission of 40 m driven through
//    1 m sub-goals; every sub-goal reached at (0.3 m, 17 deg), average speed
//    at most 1 m/s, and metrics recomputed from the trace agree to 1e-9.

Outcome check_path_following() {
  if (!g_trained.agent) return bad("no trained policy available");
  const std::vector<std::pair<double, double>> corners{
      {0.0, 0.0}, {12.0, 0.0}, {12.0, 8.0}, {0.0, 8.0}, {0.0, 0.0}};
  SubGoalPlan plan = undersample(waypoints_to_path(corners), 1.0);
  plan.tol = kTolRelaxed;
  FollowConfig cfg;  // 1 m/s cap, 60 s per sub-goal
  const RobotState start{0.0, 0.0, 0.0};
  const std::string trace_path = g_scratch + "/mission-trace.jsonl";

  const SacAgent& agent = *g_trained.agent;
  FollowResult r;
  try {
    JsonlWriter trace(trace_path);
    r = follow(plan, agent.params(), agent.ranges(), g_trained.env_cfg, start, cfg,
               split_seed(42, 88), &trace);
  } catch (const FollowFailed& e) {
    return bad(fmt("mission failed: %s (%d of %zu sub-goals)", e.what(), e.reached,
                   plan.goals.size()));
  }

  if (r.metrics.subgoal_times.size() != plan.goals.size())
    return bad(fmt("reached %zu of %zu sub-goals", r.metrics.subgoal_times.size(),
                   plan.goals.size()));
  if (r.metrics.average_speed_mps > 1.0 + 1e-12)
    return bad(fmt("average speed %.3f m/s exceeds 1 m/s", r.metrics.average_speed_mps));
  if (r.metrics.path_length_m < 38.0)
    return bad(fmt("driven length %.2f m suspiciously short for a 40 m mission",
                   r.metrics.path_length_m));

  // Recompute every reported metric from the trace alone.
  const auto recs = read_jsonl(trace_path);
  if (recs.size() != static_cast<std::size_t>(r.steps) + 1)
    return bad(fmt("trace holds %zu records for %ld steps", recs.size(), r.steps));
  double len = 0.0;
  for (std::size_t i = 1; i < recs.size(); ++i)
    len += std::hypot(recs[i]["x"].get<double>() - recs[i - 1]["x"].get<double>(),
                      recs[i]["y"].get<double>() - recs[i - 1]["y"].get<double>());
  const double dur = recs.back()["t"].get<double>() - recs.front()["t"].get<double>();
  const double avg = dur > 0.0 ? len / dur : 0.0;
  if (std::abs(len - r.metrics.path_length_m) > 1e-9)
    return bad(fmt("trace length %.12f vs reported %.12f", len, r.metrics.path_length_m));
  if (std::abs(dur - r.metrics.duration_s) > 1e-9)
    return bad(fmt("trace duration %.12f vs reported %.12f", dur, r.metrics.duration_s));
  if (std::abs(avg - r.metrics.average_speed_mps) > 1e-9)
    return bad(fmt("trace speed %.12f vs reported %.12f", avg, r.metrics.average_speed_mps));
  return ok(fmt("%zu sub-goals, %.1f m in %.1f s (%.3f m/s), trace agrees to 1e-9",
                plan.goals.size(), r.metrics.path_length_m, r.metrics.duration_s,
                r.metrics.average_speed_mps));
}

// ---------------------------------------------------------------------------
// 9. Reproducibility: re-running a finished pipeline from its manifest must
//    reproduce every checkpoint and report byte for byte.

int run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >> " + g_scratch + "/cli.log 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome check_reproducibility() {
  const std::string s = g_scratch;
  if (run_cli("sysid --synthetic --grid 5 5 5 --seed 3 --out-dir " + s + "/fit") != 0)
    return bad("model identification command failed (see cli.log)");
  {
    std::ofstream cfg(s + "/repro.json");
    cfg << R"({
  "model": "fit/model.json",
  "hyper": { "batch_size": 32, "buffer_capacity": 5000 },
  "env": { "horizon": 40, "obs_noise_sigma": 0.01 },
  "trainer": { "warmup_steps": 200, "eval_every": 0, "eval_episodes": 4 },
  "stages": [
    { "name": "core", "kind": "core-train", "budget": 400,
      "gate": { "metric": "success_rate", "threshold": 0.0, "eval_episodes": 4 } },
    { "name": "probe", "kind": "surrogate-eval", "budget": 4,
      "env": { "surrogate": { "latency_steps": 1 } },
      "gate": { "threshold": 0.0 } }
  ]
})";
  }
  // The config's model path is relative to the config file itself.
  if (run_cli("pipeline --config " + s + "/repro.json --seed 9 --out-dir " + s + "/runA") != 0)
    return bad("pipeline run failed (see cli.log)");
  if (run_cli("rerun --manifest " + s + "/runA/manifest.json --out-dir " + s + "/runB") != 0)
    return bad("manifest rerun failed (see cli.log)");

  int compared = 0, checkpoints = 0, reports = 0;
  for (const auto& entry : fs::recursive_directory_iterator(s + "/runA")) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), s + "/runA").generic_string();
    if (rel == "manifest.json") continue;  // carries its own creation time
    const fs::path other = fs::path(s + "/runB") / rel;
    if (!fs::exists(other)) return bad(fmt("rerun did not produce %s", rel.c_str()));
    if (slurp(entry.path()) != slurp(other))
      return bad(fmt("%s differs after rerun", rel.c_str()));
    ++compared;
    if (rel.rfind("checkpoints/", 0) == 0) ++checkpoints;
    if (rel.rfind("reports/", 0) == 0) ++reports;
  }
  if (checkpoints < 2 || reports < 2)
    return bad(
        fmt("expected two checkpoints and two reports, saw %d and %d", checkpoints, reports));
  return ok(fmt("%d artifacts byte-identical across rerun (%d checkpoints, %d reports)",
                compared, checkpoints, reports));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <cli-binary> [scratch-dir]\n", argv[0]);
    return 64;
  }
  g_cli = argv[1];
  g_scratch = argc > 2 ? argv[2] : (fs::temp_directory_path() / "stagerl-acceptance").string();
  std::error_code ec;
  fs::remove_all(g_scratch, ec);
  fs::create_directories(g_scratch);

  struct Check {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  // Fast checks first; the training run that 4, 5, and 8 share comes after.
  const std::vector<Check> checks{
      {1, "model recovery", check_model_recovery},
      {2, "reward accounting", check_reward_accounting},
      {3, "gradient suite", check_gradients},
      {6, "hindsight relabeling", check_hindsight_relabeling},
      {7, "tolerance schedule", check_tolerance_schedule},
      {4, "desk-scale training", check_training},
      {5, "surrogate transfer", check_transfer},
      {8, "path following", check_path_following},
      {9, "reproducibility", check_reproducibility},
  };

  int failures = 0;
  for (const auto& c : checks) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = bad(fmt("raised: %s", e.what()));
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
