#pragma once

// Soft actor-critic over the small dense networks in mlp.hpp: a squashed-
// Gaussian actor whose tanh output is mapped affinely onto the commanded
// acceleration ranges, twin critics with Polyak-averaged targets, and an
// auto-tuned entropy temperature. All gradients are written out analytically
// and validated against finite differences in the test suite.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stagerl/dynamics.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/mlp.hpp"
#include "stagerl/rng.hpp"
#include "stagerl/sysid.hpp"

namespace stagerl {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
// Added inside log(1 - tanh^2 + guard) so the density stays finite at the
// squash boundary.
inline constexpr double kTanhGuard = 1e-6;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)

// Actor: observation in, per-dimension mean and log-std out.
inline const std::vector<int> kActorSizes{kObsDim, 16, 16, 2 * kActionDim};
// Critics: observation + action in, scalar value out.
inline const std::vector<int> kCriticSizes{kObsDim + kActionDim, 128, 128, 1};

struct SacHyper {
  int batch_size = 512;
  double tau = 0.0045;
  double discount = 0.999;
  double learning_rate = 2e-4;
  long buffer_capacity = 1000000;
  long total_steps = 300000;
  double entropy_target = -3.0;

  void validate() const {
    if (batch_size <= 0) throw ConfigError("sac: batch_size must be positive");
    if (tau <= 0.0 || !(tau <= 1.0)) throw ConfigError("sac: tau must be in (0, 1]");
    if (discount <= 0.0 || !(discount <= 1.0)) throw ConfigError("sac: discount must be in (0, 1]");
    if (learning_rate <= 0.0) throw ConfigError("sac: learning_rate must be positive");
    if (buffer_capacity <= 0) throw ConfigError("sac: buffer_capacity must be positive");
    if (total_steps <= 0) throw ConfigError("sac: total_steps must be positive");
    if (!std::isfinite(entropy_target)) throw ConfigError("sac: entropy_target must be finite");
  }
};

inline nlohmann::json sac_hyper_to_json(const SacHyper& h) {
  return nlohmann::json{{"batch_size", h.batch_size},
                        {"tau", h.tau},
                        {"discount", h.discount},
                        {"learning_rate", h.learning_rate},
                        {"buffer_capacity", h.buffer_capacity},
                        {"total_steps", h.total_steps},
                        {"entropy_target", h.entropy_target}};
}

// Defaults plus overrides; unknown keys are rejected so config typos fail
// loudly instead of silently keeping a default.
inline SacHyper sac_hyper_from_json(const nlohmann::json& j) {
  SacHyper h;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batch_size") h.batch_size = value.get<int>();
      else if (key == "tau") h.tau = value.get<double>();
      else if (key == "discount") h.discount = value.get<double>();
      else if (key == "learning_rate") h.learning_rate = value.get<double>();
      else if (key == "buffer_capacity") h.buffer_capacity = value.get<long>();
      else if (key == "total_steps") h.total_steps = value.get<long>();
      else if (key == "entropy_target") h.entropy_target = value.get<double>();
      else throw ConfigError("sac: unknown hyperparameter key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sac: malformed hyperparameters: ") + e.what());
  }
  h.validate();
  return h;
}

struct PolicyParams {
  Mlp actor;
  Mlp critic1, critic2;
  Mlp target1, target2;
  double log_temperature = 0.0;

  double temperature() const { return std::exp(log_temperature); }
};

inline void validate_policy_shapes(const PolicyParams& p) {
  auto expect = [](const Mlp& net, const std::vector<int>& sizes, const char* name) {
    if (net.layer_sizes() != sizes)
      throw ConfigError(std::string("policy: ") + name + " has unexpected layer sizes");
  };
  expect(p.actor, kActorSizes, "actor");
  expect(p.critic1, kCriticSizes, "critic1");
  expect(p.critic2, kCriticSizes, "critic2");
  expect(p.target1, kCriticSizes, "target1");
  expect(p.target2, kCriticSizes, "target2");
  if (!std::isfinite(p.log_temperature))
    throw ConfigError("policy: log_temperature must be finite");
}

// Fresh networks: fan-in uniform everywhere, with the actor's output layer
// shrunk so initial actions start near the range midpoints. Targets begin as
// exact copies of the critics. Draw order: actor, critic1, critic2.
inline PolicyParams init_policy(Rng& rng) {
  PolicyParams p;
  p.actor = Mlp::random(kActorSizes, rng, 1e-2);
  p.critic1 = Mlp::random(kCriticSizes, rng);
  p.critic2 = Mlp::random(kCriticSizes, rng);
  p.target1 = p.critic1;
  p.target2 = p.critic2;
  p.log_temperature = 0.0;
  return p;
}

// target <- (1 - tau) * target + tau * source, exactly this expression.
inline void polyak_update(Mlp& target, const Mlp& source, double tau) {
  if (target.layer_sizes() != source.layer_sizes())
    throw InvalidInput("polyak: mismatched network shapes");
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    target.weights[l] = (1.0 - tau) * target.weights[l] + tau * source.weights[l];
    target.biases[l] = (1.0 - tau) * target.biases[l] + tau * source.biases[l];
  }
}

inline nlohmann::json policy_params_to_json(const PolicyParams& p) {
  return nlohmann::json{{"actor", mlp_to_json(p.actor)},
                        {"critic1", mlp_to_json(p.critic1)},
                        {"critic2", mlp_to_json(p.critic2)},
                        {"target1", mlp_to_json(p.target1)},
                        {"target2", mlp_to_json(p.target2)},
                        {"log_temperature", p.log_temperature}};
}

inline PolicyParams policy_params_from_json(const nlohmann::json& j) {
  PolicyParams p;
  try {
    p.actor = mlp_from_json(j.at("actor"));
    p.critic1 = mlp_from_json(j.at("critic1"));
    p.critic2 = mlp_from_json(j.at("critic2"));
    p.target1 = mlp_from_json(j.at("target1"));
    p.target2 = mlp_from_json(j.at("target2"));
    p.log_temperature = j.at("log_temperature").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("policy: malformed JSON: ") + e.what());
  }
  validate_policy_shapes(p);
  return p;
}

// ---------------------------------------------------------------------------
// Update internals, exposed for finite-difference verification.

namespace sac_detail {

struct SquashSpec {
  Eigen::Vector3d center;
  Eigen::Vector3d half;
};

inline SquashSpec squash_spec(const ActionRanges& ranges) {
  SquashSpec s{ranges.center(), ranges.half_width()};
  for (int d = 0; d < kActionDim; ++d)
    if (!(s.half[d] > 0.0)) throw InvalidInput("sac: action range has zero width");
  return s;
}

struct ActorEval {
  Eigen::MatrixXd mean;         // action-dim x batch
  Eigen::MatrixXd log_std_raw;  // pre-clamp network output
  Eigen::MatrixXd log_std;      // clamped to [kLogStdMin, kLogStdMax]
  Eigen::MatrixXd sigma;
  MlpCache cache;
};

inline ActorEval actor_eval(const Mlp& actor, const Eigen::MatrixXd& obs) {
  ActorEval e;
  Eigen::MatrixXd out = actor.forward(obs, &e.cache);
  e.mean = out.topRows(kActionDim);
  e.log_std_raw = out.bottomRows(kActionDim);
  e.log_std = e.log_std_raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  e.sigma = e.log_std.array().exp();
  return e;
}

struct SampledActions {
  Eigen::MatrixXd u;        // pre-squash sample mean + sigma*eps
  Eigen::MatrixXd t;        // tanh(u)
  Eigen::MatrixXd actions;  // center + half .* t
  Eigen::VectorXd log_probs;
};

// Reparameterized squashed-Gaussian sample for a fixed noise matrix. The log
// density accounts for the tanh change of variables and the affine range map:
//   log pi(a) = sum_d [ -eps^2/2 - log sigma - log sqrt(2 pi)
//                       - log(1 - t^2 + guard) - log(half_d) ].
inline SampledActions squash_sample(const ActorEval& e, const Eigen::MatrixXd& eps,
                                    const SquashSpec& sq) {
  SampledActions s;
  s.u = e.mean + e.sigma.cwiseProduct(eps);
  s.t = s.u.array().tanh();
  s.actions = ((s.t.array().colwise() * sq.half.array()).colwise() + sq.center.array()).matrix();
  Eigen::ArrayXXd one_minus_t2 = 1.0 - s.t.array().square();
  Eigen::ArrayXXd per = -0.5 * eps.array().square() - e.log_std.array() - kHalfLog2Pi -
                        (one_minus_t2 + kTanhGuard).log();
  per.colwise() -= sq.half.array().log();
  s.log_probs = per.colwise().sum().matrix().transpose();
  return s;
}

// Density of a single action dimension in action space, for direct numeric
// checks: integrating exp() of this over (center - half, center + half)
// should give ~1.
inline double action_log_density_1d(double mean, double sigma, double center, double half,
                                    double action) {
  const double t = (action - center) / half;
  const double u = std::atanh(t);
  const double eps = (u - mean) / sigma;
  return -0.5 * eps * eps - std::log(sigma) - kHalfLog2Pi -
         std::log(1.0 - t * t + kTanhGuard) - std::log(half);
}

inline Eigen::MatrixXd critic_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) {
  Eigen::MatrixXd in(obs.rows() + actions.rows(), obs.cols());
  in.topRows(obs.rows()) = obs;
  in.bottomRows(actions.rows()) = actions;
  return in;
}

// Bootstrap targets y = r + discount * (1 - done) * (min target-Q - alpha * log pi').
inline Eigen::VectorXd td_targets(const PolicyParams& p, const Eigen::MatrixXd& next_obs,
                                  const Eigen::VectorXd& rewards, const Eigen::VectorXd& dones,
                                  const Eigen::MatrixXd& eps_next, const SacHyper& hyper,
                                  const SquashSpec& sq) {
  ActorEval e = actor_eval(p.actor, next_obs);
  SampledActions s = squash_sample(e, eps_next, sq);
  Eigen::MatrixXd in = critic_input(next_obs, s.actions);
  Eigen::VectorXd q1 = p.target1.forward(in).transpose();
  Eigen::VectorXd q2 = p.target2.forward(in).transpose();
  const double alpha = p.temperature();
  return (rewards.array() +
          hyper.discount * (1.0 - dones.array()) *
              (q1.cwiseMin(q2).array() - alpha * s.log_probs.array()))
      .matrix();
}

// Mean-squared-error loss of one critic against fixed targets; optionally
// its parameter gradients.
inline double critic_loss_and_grad(const Mlp& critic, const Eigen::MatrixXd& input,
                                   const Eigen::VectorXd& targets, MlpGrads* grads) {
  const double batch = static_cast<double>(input.cols());
  MlpCache cache;
  Eigen::VectorXd q = critic.forward(input, grads ? &cache : nullptr).transpose();
  Eigen::VectorXd diff = q - targets;
  const double loss = diff.squaredNorm() / batch;
  if (grads) {
    Eigen::MatrixXd dy = (2.0 / batch) * diff.transpose();
    *grads = backward(critic, cache, dy);
  }
  return loss;
}

struct ActorStep {
  double loss = 0.0;
  double mean_log_prob = 0.0;
  MlpGrads grads;  // actor parameter gradients (only when requested)
};

// Actor objective L = mean(alpha * log pi - min Q) under reparameterized
// actions with the given fixed noise. Gradients flow through the squash into
// the actor trunk; critic parameters are treated as constants, but their
// input gradients supply dL/da. The log-std path is masked wherever the
// clamp is active.
inline ActorStep actor_loss_and_grad(const Mlp& actor, const Mlp& critic1, const Mlp& critic2,
                                     const Eigen::MatrixXd& obs, const Eigen::MatrixXd& eps,
                                     double alpha, const SquashSpec& sq, bool want_grads) {
  const Eigen::Index batch_n = obs.cols();
  const double batch = static_cast<double>(batch_n);
  ActorEval e = actor_eval(actor, obs);
  SampledActions s = squash_sample(e, eps, sq);
  Eigen::MatrixXd in = critic_input(obs, s.actions);
  MlpCache c1, c2;
  Eigen::VectorXd q1 = critic1.forward(in, want_grads ? &c1 : nullptr).transpose();
  Eigen::VectorXd q2 = critic2.forward(in, want_grads ? &c2 : nullptr).transpose();
  ActorStep out;
  out.mean_log_prob = s.log_probs.mean();
  out.loss = alpha * out.mean_log_prob - q1.cwiseMin(q2).mean();
  if (!want_grads) return out;

  // dL/da comes from whichever critic realizes the per-sample minimum.
  Eigen::MatrixXd up1 = Eigen::MatrixXd::Zero(1, batch_n);
  Eigen::MatrixXd up2 = Eigen::MatrixXd::Zero(1, batch_n);
  for (Eigen::Index b = 0; b < batch_n; ++b)
    (q1[b] <= q2[b] ? up1 : up2)(0, b) = -1.0 / batch;
  Eigen::MatrixXd da = backward(critic1, c1, up1).dinput.bottomRows(kActionDim) +
                       backward(critic2, c2, up2).dinput.bottomRows(kActionDim);

  Eigen::ArrayXXd one_minus_t2 = 1.0 - s.t.array().square();
  // d log pi / du through the tanh correction term.
  Eigen::ArrayXXd dcorr = 2.0 * s.t.array() * one_minus_t2 / (one_minus_t2 + kTanhGuard);
  // da/du = half .* (1 - t^2).
  Eigen::ArrayXXd du =
      (alpha / batch) * dcorr + da.array() * (one_minus_t2.colwise() * sq.half.array());
  Eigen::ArrayXXd unclamped = ((e.log_std_raw.array() > kLogStdMin) &&
                               (e.log_std_raw.array() < kLogStdMax))
                                  .cast<double>();
  Eigen::ArrayXXd dlog_std =
      (du * e.sigma.array() * eps.array() - alpha / batch) * unclamped;

  Eigen::MatrixXd dy(2 * kActionDim, batch_n);
  dy.topRows(kActionDim) = du.matrix();
  dy.bottomRows(kActionDim) = dlog_std.matrix();
  out.grads = backward(actor, e.cache, dy);
  return out;
}

// Temperature objective L = -exp(log_t) * (mean log pi + entropy_target);
// its derivative w.r.t. log_t happens to equal the loss itself.
inline double temperature_loss(double log_temperature, double mean_log_prob,
                               double entropy_target) {
  return -std::exp(log_temperature) * (mean_log_prob + entropy_target);
}

inline double temperature_grad(double log_temperature, double mean_log_prob,
                               double entropy_target) {
  return -std::exp(log_temperature) * (mean_log_prob + entropy_target);
}

}  // namespace sac_detail

// ---------------------------------------------------------------------------
// The update step.

struct SacBatch {
  Eigen::MatrixXd obs;       // kObsDim x batch
  Eigen::MatrixXd actions;   // kActionDim x batch
  Eigen::VectorXd rewards;   // batch
  Eigen::MatrixXd next_obs;  // kObsDim x batch
  Eigen::VectorXd dones;     // batch, each 0 or 1

  int size() const { return static_cast<int>(obs.cols()); }

  void validate(int expected_size) const {
    if (obs.rows() != kObsDim || next_obs.rows() != kObsDim ||
        actions.rows() != kActionDim)
      throw InvalidInput("sac batch: wrong row counts");
    const Eigen::Index n = obs.cols();
    if (n != actions.cols() || n != next_obs.cols() || n != rewards.size() ||
        n != dones.size())
      throw InvalidInput("sac batch: inconsistent batch sizes");
    if (n != expected_size)
      throw InvalidInput("sac batch: got " + std::to_string(n) + " samples, expected " +
                         std::to_string(expected_size));
  }
};

struct SacOptState {
  MlpAdam actor_opt, critic1_opt, critic2_opt;
  ScalarAdam temperature_opt;

  static SacOptState zeros_like(const PolicyParams& p) {
    return {MlpAdam::zeros_like(p.actor), MlpAdam::zeros_like(p.critic1),
            MlpAdam::zeros_like(p.critic2), ScalarAdam{}};
  }
};

struct SacLosses {
  double critic1_loss = 0.0;
  double critic2_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double temperature = 0.0;  // after the update
  double mean_log_prob = 0.0;
};

// One full update: critics toward bootstrap targets, then the actor against
// the freshly updated critics, then the temperature toward the entropy
// target, then Polyak target tracking. Noise is drawn from `rng` in a fixed
// order (next-state actions first, then current-state actions, column by
// column), so identical inputs give bitwise-identical results.
inline SacLosses sac_update(PolicyParams& params, SacOptState& opt, const SacBatch& batch,
                            const SacHyper& hyper, const ActionRanges& ranges, Rng& rng) {
  using namespace sac_detail;
  batch.validate(hyper.batch_size);
  const SquashSpec sq = squash_spec(ranges);
  const int batch_n = batch.size();

  auto check_finite = [](const char* which, double loss) {
    if (!std::isfinite(loss))
      throw TrainingDiverged(std::string(which) + " loss is not finite", loss);
  };

  Eigen::MatrixXd eps_next(kActionDim, batch_n), eps(kActionDim, batch_n);
  for (int b = 0; b < batch_n; ++b)
    for (int d = 0; d < kActionDim; ++d) eps_next(d, b) = rng.normal();
  for (int b = 0; b < batch_n; ++b)
    for (int d = 0; d < kActionDim; ++d) eps(d, b) = rng.normal();

  AdamConfig acfg;
  acfg.lr = hyper.learning_rate;

  SacLosses losses;
  const double alpha = params.temperature();

  Eigen::VectorXd y =
      td_targets(params, batch.next_obs, batch.rewards, batch.dones, eps_next, hyper, sq);
  Eigen::MatrixXd in = critic_input(batch.obs, batch.actions);
  MlpGrads g1, g2;
  losses.critic1_loss = critic_loss_and_grad(params.critic1, in, y, &g1);
  losses.critic2_loss = critic_loss_and_grad(params.critic2, in, y, &g2);
  check_finite("critic1", losses.critic1_loss);
  check_finite("critic2", losses.critic2_loss);
  opt.critic1_opt.step(params.critic1, g1, acfg);
  opt.critic2_opt.step(params.critic2, g2, acfg);

  ActorStep astep = actor_loss_and_grad(params.actor, params.critic1, params.critic2,
                                        batch.obs, eps, alpha, sq, true);
  check_finite("actor", astep.loss);
  losses.actor_loss = astep.loss;
  losses.mean_log_prob = astep.mean_log_prob;
  opt.actor_opt.step(params.actor, astep.grads, acfg);

  losses.temperature_loss = sac_detail::temperature_loss(
      params.log_temperature, astep.mean_log_prob, hyper.entropy_target);
  check_finite("temperature", losses.temperature_loss);
  const double tgrad = sac_detail::temperature_grad(
      params.log_temperature, astep.mean_log_prob, hyper.entropy_target);
  opt.temperature_opt.step(params.log_temperature, tgrad, acfg);
  losses.temperature = params.temperature();

  polyak_update(params.target1, params.critic1, hyper.tau);
  polyak_update(params.target2, params.critic2, hyper.tau);
  return losses;
}

// ---------------------------------------------------------------------------
// Rollout-time action selection.

// Stochastic mode draws one normal per action dimension (in order) from
// `rng`; deterministic mode takes the squashed mean and draws nothing. The
// returned log-probability is the density at the emitted action.
inline std::pair<Action, double> sample_action(const PolicyParams& params,
                                               const Observation& obs, bool deterministic,
                                               const ActionRanges& ranges, Rng& rng) {
  using namespace sac_detail;
  if (!obs.allFinite()) throw InvalidInput("sample_action: observation must be finite");
  const SquashSpec sq = squash_spec(ranges);
  ActorEval e = actor_eval(params.actor, obs);
  Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(kActionDim, 1);
  if (!deterministic)
    for (int d = 0; d < kActionDim; ++d) eps(d, 0) = rng.normal();
  SampledActions s = squash_sample(e, eps, sq);
  return {Action::from_vec(s.actions.col(0)), s.log_probs[0]};
}

}  // namespace stagerl
