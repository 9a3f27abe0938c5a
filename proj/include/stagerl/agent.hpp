#pragma once

// SacAgent bundles everything a training run mutates — policy parameters,
// optimizer moments, the update-noise RNG, and the step counter — behind a
// checkpointable unit, so a run can be frozen to JSON and resumed or
// evaluated bit-for-bit.

#include <fstream>
#include <string>
#include <utility>

#include "json.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/sac.hpp"

namespace stagerl {

inline constexpr const char* kCheckpointFormat = "stagerl-policy-checkpoint";
inline constexpr int kCheckpointVersion = 1;

class SacAgent {
 public:
  SacAgent(const SacHyper& hyper, const ActionRanges& ranges, unsigned long long seed)
      : hyper_(hyper), ranges_(ranges) {
    hyper_.validate();
    Rng init_rng(split_seed(seed, 0));
    params_ = init_policy(init_rng);
    opt_ = SacOptState::zeros_like(params_);
    update_rng_ = Rng(split_seed(seed, 1));
  }

  // Rollout-time action; stochastic noise comes from the caller's RNG so
  // exploration and parameter updates draw from independent streams.
  Action act(const Observation& obs, bool deterministic, Rng& rollout_rng) const {
    return sample_action(params_, obs, deterministic, ranges_, rollout_rng).first;
  }

  SacLosses update(const SacBatch& batch) {
    return sac_update(params_, opt_, batch, hyper_, ranges_, update_rng_);
  }

  const PolicyParams& params() const { return params_; }
  const SacHyper& hyper() const { return hyper_; }
  const ActionRanges& ranges() const { return ranges_; }

  long train_step() const { return train_step_; }
  void set_train_step(long step) { train_step_ = step; }

  nlohmann::json to_checkpoint() const {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["hyper"] = sac_hyper_to_json(hyper_);
    j["action_ranges"] = {{"lo", {ranges_.lo[0], ranges_.lo[1], ranges_.lo[2]}},
                          {"hi", {ranges_.hi[0], ranges_.hi[1], ranges_.hi[2]}}};
    j["params"] = policy_params_to_json(params_);
    j["opt"] = {{"actor", mlp_adam_to_json(opt_.actor_opt)},
                {"critic1", mlp_adam_to_json(opt_.critic1_opt)},
                {"critic2", mlp_adam_to_json(opt_.critic2_opt)},
                {"temperature",
                 {{"m", opt_.temperature_opt.m},
                  {"v", opt_.temperature_opt.v},
                  {"t", opt_.temperature_opt.t}}}};
    j["train_step"] = train_step_;
    j["update_rng"] = update_rng_.state();
    return j;
  }

  static SacAgent from_checkpoint(const nlohmann::json& j) {
    SacAgent a;
    try {
      if (j.at("format").get<std::string>() != kCheckpointFormat)
        throw ConfigError("checkpoint: unrecognized format tag");
      if (j.at("version").get<int>() != kCheckpointVersion)
        throw ConfigError("checkpoint: unsupported version");
      a.hyper_ = sac_hyper_from_json(j.at("hyper"));
      const auto& r = j.at("action_ranges");
      for (int d = 0; d < kActionDim; ++d) {
        a.ranges_.lo[d] = r.at("lo").at(d).get<double>();
        a.ranges_.hi[d] = r.at("hi").at(d).get<double>();
        if (!(a.ranges_.lo[d] < a.ranges_.hi[d]))
          throw ConfigError("checkpoint: action range lo must be below hi");
      }
      a.params_ = policy_params_from_json(j.at("params"));
      a.opt_.actor_opt = mlp_adam_from_json(j.at("opt").at("actor"), a.params_.actor);
      a.opt_.critic1_opt = mlp_adam_from_json(j.at("opt").at("critic1"), a.params_.critic1);
      a.opt_.critic2_opt = mlp_adam_from_json(j.at("opt").at("critic2"), a.params_.critic2);
      const auto& tj = j.at("opt").at("temperature");
      a.opt_.temperature_opt.m = tj.at("m").get<double>();
      a.opt_.temperature_opt.v = tj.at("v").get<double>();
      a.opt_.temperature_opt.t = tj.at("t").get<long>();
      a.train_step_ = j.at("train_step").get<long>();
      a.update_rng_.set_state(j.at("update_rng").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    return a;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("checkpoint: cannot open " + path + " for writing");
    out << to_checkpoint().dump(2) << '\n';
    if (!out) throw InvalidInput("checkpoint: failed writing " + path);
  }

  static SacAgent load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("checkpoint: unparseable file ") + path + ": " + e.what());
    }
    return from_checkpoint(j);
  }

 private:
  SacAgent() = default;

  SacHyper hyper_;
  ActionRanges ranges_;
  PolicyParams params_;
  SacOptState opt_;
  Rng update_rng_{0};
  long train_step_ = 0;
};

}  // namespace stagerl
