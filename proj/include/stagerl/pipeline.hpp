#pragma once

// Staged training orchestrator: an ordered list of stages (training on the
// clean simulator, evaluation or fine-tuning on a perturbed one), each with a
// numeric pass gate, run sequentially over one policy. Failing a gate repeats
// the stage up to its repeat budget, then aborts the run with the failing
// report already on disk. Every artifact under the run directory is a pure
// function of (config, seed), so a rerun reproduces it byte for byte.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "stagerl/agent.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/trainer.hpp"

namespace stagerl {

inline constexpr const char* kStageCoreTrain = "core-train";
inline constexpr const char* kStageSurrogateEval = "surrogate-eval";
inline constexpr const char* kStageSurrogateFinetune = "surrogate-finetune";

inline bool stage_kind_trains(const std::string& kind) {
  return kind == kStageCoreTrain || kind == kStageSurrogateFinetune;
}

struct GateSpec {
  std::string metric = "success_rate";  // success_rate | mean_return
  double threshold = 0.9;
  int eval_episodes = 100;
  // Tolerances the gate evaluation uses; non-positive fields fall back to the
  // stage environment's own tolerances.
  Tolerances tol{0.0, 0.0};

  void validate() const {
    if (metric != "success_rate" && metric != "mean_return")
      throw ConfigError("gate: metric must be success_rate or mean_return");
    if (metric == "success_rate" && (threshold < 0.0 || threshold > 1.0))
      throw ConfigError("gate: success-rate threshold must lie in [0,1]");
    if (eval_episodes <= 0) throw ConfigError("gate: eval_episodes must be positive");
  }

  Tolerances resolve_tol(const Tolerances& env_tol) const {
    return {tol.pos > 0.0 ? tol.pos : env_tol.pos, tol.ang > 0.0 ? tol.ang : env_tol.ang};
  }
};

struct StageSpec {
  std::string name;  // defaults to stage-<index>
  std::string kind = kStageCoreTrain;
  EnvConfig env;
  long budget = 0;  // env steps for training stages; unused for pure evals
  GateSpec gate;
  int max_repeats = 1;  // total attempts before aborting
  TrainerConfig trainer;

  void validate() const {
    if (kind != kStageCoreTrain && kind != kStageSurrogateEval &&
        kind != kStageSurrogateFinetune)
      throw ConfigError("stage '" + name + "': unknown kind \"" + kind + "\"");
    if (stage_kind_trains(kind) && budget <= 0)
      throw ConfigError("stage '" + name + "': training budget must be positive");
    if (max_repeats <= 0) throw ConfigError("stage '" + name + "': max_repeats must be positive");
    if (kind == kStageCoreTrain && !env.surrogate.inert())
      throw ConfigError("stage '" + name + "': core training requires a clean simulator");
    if (kind == kStageSurrogateFinetune && env.surrogate.inert())
      throw ConfigError("stage '" + name + "': fine-tuning requires a perturbed simulator");
    env.validate();
    gate.validate();
    if (stage_kind_trains(kind)) trainer.validate();
  }
};

struct StageReport {
  std::string name;
  std::string kind;
  int index = 0;
  std::uint64_t seed = 0;
  int attempts = 0;
  bool passed = false;
  std::string metric;
  double metric_value = 0.0;
  double threshold = 0.0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double mean_episode_length = 0.0;
  int eval_episodes = 0;
  Tolerances gate_tol{0.0, 0.0};
  std::string traces;  // run-relative path of the last gate evaluation trace
  // Training stages only.
  long env_steps = 0;
  long updates = 0;
  bool early_stopped = false;
  std::vector<PromotionEvent> promotions;
  Tolerances final_tolerances{0.0, 0.0};
};

inline nlohmann::json stage_report_to_json(const StageReport& r) {
  nlohmann::json j{{"name", r.name},
                   {"kind", r.kind},
                   {"index", r.index},
                   {"seed", r.seed},
                   {"attempts", r.attempts},
                   {"passed", r.passed},
                   {"metric", r.metric},
                   {"metric_value", r.metric_value},
                   {"threshold", r.threshold},
                   {"success_rate", r.success_rate},
                   {"mean_return", r.mean_return},
                   {"mean_episode_length", r.mean_episode_length},
                   {"eval_episodes", r.eval_episodes},
                   {"gate_tolerance_pos", r.gate_tol.pos},
                   {"gate_tolerance_ang_deg", rad_to_deg(r.gate_tol.ang)},
                   {"traces", r.traces}};
  if (stage_kind_trains(r.kind)) {
    j["env_steps"] = r.env_steps;
    j["updates"] = r.updates;
    j["early_stopped"] = r.early_stopped;
    j["final_tolerance_pos"] = r.final_tolerances.pos;
    j["final_tolerance_ang_deg"] = rad_to_deg(r.final_tolerances.ang);
    nlohmann::json promos = nlohmann::json::array();
    for (const auto& p : r.promotions) promos.push_back(promotion_to_json(p));
    j["promotions"] = promos;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Config parsing. The pipeline file carries shared base sections ("env",
// "trainer", "hyper") that each stage may override with a partial object
// (RFC 7386 merge), plus the identified velocity model as an input.

struct PipelineConfig {
  std::uint64_t seed = 1;
  VelocityModel model;
  SacHyper hyper;
  std::vector<StageSpec> stages;
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                                const std::string& base_dir = ".") {
  PipelineConfig cfg;
  try {
    if (!j.is_object()) throw ConfigError("pipeline: config must be a JSON object");
    if (!j.contains("model"))
      throw ConfigError("pipeline: a 'model' path or inline object is required");
    if (!j.contains("stages") || !j["stages"].is_array() || j["stages"].empty())
      throw ConfigError("pipeline: a non-empty 'stages' array is required");
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    cfg.hyper = sac_hyper_from_json(j.value("hyper", nlohmann::json::object()));

    // Resolve the model once and inline it into the shared env section so
    // stage env configs (and manifests) are self-contained.
    nlohmann::json base_env = j.value("env", nlohmann::json::object());
    base_env["model"] = j["model"];
    const EnvConfig resolved_base = env_config_from_json(base_env, base_dir);
    cfg.model = resolved_base.model;
    base_env["model"] = model_to_json(cfg.model);

    const nlohmann::json base_trainer = j.value("trainer", nlohmann::json::object());

    int index = 0;
    for (const auto& sj : j["stages"]) {
      if (!sj.is_object()) throw ConfigError("pipeline: each stage must be an object");
      StageSpec s;
      s.name = sj.value("name", "stage-" + std::to_string(index));
      s.kind = sj.value("kind", std::string(kStageCoreTrain));
      s.budget = sj.value("budget", 0L);
      s.max_repeats = sj.value("max_repeats", 1);

      nlohmann::json env_json = base_env;
      env_json.merge_patch(sj.value("env", nlohmann::json::object()));
      s.env = env_config_from_json(env_json, base_dir);

      nlohmann::json trainer_json = base_trainer;
      trainer_json.merge_patch(sj.value("trainer", nlohmann::json::object()));
      s.trainer = trainer_config_from_json(trainer_json);

      if (sj.contains("gate")) {
        const auto& g = sj["gate"];
        s.gate.metric = g.value("metric", s.gate.metric);
        s.gate.threshold = g.value("threshold", s.gate.threshold);
        if (g.contains("eval_episodes")) s.gate.eval_episodes = g["eval_episodes"].get<int>();
        if (g.contains("tolerance_pos")) s.gate.tol.pos = g["tolerance_pos"].get<double>();
        if (g.contains("tolerance_ang_deg"))
          s.gate.tol.ang = deg_to_rad(g["tolerance_ang_deg"].get<double>());
      }
      // A pure evaluation stage may size itself through its budget.
      if (!stage_kind_trains(s.kind) && s.budget > 0 &&
          (!sj.contains("gate") || !sj["gate"].contains("eval_episodes")))
        s.gate.eval_episodes = static_cast<int>(s.budget);
      s.validate();
      cfg.stages.push_back(std::move(s));
      ++index;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline: malformed JSON: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Stage execution.

namespace pipeline_seed {
inline constexpr std::uint64_t kAgent = 1;
inline constexpr std::uint64_t kStageBase = 100;  // stage n draws stream kStageBase + n
}  // namespace pipeline_seed

// Runs one stage against the agent: training stages update it in place and
// are gated by a fresh deterministic evaluation; evaluation stages only read
// it. Attempt k of a failed gate continues training with seed stream k.
// `traces_dir` (when non-empty) receives per-attempt JSONL traces; the
// returned report references the last gate evaluation's trace relative to
// the run directory.
inline StageReport run_stage(const StageSpec& spec, SacAgent& agent, std::uint64_t stage_seed,
                             int index, const std::string& traces_dir = "") {
  spec.validate();
  validate_policy_shapes(agent.params());
  for (int d = 0; d < 3; ++d) {
    if (spec.env.ranges.lo[d] != agent.ranges().lo[d] ||
        spec.env.ranges.hi[d] != agent.ranges().hi[d])
      throw ConfigError("stage '" + spec.name +
                        "': environment action ranges differ from the agent's");
  }

  StageReport report;
  report.name = spec.name;
  report.kind = spec.kind;
  report.index = index;
  report.seed = stage_seed;
  report.metric = spec.gate.metric;
  report.threshold = spec.gate.threshold;
  report.eval_episodes = spec.gate.eval_episodes;
  report.gate_tol = spec.gate.resolve_tol(spec.env.tol);

  const bool trains = stage_kind_trains(spec.kind);
  ReplayBuffer buffer(trains ? agent.hyper().buffer_capacity : 1);
  std::unique_ptr<Curriculum> curriculum;
  if (trains) {
    const Tolerances start =
        (spec.trainer.initial_tol.pos > 0.0 && spec.trainer.initial_tol.ang > 0.0)
            ? spec.trainer.initial_tol
            : initial_tolerances(spec.env.goal_min, spec.env.goal_max);
    curriculum = std::make_unique<Curriculum>(start, spec.trainer.curriculum);
  }

  const std::string tag = "stage-" + std::to_string(index);
  for (int attempt = 1; attempt <= spec.max_repeats; ++attempt) {
    const std::uint64_t attempt_seed = split_seed(stage_seed, static_cast<std::uint64_t>(attempt));
    report.attempts = attempt;

    if (trains) {
      Environment env(spec.env);
      std::unique_ptr<JsonlWriter> log;
      if (!traces_dir.empty())
        log = std::make_unique<JsonlWriter>(traces_dir + "/" + tag + "-attempt-" +
                                            std::to_string(attempt) + "-train.jsonl");
      try {
        const TrainResult tr = train_policy(agent, env, buffer, *curriculum, spec.budget,
                                            spec.trainer, attempt_seed, log.get());
        report.env_steps += tr.env_steps;
        report.updates += tr.updates;
        report.early_stopped = tr.early_stopped;
        report.promotions.insert(report.promotions.end(), tr.promotions.begin(),
                                 tr.promotions.end());
        report.final_tolerances = tr.final_tolerances;
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged("stage '" + spec.name + "' attempt " +
                                   std::to_string(attempt) + ": " + e.what(),
                               e.loss_value);
      }
    }

    std::unique_ptr<JsonlWriter> trace;
    std::string trace_rel;
    if (!traces_dir.empty()) {
      trace_rel = "traces/" + tag + "-attempt-" + std::to_string(attempt) + "-eval.jsonl";
      trace = std::make_unique<JsonlWriter>(traces_dir + "/" + tag + "-attempt-" +
                                            std::to_string(attempt) + "-eval.jsonl");
    }
    const std::uint64_t eval_seed = split_seed(attempt_seed, seed_stream::kEval);
    const EvalResult er =
        evaluate_policy(agent.params(), agent.ranges(), spec.env, spec.gate.eval_episodes,
                        report.gate_tol, eval_seed, trace.get());
    report.success_rate = er.success_rate;
    report.mean_return = er.mean_return;
    report.mean_episode_length = er.mean_episode_length;
    report.traces = trace_rel;
    report.metric_value =
        (spec.gate.metric == "success_rate") ? er.success_rate : er.mean_return;
    report.passed = report.metric_value >= spec.gate.threshold;
    if (report.passed) break;
  }
  return report;
}

struct PipelineResult {
  std::vector<StageReport> reports;
  std::string run_dir;
};

// Runs every stage in order under `out_dir`, writing the resolved model,
// a post-stage checkpoint, a report per stage, and all traces. A stage that
// exhausts its repeats has its failing report written before the run aborts.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir) {
  if (cfg.stages.empty()) throw ConfigError("pipeline: at least one stage is required");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/checkpoints");
  fs::create_directories(out_dir + "/reports");
  fs::create_directories(out_dir + "/traces");

  save_model(cfg.model, out_dir + "/model.json");
  {
    std::ofstream run_file(out_dir + "/run.json");
    run_file << nlohmann::json{{"seed", cfg.seed}, {"stages", cfg.stages.size()}}.dump(2)
             << '\n';
  }

  SacAgent agent(cfg.hyper, cfg.stages.front().env.ranges,
                 split_seed(cfg.seed, pipeline_seed::kAgent));

  PipelineResult result;
  result.run_dir = out_dir;
  for (std::size_t n = 0; n < cfg.stages.size(); ++n) {
    const std::uint64_t stage_seed =
        split_seed(cfg.seed, pipeline_seed::kStageBase + static_cast<std::uint64_t>(n));
    StageReport report = run_stage(cfg.stages[n], agent, stage_seed, static_cast<int>(n),
                                   out_dir + "/traces");
    const std::string stem = "stage-" + std::to_string(n);
    {
      std::ofstream rf(out_dir + "/reports/" + stem + ".json");
      rf << stage_report_to_json(report).dump(2) << '\n';
    }
    agent.save(out_dir + "/checkpoints/" + stem + ".ckpt");
    const bool passed = report.passed;
    const std::string name = report.name;
    const double value = report.metric_value;
    const double threshold = report.threshold;
    const int attempts = report.attempts;
    result.reports.push_back(std::move(report));
    if (!passed)
      throw GateAbort("stage '" + name + "' failed its gate after " +
                      std::to_string(attempts) + " attempt(s): " + cfg.stages[n].gate.metric +
                      " " + std::to_string(value) + " < " + std::to_string(threshold) +
                      " (failing report written to " + out_dir + "/reports/" + stem + ".json)");
  }
  return result;
}

}  // namespace stagerl
