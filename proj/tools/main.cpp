// Command-line entry point binding every library module: model fitting and
// synthetic drive data, staged pipeline runs, standalone policy evaluation,
// long-range path following, and manifest-driven reruns. Each command writes
// its artifacts plus a manifest.json with inline copies of all inputs, so
// `rerun --manifest` reproduces the artifacts without the original files.
//
// Exit codes: 0 success, 2 config/input error, 3 gate or mission failure,
// 4 diverged training.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stagerl/agent.hpp"
#include "stagerl/manifest.hpp"
#include "stagerl/pathfollow.hpp"
#include "stagerl/pipeline.hpp"
#include "stagerl/sysid.hpp"

namespace {

using namespace stagerl;
namespace fs = std::filesystem;

std::string dir_of(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

std::vector<std::string> scan_outputs(const std::string& out_dir) {
  std::vector<std::string> outputs;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), out_dir).generic_string();
    if (rel == "manifest.json") continue;
    outputs.push_back(rel);
  }
  std::sort(outputs.begin(), outputs.end());
  return outputs;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Command executors. Every executor consumes only (inputs, seed, out_dir),
// with all file contents already inlined into `inputs`; the manifest replays
// through the same functions.

void execute_gen_data(const nlohmann::json& inputs, std::uint64_t seed,
                      const std::string& out_dir) {
  const VelocityModel truth = model_from_json(inputs.at("truth"));
  const auto counts = inputs.at("grid").get<std::array<int, 3>>();
  const double sigma = inputs.at("noise_sigma").get<double>();
  Rng rng(seed);
  const IdentificationDataset data =
      synthesize_dataset(truth, make_grid(EnvConfig{}.ranges, counts), sigma, rng);
  dataset_to_csv(data, out_dir + "/data.csv");
  save_model(truth, out_dir + "/truth.json");
  std::printf("generated %zu samples on a %dx%dx%d grid (noise sigma %g)\n", data.size(),
              counts[0], counts[1], counts[2], sigma);
}

IdentificationDataset dataset_from_inline(const nlohmann::json& rows) {
  IdentificationDataset d;
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != 6)
      throw ConfigError("sysid: inline dataset rows must have 6 numbers");
    d.samples.push_back({Action{row[0].get<double>(), row[1].get<double>(), row[2].get<double>()},
                         BodyVelocity{row[3].get<double>(), row[4].get<double>(),
                                      row[5].get<double>()}});
  }
  return d;
}

nlohmann::json dataset_to_inline(const IdentificationDataset& d) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [a, v] : d.samples)
    rows.push_back({a.ax, a.ay, a.atheta, v.vx, v.vy, v.vtheta});
  return rows;
}

void execute_sysid(const nlohmann::json& inputs, std::uint64_t seed,
                   const std::string& out_dir) {
  IdentificationDataset data;
  if (inputs.at("mode") == "synthetic") {
    const VelocityModel truth = model_from_json(inputs.at("truth"));
    const auto counts = inputs.at("grid").get<std::array<int, 3>>();
    Rng rng(seed);
    data = synthesize_dataset(truth, make_grid(EnvConfig{}.ranges, counts),
                              inputs.at("noise_sigma").get<double>(), rng);
    dataset_to_csv(data, out_dir + "/data.csv");
  } else {
    data = dataset_from_inline(inputs.at("dataset"));
  }
  const VelocityModel model = fit(data);  // DegenerateData carries the diagnosis
  save_model(model, out_dir + "/model.json");
  const auto rms = rms_residuals(model, data);
  write_json_file(out_dir + "/residuals.json",
                  {{"v_x", rms[0]}, {"v_y", rms[1]}, {"v_theta", rms[2]}});
  std::printf("fit %zu samples; rms residuals: v_x=%.6e v_y=%.6e v_theta=%.6e\n", data.size(),
              rms[0], rms[1], rms[2]);
}

void execute_init_policy(const nlohmann::json& inputs, std::uint64_t seed,
                         const std::string& out_dir) {
  const SacHyper hyper = sac_hyper_from_json(inputs.value("hyper", nlohmann::json::object()));
  SacAgent agent(hyper, EnvConfig{}.ranges, seed);
  agent.save(out_dir + "/checkpoint.ckpt");
  std::printf("initialized policy checkpoint (seed %llu)\n",
              static_cast<unsigned long long>(seed));
}

void execute_pipeline(const nlohmann::json& inputs, std::uint64_t seed,
                      const std::string& out_dir) {
  nlohmann::json cfg_json = inputs.at("config");
  cfg_json["seed"] = seed;
  const PipelineConfig cfg = pipeline_config_from_json(cfg_json, out_dir);
  const PipelineResult result = run_pipeline(cfg, out_dir);
  for (const StageReport& r : result.reports)
    std::printf("%s %s: %s=%.4f (threshold %.4f) %s after %d attempt(s)\n", r.name.c_str(),
                r.kind.c_str(), r.metric.c_str(), r.metric_value, r.threshold,
                r.passed ? "PASS" : "FAIL", r.attempts);
}

// Shared by eval and follow: rebuild the agent and environment from inline
// snapshots and make sure they agree on the command ranges.
std::pair<SacAgent, EnvConfig> agent_env_from_inputs(const nlohmann::json& inputs) {
  SacAgent agent = SacAgent::from_checkpoint(inputs.at("checkpoint"));
  const EnvConfig env = env_config_from_json(inputs.at("env"));
  for (int d = 0; d < 3; ++d)
    if (env.ranges.lo[d] != agent.ranges().lo[d] || env.ranges.hi[d] != agent.ranges().hi[d])
      throw ConfigError("checkpoint action ranges differ from the environment's");
  return {std::move(agent), env};
}

Tolerances tolerances_from_inputs(const nlohmann::json& inputs, const Tolerances& fallback) {
  Tolerances tol = fallback;
  const double p = inputs.value("tolerance_pos", 0.0);
  const double d = inputs.value("tolerance_ang_deg", 0.0);
  if (p > 0.0) tol.pos = p;
  if (d > 0.0) tol.ang = deg_to_rad(d);
  return tol;
}

void execute_eval(const nlohmann::json& inputs, std::uint64_t seed,
                  const std::string& out_dir) {
  auto [agent, env] = agent_env_from_inputs(inputs);
  const int episodes = inputs.at("episodes").get<int>();
  const Tolerances tol = tolerances_from_inputs(inputs, env.tol);
  JsonlWriter trace(out_dir + "/trace.jsonl");
  const EvalResult r =
      evaluate_policy(agent.params(), agent.ranges(), env, episodes, tol, seed, &trace);
  nlohmann::json report = eval_result_to_json(r);
  report["tolerance_pos"] = tol.pos;
  report["tolerance_ang_deg"] = rad_to_deg(tol.ang);
  report["seed"] = seed;
  report["policy_train_step"] = agent.train_step();
  write_json_file(out_dir + "/report.json", report);
  std::printf("evaluated %d episodes: success_rate=%.4f mean_return=%.3f mean_length=%.1f\n",
              episodes, r.success_rate, r.mean_return, r.mean_episode_length);
}

void execute_follow(const nlohmann::json& inputs, std::uint64_t seed,
                    const std::string& out_dir) {
  auto [agent, env] = agent_env_from_inputs(inputs);

  SubGoalPlan plan;
  if (inputs.contains("goals")) {
    for (const auto& g : inputs.at("goals"))
      plan.goals.push_back({g[0].get<double>(), g[1].get<double>(), g[2].get<double>()});
  } else {
    Path path;
    for (const auto& p : inputs.at("path"))
      path.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    plan = undersample(path, inputs.at("spacing").get<double>());
  }
  plan.tol = tolerances_from_inputs(inputs, plan.tol);

  FollowConfig cfg;
  cfg.speed_cap = inputs.at("speed_cap").get<double>();
  cfg.timeout_s = inputs.at("timeout_s").get<double>();
  const auto s = inputs.at("start").get<std::array<double, 3>>();
  const RobotState start{s[0], s[1], s[2]};

  const auto write_artifacts = [&](const RunMetrics& m, bool completed, int reached) {
    nlohmann::json mj = metrics_to_json(m);
    mj["completed"] = completed;
    mj["subgoals_reached"] = reached;
    mj["subgoal_count"] = plan.goals.size();
    mj["speed_cap_mps"] = cfg.speed_cap;
    mj["tolerance_pos"] = plan.tol.pos;
    mj["tolerance_ang_deg"] = rad_to_deg(plan.tol.ang);
    mj["seed"] = seed;
    write_json_file(out_dir + "/metrics.json", mj);
    // Plot-ready executed trajectory.
    std::vector<std::vector<double>> rows;
    for (const auto& rec : read_jsonl(out_dir + "/trace.jsonl"))
      rows.push_back({rec["t"].get<double>(), rec["x"].get<double>(), rec["y"].get<double>(),
                      rec["theta"].get<double>(), rec["subgoal"].get<double>()});
    write_csv(out_dir + "/executed.csv", {"t", "x", "y", "theta", "subgoal"}, rows);
  };

  try {
    FollowResult r;
    {
      JsonlWriter trace(out_dir + "/trace.jsonl");
      r = follow(plan, agent.params(), agent.ranges(), env, start, cfg, seed, &trace);
    }
    write_artifacts(r.metrics, true, static_cast<int>(r.metrics.subgoal_times.size()));
    std::printf(
        "mission complete: %zu sub-goals, length=%.2f m, duration=%.1f s, avg speed=%.3f m/s\n",
        plan.goals.size(), r.metrics.path_length_m, r.metrics.duration_s,
        r.metrics.average_speed_mps);
  } catch (const FollowFailed& e) {
    write_artifacts(e.partial, false, e.reached);
    throw;
  }
}

void dispatch(const std::string& command, const nlohmann::json& inputs, std::uint64_t seed,
              const std::string& out_dir) {
  if (command == "gen-data") execute_gen_data(inputs, seed, out_dir);
  else if (command == "sysid") execute_sysid(inputs, seed, out_dir);
  else if (command == "init-policy") execute_init_policy(inputs, seed, out_dir);
  else if (command == "pipeline") execute_pipeline(inputs, seed, out_dir);
  else if (command == "eval") execute_eval(inputs, seed, out_dir);
  else if (command == "follow") execute_follow(inputs, seed, out_dir);
  else throw ConfigError("unknown command '" + command + "' in manifest");
}

// Writes the manifest, runs the command, then updates the manifest with the
// artifacts actually produced (also on failure, before the error escapes).
void run_command(const std::string& command, const nlohmann::json& args,
                 const nlohmann::json& inputs, std::uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  RunManifest m;
  m.command = command;
  m.created = iso_utc_now();
  m.seed = seed;
  m.args = args;
  m.inputs = inputs;
  save_manifest(m, out_dir);
  try {
    dispatch(command, inputs, seed, out_dir);
  } catch (...) {
    m.outputs = scan_outputs(out_dir);
    save_manifest(m, out_dir);
    throw;
  }
  m.outputs = scan_outputs(out_dir);
  save_manifest(m, out_dir);
}

// ---------------------------------------------------------------------------
// Flag parsing helpers: turn files into inline input snapshots.

nlohmann::json model_inline_from_flag(const std::string& truth_path) {
  if (truth_path.empty()) return model_to_json(default_ground_truth_model());
  return model_to_json(load_model(truth_path));
}

nlohmann::json env_inline_from_flags(const std::string& env_config_path,
                                     const std::string& model_path) {
  nlohmann::json env_json = nlohmann::json::object();
  std::string base_dir = ".";
  if (!env_config_path.empty()) {
    env_json = load_json_file(env_config_path);
    base_dir = dir_of(env_config_path);
  }
  if (!model_path.empty()) env_json["model"] = model_to_json(load_model(model_path));
  if (!env_json.contains("model") || env_json["model"].is_null())
    throw ConfigError("a velocity model is required: pass --model or an --env-config "
                      "that names one");
  const EnvConfig resolved = env_config_from_json(env_json, base_dir);
  env_json["model"] = model_to_json(resolved.model);
  return env_json;
}

nlohmann::json checkpoint_inline_from_flag(const std::string& path) {
  const nlohmann::json j = load_json_file(path);
  (void)SacAgent::from_checkpoint(j);  // validate before embedding
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"staged goal-reaching reinforcement-learning toolkit"};
  app.require_subcommand(1);

  // --- sysid ---------------------------------------------------------------
  auto* sysid_cmd = app.add_subcommand(
      "sysid", "Fit the polynomial velocity model from drive data and report residuals");
  std::string sy_data, sy_truth, sy_out;
  bool sy_synthetic = false;
  double sy_noise = 0.0;
  std::vector<int> sy_grid{9, 9, 9};
  std::uint64_t sy_seed = 0;
  sysid_cmd->add_option("--data", sy_data, "Drive-data CSV (a_x,a_y,a_theta,v_x,v_y,v_theta)")
      ->check(CLI::ExistingFile);
  sysid_cmd->add_flag("--synthetic", sy_synthetic, "Fit synthetic grid data instead of a CSV");
  sysid_cmd->add_option("--noise-sigma", sy_noise, "Measurement noise std for --synthetic")
      ->check(CLI::NonNegativeNumber);
  sysid_cmd->add_option("--grid", sy_grid, "Synthetic grid points per command axis")
      ->expected(3);
  sysid_cmd->add_option("--truth", sy_truth, "Ground-truth model JSON for --synthetic")
      ->check(CLI::ExistingFile);
  sysid_cmd->add_option("--seed", sy_seed, "Noise seed for --synthetic");
  sysid_cmd->add_option("--out-dir", sy_out, "Output directory")->required();
  sysid_cmd->callback([&] {
    if (sy_synthetic == !sy_data.empty())
      throw ConfigError("sysid: pass exactly one of --data or --synthetic");
    nlohmann::json inputs;
    if (sy_synthetic) {
      inputs = {{"mode", "synthetic"},
                {"truth", model_inline_from_flag(sy_truth)},
                {"grid", sy_grid},
                {"noise_sigma", sy_noise}};
    } else {
      inputs = {{"mode", "data"}, {"dataset", dataset_to_inline(dataset_from_csv(sy_data))}};
    }
    run_command("sysid",
                {{"data", sy_data}, {"synthetic", sy_synthetic}, {"noise_sigma", sy_noise},
                 {"grid", sy_grid}, {"truth", sy_truth}},
                inputs, sy_seed, sy_out);
  });

  // --- gen-data --------------------------------------------------------------
  auto* gen_cmd = app.add_subcommand(
      "gen-data", "Synthesize a drive-data CSV from a ground-truth velocity model");
  std::string gd_truth, gd_out;
  double gd_noise = 0.0;
  std::vector<int> gd_grid{9, 9, 9};
  std::uint64_t gd_seed = 0;
  gen_cmd->add_option("--truth", gd_truth, "Ground-truth model JSON (default: built-in)")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--noise-sigma", gd_noise, "Measurement noise std")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--grid", gd_grid, "Grid points per command axis")->expected(3);
  gen_cmd->add_option("--seed", gd_seed, "Noise seed");
  gen_cmd->add_option("--out-dir", gd_out, "Output directory")->required();
  gen_cmd->callback([&] {
    run_command("gen-data", {{"truth", gd_truth}, {"noise_sigma", gd_noise}, {"grid", gd_grid}},
                {{"truth", model_inline_from_flag(gd_truth)},
                 {"grid", gd_grid},
                 {"noise_sigma", gd_noise}},
                gd_seed, gd_out);
  });

  // --- init-policy -----------------------------------------------------------
  auto* init_cmd = app.add_subcommand(
      "init-policy", "Write a freshly initialized (untrained) policy checkpoint");
  std::string ip_hyper, ip_out;
  std::uint64_t ip_seed = 0;
  init_cmd->add_option("--hyper", ip_hyper, "Hyperparameter overrides JSON")
      ->check(CLI::ExistingFile);
  init_cmd->add_option("--seed", ip_seed, "Initialization seed");
  init_cmd->add_option("--out-dir", ip_out, "Output directory")->required();
  init_cmd->callback([&] {
    const nlohmann::json hyper =
        ip_hyper.empty() ? nlohmann::json::object() : load_json_file(ip_hyper);
    (void)sac_hyper_from_json(hyper);  // validate before embedding
    run_command("init-policy", {{"hyper", ip_hyper}}, {{"hyper", hyper}}, ip_seed, ip_out);
  });

  // --- pipeline --------------------------------------------------------------
  auto* pipe_cmd = app.add_subcommand(
      "pipeline", "Run the staged training pipeline described by a config file");
  std::string pl_config, pl_out;
  std::uint64_t pl_seed = 0;
  pipe_cmd->add_option("--config", pl_config, "Pipeline config JSON")
      ->check(CLI::ExistingFile)
      ->required();
  pipe_cmd->add_option("--seed", pl_seed, "Master seed (mandatory for training)")->required();
  pipe_cmd->add_option("--out-dir", pl_out, "Run directory")->required();
  pipe_cmd->callback([&] {
    nlohmann::json cfg_json = load_json_file(pl_config);
    const std::string base = dir_of(pl_config);
    // Inline every model reference so the manifest is self-contained; this
    // also fail-fasts on a missing model file before any training starts.
    if (cfg_json.contains("model") && cfg_json["model"].is_string()) {
      std::string p = cfg_json["model"].get<std::string>();
      if (!p.empty() && p[0] != '/') p = base + "/" + p;
      cfg_json["model"] = model_to_json(load_model(p));
    }
    if (cfg_json.contains("stages"))
      for (auto& stage : cfg_json["stages"])
        if (stage.contains("env") && stage["env"].contains("model") &&
            stage["env"]["model"].is_string()) {
          std::string p = stage["env"]["model"].get<std::string>();
          if (!p.empty() && p[0] != '/') p = base + "/" + p;
          stage["env"]["model"] = model_to_json(load_model(p));
        }
    nlohmann::json with_seed = cfg_json;
    with_seed["seed"] = pl_seed;
    (void)pipeline_config_from_json(with_seed, base);  // validate before embedding
    run_command("pipeline", {{"config", pl_config}}, {{"config", cfg_json}}, pl_seed, pl_out);
  });

  // --- eval ------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand(
      "eval", "Evaluate a policy checkpoint with deterministic-mode episodes");
  std::string ev_ckpt, ev_env, ev_model, ev_out;
  int ev_episodes = 100;
  double ev_tol_pos = 0.0, ev_tol_ang = 0.0;
  std::uint64_t ev_seed = 1;
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Policy checkpoint")
      ->check(CLI::ExistingFile)
      ->required();
  eval_cmd->add_option("--env-config", ev_env, "Environment config JSON")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", ev_model, "Velocity model JSON (overrides the env config's)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--episodes", ev_episodes, "Episode count")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--tolerance-pos", ev_tol_pos, "Success position tolerance (m)")
      ->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--tolerance-ang", ev_tol_ang, "Success heading tolerance (degrees)")
      ->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--seed", ev_seed, "Evaluation seed");
  eval_cmd->add_option("--out-dir", ev_out, "Output directory")->required();
  eval_cmd->callback([&] {
    run_command("eval",
                {{"checkpoint", ev_ckpt}, {"env_config", ev_env}, {"model", ev_model},
                 {"episodes", ev_episodes}, {"tolerance_pos", ev_tol_pos},
                 {"tolerance_ang", ev_tol_ang}},
                {{"checkpoint", checkpoint_inline_from_flag(ev_ckpt)},
                 {"env", env_inline_from_flags(ev_env, ev_model)},
                 {"episodes", ev_episodes},
                 {"tolerance_pos", ev_tol_pos},
                 {"tolerance_ang_deg", ev_tol_ang}},
                ev_seed, ev_out);
  });

  // --- follow ----------------------------------------------------------------
  auto* follow_cmd = app.add_subcommand(
      "follow", "Drive a policy through an under-sampled path and report metrics");
  std::string fw_ckpt, fw_env, fw_model, fw_path, fw_waypoints, fw_out;
  double fw_spacing = 1.0, fw_cap = 1.0, fw_timeout = 60.0;
  double fw_tol_pos = 0.3, fw_tol_ang = 17.0;
  std::vector<double> fw_start{0.0, 0.0, 0.0};
  std::uint64_t fw_seed = 1;
  follow_cmd->add_option("--checkpoint", fw_ckpt, "Policy checkpoint")
      ->check(CLI::ExistingFile)
      ->required();
  follow_cmd->add_option("--env-config", fw_env, "Environment config JSON")
      ->check(CLI::ExistingFile);
  follow_cmd->add_option("--model", fw_model, "Velocity model JSON (overrides the env config's)")
      ->check(CLI::ExistingFile);
  follow_cmd->add_option("--path", fw_path, "Dense pose path CSV (x,y,theta)")
      ->check(CLI::ExistingFile);
  follow_cmd->add_option("--waypoints", fw_waypoints, "Waypoint CSV (x,y)")
      ->check(CLI::ExistingFile);
  follow_cmd->add_option("--spacing", fw_spacing, "Sub-goal spacing (m)")
      ->check(CLI::PositiveNumber);
  follow_cmd->add_option("--speed-cap", fw_cap, "Per-component command cap")
      ->check(CLI::PositiveNumber);
  follow_cmd->add_option("--timeout", fw_timeout, "Per-sub-goal timeout (simulated s)")
      ->check(CLI::PositiveNumber);
  follow_cmd->add_option("--tolerance-pos", fw_tol_pos, "Sub-goal position tolerance (m)")
      ->check(CLI::PositiveNumber);
  follow_cmd->add_option("--tolerance-ang", fw_tol_ang, "Sub-goal heading tolerance (degrees)")
      ->check(CLI::PositiveNumber);
  follow_cmd->add_option("--start", fw_start, "Start pose x y theta")->expected(3);
  follow_cmd->add_option("--seed", fw_seed, "Observation-noise seed");
  follow_cmd->add_option("--out-dir", fw_out, "Output directory")->required();
  follow_cmd->callback([&] {
    if (fw_path.empty() == fw_waypoints.empty())
      throw ConfigError("follow: pass exactly one of --path or --waypoints");
    nlohmann::json inputs{{"checkpoint", checkpoint_inline_from_flag(fw_ckpt)},
                          {"env", env_inline_from_flags(fw_env, fw_model)},
                          {"spacing", fw_spacing},
                          {"speed_cap", fw_cap},
                          {"timeout_s", fw_timeout},
                          {"tolerance_pos", fw_tol_pos},
                          {"tolerance_ang_deg", fw_tol_ang},
                          {"start", fw_start}};
    const auto path_to_inline = [](const Path& p) {
      nlohmann::json rows = nlohmann::json::array();
      for (const Goal& g : p) rows.push_back({g.x, g.y, g.theta});
      return rows;
    };
    if (!fw_path.empty()) {
      inputs["path"] = path_to_inline(path_from_csv(fw_path));
    } else {
      const auto wps = waypoints_from_csv(fw_waypoints);
      if (wps.size() == 1) {
        // A single waypoint is a bare sub-goal; aim its heading along the
        // approach bearing (or keep the start heading when already there).
        const double dx = wps[0].first - fw_start[0], dy = wps[0].second - fw_start[1];
        const double heading = std::hypot(dx, dy) > 1e-12 ? std::atan2(dy, dx) : fw_start[2];
        inputs["goals"] = nlohmann::json::array({{wps[0].first, wps[0].second, heading}});
      } else {
        inputs["path"] = path_to_inline(waypoints_to_path(wps));
      }
    }
    run_command("follow",
                {{"checkpoint", fw_ckpt}, {"env_config", fw_env}, {"model", fw_model},
                 {"path", fw_path}, {"waypoints", fw_waypoints}, {"spacing", fw_spacing},
                 {"speed_cap", fw_cap}, {"timeout", fw_timeout},
                 {"tolerance_pos", fw_tol_pos}, {"tolerance_ang", fw_tol_ang},
                 {"start", fw_start}},
                inputs, fw_seed, fw_out);
  });

  // --- rerun -----------------------------------------------------------------
  auto* rerun_cmd = app.add_subcommand(
      "rerun", "Re-execute a recorded run from its manifest, reproducing its artifacts");
  std::string rr_manifest, rr_out;
  rerun_cmd->add_option("--manifest", rr_manifest, "manifest.json of a previous run")
      ->check(CLI::ExistingFile)
      ->required();
  rerun_cmd->add_option("--out-dir", rr_out, "Output directory for the reproduced run")
      ->required();
  rerun_cmd->callback([&] {
    const RunManifest m = load_manifest(rr_manifest);
    if (m.tool_version != kVersion)
      std::fprintf(stderr, "warning: manifest written by version %s, this tool is %s\n",
                   m.tool_version.c_str(), kVersion);
    run_command(m.command, m.args, m.inputs, m.seed, rr_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const GateAbort& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const FollowFailed& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const SimulationDiverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
