#pragma once

// Run manifests: every CLI command records what it ran (command, resolved
// arguments, master seed, full inline snapshots of every input, produced
// artifacts) into <out-dir>/manifest.json. Because inputs are embedded
// rather than referenced, a manifest is sufficient on its own to re-execute
// the command and reproduce its artifacts.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/version.hpp"

namespace stagerl {

struct RunManifest {
  std::string command;
  std::string tool_version = kVersion;
  std::string created;  // ISO-8601 UTC; informational, never used by reruns
  std::uint64_t seed = 0;
  nlohmann::json args = nlohmann::json::object();    // resolved flag values
  nlohmann::json inputs = nlohmann::json::object();  // inline input snapshots
  std::vector<std::string> outputs;                  // out-dir-relative paths
};

inline std::string iso_utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  return nlohmann::json{{"command", m.command}, {"tool_version", m.tool_version},
                        {"created", m.created}, {"seed", m.seed},
                        {"args", m.args},       {"inputs", m.inputs},
                        {"outputs", m.outputs}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.value("tool_version", std::string());
    m.created = j.value("created", std::string());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.args = j.value("args", nlohmann::json::object());
    m.inputs = j.at("inputs");
    if (j.contains("outputs")) m.outputs = j["outputs"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: malformed JSON: ") + e.what());
  }
  if (m.command.empty()) throw ConfigError("manifest: empty command");
  return m;
}

inline void save_manifest(const RunManifest& m, const std::string& out_dir) {
  const std::string path = out_dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw InvalidInput("manifest: cannot write '" + path + "'");
  out << manifest_to_json(m).dump(2) << '\n';
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("manifest: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest: '" + path + "': " + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace stagerl
