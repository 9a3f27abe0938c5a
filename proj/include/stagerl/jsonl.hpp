#pragma once

// JSON-lines writer/reader used for per-step episode traces.

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stagerl/errors.hpp"

namespace stagerl {

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path) : out_(path) {
    if (!out_) throw InvalidInput("jsonl: cannot write '" + path + "'");
  }

  void write(const nlohmann::json& record) { out_ << record.dump() << '\n'; }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("jsonl: cannot open '" + path + "'");
  std::vector<nlohmann::json> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(nlohmann::json::parse(line));
  }
  return records;
}

}  // namespace stagerl
