#pragma once

// Success-rate-driven tolerance schedule: goal tolerances start wide, and
// every time the rolling success rate over recent episodes clears the
// promotion threshold they shrink by a fixed factor, down to a floor.

#include <deque>
#include <numeric>

#include "json.hpp"
#include "stagerl/dynamics.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/geometry.hpp"

namespace stagerl {

struct CurriculumConfig {
  double shrink_factor = 0.8;
  double promote_threshold = 0.95;
  int window_size = 100;
  Tolerances floor{0.05, deg_to_rad(1.0)};

  void validate() const {
    if (!(shrink_factor > 0.0 && shrink_factor < 1.0))
      throw ConfigError("curriculum: shrink_factor must be in (0, 1)");
    if (!(promote_threshold > 0.0 && promote_threshold <= 1.0))
      throw ConfigError("curriculum: promote_threshold must be in (0, 1]");
    if (window_size <= 0) throw ConfigError("curriculum: window_size must be positive");
    if (!(floor.pos > 0.0) || !(floor.ang > 0.0))
      throw ConfigError("curriculum: floor tolerances must be positive");
  }
};

// Widest stage: tolerances covering 80% of the training region's half-width,
// and 80% of the maximal heading error.
inline Tolerances initial_tolerances(double r_min, double r_max) {
  if (!(r_max > r_min)) throw InvalidInput("curriculum: region upper bound must exceed lower");
  if (!(r_max > 0.0)) throw InvalidInput("curriculum: region upper bound must be positive");
  return {0.8 * r_max, 0.8 * kPi};
}

class Curriculum {
 public:
  Curriculum(const Tolerances& initial, const CurriculumConfig& cfg = {})
      : cfg_(cfg), current_(initial) {
    cfg_.validate();
    if (current_.pos < cfg_.floor.pos || current_.ang < cfg_.floor.ang)
      throw InvalidInput("curriculum: initial tolerances below the floor");
  }

  // Appends one episode outcome. When the window is full, its success
  // fraction reaches the threshold, and at least one tolerance is still
  // above the floor, both tolerances shrink (clamped at the floor) and the
  // window is cleared so the next stage is judged on fresh evidence.
  // Returns true when a promotion happened.
  bool record_episode(bool success) {
    window_.push_back(success ? 1 : 0);
    if (static_cast<int>(window_.size()) > cfg_.window_size) window_.pop_front();
    if (static_cast<int>(window_.size()) < cfg_.window_size) return false;
    if (at_floor()) return false;
    const double rate = window_success_rate();
    if (rate < cfg_.promote_threshold) return false;
    current_.pos = std::max(cfg_.floor.pos, cfg_.shrink_factor * current_.pos);
    current_.ang = std::max(cfg_.floor.ang, cfg_.shrink_factor * current_.ang);
    window_.clear();
    ++promotions_;
    return true;
  }

  const Tolerances& current() const { return current_; }
  const CurriculumConfig& config() const { return cfg_; }
  int promotions() const { return promotions_; }
  int window_fill() const { return static_cast<int>(window_.size()); }

  double window_success_rate() const {
    if (window_.empty()) return 0.0;
    const int succ = std::accumulate(window_.begin(), window_.end(), 0);
    return static_cast<double>(succ) / static_cast<double>(window_.size());
  }

  bool at_floor() const {
    return current_.pos <= cfg_.floor.pos && current_.ang <= cfg_.floor.ang;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"current", {{"pos", current_.pos}, {"ang", current_.ang}}},
        {"floor", {{"pos", cfg_.floor.pos}, {"ang", cfg_.floor.ang}}},
        {"shrink_factor", cfg_.shrink_factor},
        {"promote_threshold", cfg_.promote_threshold},
        {"window_size", cfg_.window_size},
        {"window", std::vector<int>(window_.begin(), window_.end())},
        {"promotions", promotions_}};
  }

  static Curriculum from_json(const nlohmann::json& j) {
    try {
      CurriculumConfig cfg;
      cfg.shrink_factor = j.at("shrink_factor").get<double>();
      cfg.promote_threshold = j.at("promote_threshold").get<double>();
      cfg.window_size = j.at("window_size").get<int>();
      cfg.floor = {j.at("floor").at("pos").get<double>(), j.at("floor").at("ang").get<double>()};
      Tolerances current{j.at("current").at("pos").get<double>(),
                         j.at("current").at("ang").get<double>()};
      Curriculum c(current, cfg);
      for (int v : j.at("window").get<std::vector<int>>()) c.window_.push_back(v ? 1 : 0);
      if (static_cast<int>(c.window_.size()) > cfg.window_size)
        throw ConfigError("curriculum: stored window exceeds window_size");
      c.promotions_ = j.at("promotions").get<int>();
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("curriculum: malformed JSON: ") + e.what());
    }
  }

 private:
  CurriculumConfig cfg_;
  Tolerances current_;
  std::deque<int> window_;
  int promotions_ = 0;
};

}  // namespace stagerl
