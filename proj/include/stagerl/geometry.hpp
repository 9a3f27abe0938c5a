#pragma once

#include <cmath>
#include <numbers>

namespace stagerl {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a + kPi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r - kPi;
}

// Shortest angular distance |wrap(to - from)|, always in [0, pi].
inline double angular_distance(double from, double to) {
  return std::abs(wrap_angle(to - from));
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace stagerl
