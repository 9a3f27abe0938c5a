#pragma once

namespace stagerl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace stagerl
