#pragma once

namespace wda {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace wda
