#pragma once

namespace ticl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ticl
