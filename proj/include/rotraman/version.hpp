#pragma once

namespace rotraman {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rotraman
