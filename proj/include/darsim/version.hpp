#pragma once

namespace darsim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace darsim
