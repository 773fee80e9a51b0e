#pragma once

namespace aquacal {

inline constexpr const char* kToolName = "aquacal";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace aquacal
