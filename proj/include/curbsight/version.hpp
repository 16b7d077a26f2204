#pragma once

namespace curbsight {

inline constexpr const char* kVersion = "0.1.0";

} // namespace curbsight
