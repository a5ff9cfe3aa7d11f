#pragma once

namespace gapfill {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gapfill
