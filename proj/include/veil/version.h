#pragma once

namespace veil {

inline constexpr const char* kVersionString = "veil 0.1.0";

}  // namespace veil
