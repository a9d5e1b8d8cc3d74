#pragma once

namespace sane {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sane
