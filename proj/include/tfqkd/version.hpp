#pragma once

namespace tfqkd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tfqkd
