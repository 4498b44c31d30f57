#pragma once

namespace otbayes {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace otbayes
