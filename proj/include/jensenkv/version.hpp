#pragma once

namespace jensenkv {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace jensenkv
