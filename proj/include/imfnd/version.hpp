#pragma once

namespace imfnd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace imfnd
