#pragma once

namespace subradius {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace subradius
