#pragma once

namespace aim {
inline constexpr const char* kVersion = "0.1.0";
}
