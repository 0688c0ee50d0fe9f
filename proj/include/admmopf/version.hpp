#pragma once

namespace admmopf {
inline constexpr const char* kVersion = "0.1.0";
}
