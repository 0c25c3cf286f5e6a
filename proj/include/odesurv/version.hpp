#pragma once

namespace odesurv {
inline constexpr const char* kVersion = "odesurv 0.1.0";
}
