#pragma once

namespace csb_ewma {

inline constexpr const char* version = "1.0.0";

} // namespace csb_ewma
