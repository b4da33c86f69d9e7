#pragma once

namespace slabscat {

inline constexpr const char* k_version = "0.1.0";
inline constexpr const char* k_schema = "v1";

}  // namespace slabscat
