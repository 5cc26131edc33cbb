#pragma once

#define SUNPROBIT_VERSION_MAJOR 0
#define SUNPROBIT_VERSION_MINOR 1
#define SUNPROBIT_VERSION_PATCH 0
#define SUNPROBIT_VERSION "0.1.0"

namespace sunprobit {

inline const char* version() { return SUNPROBIT_VERSION; }

} // namespace sunprobit
