#pragma once

#include <string>

namespace fleetrl {

/// Shortest decimal representation that round-trips the double exactly.
/// All emitted CSV goes through this so reruns are byte-identical.
std::string fmt_double(double v);

}  // namespace fleetrl
