#include "fleetrl/csv.hpp"

#include <charconv>

namespace fleetrl {

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace fleetrl
