#pragma once

#include <cstdio>
#include <string>

namespace cmrac {

// Scientific notation with 17 significant digits: round-trips any double
// exactly, so identical runs serialize to identical bytes.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

}  // namespace cmrac
