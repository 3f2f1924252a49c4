#pragma once

#include <charconv>
#include <string>

namespace dmml::detail {

/// Shortest round-trip decimal form.
inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace dmml::detail
