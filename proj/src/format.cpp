// SPDX-License-Identifier: Apache-2.0
#include "rgu/format.hpp"

#include <array>
#include <charconv>

namespace rgu {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace rgu
