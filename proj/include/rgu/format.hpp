// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace rgu {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace rgu
