// SPDX-License-Identifier: Apache-2.0
#include "vdsh/errors.hpp"

#include <iostream>

namespace vdsh {

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

}  // namespace vdsh
