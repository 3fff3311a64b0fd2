// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace reachcast {

/// Command-line entry point: synth | train | eval | transfer | predict |
/// features | filter. Returns 0 on success, 1 on usage errors and 2 on
/// data or validation errors.
int dispatch(int argc, const char* const* argv, std::istream& in, std::ostream& out,
             std::ostream& err);

}  // namespace reachcast
