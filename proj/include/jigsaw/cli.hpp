#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace jigsaw {

/// Entry point of the `jigsaw` tool. Returns the process exit code.
/// Failures print one line `jigsaw: error: <message>` to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace jigsaw
