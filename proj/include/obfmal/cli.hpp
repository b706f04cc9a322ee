#pragma once

#include <string>
#include <vector>

namespace obfmal {

/// Entry point behind the obfmal binary. Returns 0 on success, 1 on
/// operation failure, 2 on usage errors.
int run_cli(int argc, const char* const* argv);

/// Convenience overload; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace obfmal
