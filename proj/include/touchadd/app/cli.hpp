#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace touchadd::app {

/// Runs one `touchadd` verb. `args` excludes the program name. Returns the
/// process exit code; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace touchadd::app
