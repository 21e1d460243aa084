#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ehrq {

/// Subcommands gen-db, build-dataset, ask, eval, verify, serve and
/// export-exemplars. Returns 0 on success, 1 on a domain error, 2 on a usage
/// error. `args[0]` is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ehrq
