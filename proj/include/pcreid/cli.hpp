#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcreid::cli {

// Runs one `pcreid` subcommand. Returns the process exit status: 0 on
// success, 1 on a runtime failure, 2 on a usage error.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Environment variable naming the root directory for run outputs.
inline constexpr const char* kOutRootEnv = "PCREID_OUT_ROOT";

}  // namespace pcreid::cli
