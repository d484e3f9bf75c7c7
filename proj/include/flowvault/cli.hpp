#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flowvault {

// Environment variable naming the default archive directory.
inline constexpr const char* kArchiveEnv = "FLOWVAULT_ARCHIVE";

// Exit codes: 0 success, 1 usage error, 2 data or storage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowvault
