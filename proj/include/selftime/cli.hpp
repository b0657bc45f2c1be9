#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace selftime::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kNumeric = 4 };

// args excludes the program name. Data goes to `out`, progress and errors to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace selftime::cli
