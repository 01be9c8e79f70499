#pragma once

#include <ostream>

namespace styleid::cli {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kNumeric = 4 };

/// Runs the command line tool. Diagnostics go to `err` as a single line
/// "error[<category>]: <message>"; progress and summaries go to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace styleid::cli
