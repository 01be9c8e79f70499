#pragma once

// Process-wide sink for non-fatal diagnostics (degenerate inputs that have a
// defined fallback). The default handler prints to stderr.

#include <functional>
#include <string>

namespace styleid {

using WarningHandler = std::function<void(const std::string&)>;

void warn(const std::string& message);

/// Installs a handler and returns the previous one. Passing an empty
/// function restores the stderr default.
WarningHandler set_warning_handler(WarningHandler handler);

}  // namespace styleid
