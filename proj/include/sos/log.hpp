#pragma once

#include <string>

namespace sos {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from the SOS_LOG environment variable ("error", "info",
// "debug"); unset or unrecognized values mean "error". Parsed once.
LogLevel log_level();

// All logging goes to stderr so stage outputs on stdout stay clean.
void log_error(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace sos
