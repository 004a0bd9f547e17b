#include "sos/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

namespace sos {

namespace {

LogLevel parse_level() {
  const char* raw = std::getenv("SOS_LOG");
  if (raw == nullptr) return LogLevel::kError;
  const std::string value(raw);
  if (value == "debug") return LogLevel::kDebug;
  if (value == "info") return LogLevel::kInfo;
  return LogLevel::kError;
}

void emit(const char* tag, const std::string& message) {
  std::fprintf(stderr, "[sos %s] %s\n", tag, message.c_str());
}

}  // namespace

LogLevel log_level() {
  static const LogLevel level = parse_level();
  return level;
}

void log_error(const std::string& message) { emit("error", message); }

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::kInfo) emit("info", message);
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::kDebug) emit("debug", message);
}

}  // namespace sos
