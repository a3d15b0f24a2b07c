#include "vistr/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace vistr {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("VISTR_LOG");
    if (!env) return LogLevel::kWarn;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    if (std::strcmp(env, "warn") == 0) return LogLevel::kWarn;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "off") == 0) return LogLevel::kOff;
    return LogLevel::kWarn;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) < static_cast<int>(log_level())) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

}  // namespace vistr
