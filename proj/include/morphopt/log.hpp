#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace morphopt {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// Global log level, initialized once from the MORPHOPT_LOG env var
/// (error|warn|info|debug, default warn).
inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("MORPHOPT_LOG");
    if (env == nullptr) return LogLevel::kWarn;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

inline void log_msg(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  const char* tag = level == LogLevel::kError  ? "error"
                    : level == LogLevel::kWarn ? "warn"
                    : level == LogLevel::kInfo ? "info"
                                               : "debug";
  std::fprintf(stderr, "[morphopt %s] %s\n", tag, msg.c_str());
}

inline void log_warn(const std::string& msg) { log_msg(LogLevel::kWarn, msg); }
inline void log_info(const std::string& msg) { log_msg(LogLevel::kInfo, msg); }
inline void log_debug(const std::string& msg) { log_msg(LogLevel::kDebug, msg); }

}  // namespace morphopt
