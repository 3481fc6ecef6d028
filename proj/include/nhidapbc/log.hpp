#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace nhidapbc::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Verbosity from NHIDAPBC_LOG (error, warn, info, debug). Defaults to warn.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("NHIDAPBC_LOG");
    const std::string_view v = env ? env : "";
    if (v == "error" || v == "quiet") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

inline void write(Level level, std::string_view tag, const std::string& message) {
  if (static_cast<int>(level) <= static_cast<int>(threshold()))
    std::cerr << "[nhidapbc " << tag << "] " << message << '\n';
}

inline void error(const std::string& m) { write(Level::Error, "error", m); }
inline void warn(const std::string& m) { write(Level::Warn, "warn", m); }
inline void info(const std::string& m) { write(Level::Info, "info", m); }
inline void debug(const std::string& m) { write(Level::Debug, "debug", m); }

}  // namespace nhidapbc::log
