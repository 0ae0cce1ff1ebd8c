#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

#include "json.hpp"

namespace lesionforge::logging {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

/// Threshold comes from LESIONFORGE_LOG (debug|info|warn|error|off), default
/// info. Parsed once.
inline Level threshold() {
  static const Level lvl = [] {
    const char* env = std::getenv("LESIONFORGE_LOG");
    if (!env) return Level::Info;
    const std::string s(env);
    if (s == "debug") return Level::Debug;
    if (s == "info") return Level::Info;
    if (s == "warn") return Level::Warn;
    if (s == "error") return Level::Error;
    if (s == "off") return Level::Off;
    return Level::Info;
  }();
  return lvl;
}

inline const char* level_name(Level l) {
  switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    default: return "off";
  }
}

/// One line-delimited JSON record to stderr.
inline void emit(Level level, std::string_view msg, nlohmann::json fields = nlohmann::json::object()) {
  if (level < threshold()) return;
  static std::mutex mtx;
  fields["level"] = level_name(level);
  fields["msg"] = std::string(msg);
  std::lock_guard<std::mutex> lock(mtx);
  std::cerr << fields.dump() << "\n";
}

inline void debug(std::string_view msg, nlohmann::json fields = nlohmann::json::object()) {
  emit(Level::Debug, msg, std::move(fields));
}
inline void info(std::string_view msg, nlohmann::json fields = nlohmann::json::object()) {
  emit(Level::Info, msg, std::move(fields));
}
inline void warn(std::string_view msg, nlohmann::json fields = nlohmann::json::object()) {
  emit(Level::Warn, msg, std::move(fields));
}
inline void error(std::string_view msg, nlohmann::json fields = nlohmann::json::object()) {
  emit(Level::Error, msg, std::move(fields));
}

}  // namespace lesionforge::logging
