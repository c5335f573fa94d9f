#include "capsrl/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace capsrl {

namespace {

LogLevel parse_level() {
  const char* raw = std::getenv("CAPS_LOG");
  if (raw == nullptr) {
    return LogLevel::warn;
  }
  const std::string v(raw);
  if (v == "off") return LogLevel::off;
  if (v == "error") return LogLevel::error;
  if (v == "warn") return LogLevel::warn;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
    default: return "off";
  }
}

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

LogLevel log_level() {
  static const LogLevel level = parse_level();
  return level;
}

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) {
    return;
  }
  std::lock_guard<std::mutex> lock(log_mutex());
  std::cerr << "[caps:" << level_name(level) << "] " << message << '\n';
}

}  // namespace capsrl
