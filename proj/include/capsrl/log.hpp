#pragma once

#include <string>

namespace capsrl {

// Verbosity is controlled by the CAPS_LOG environment variable:
// one of off|error|warn|info|debug (default: warn). Messages go to stderr
// so they never contaminate deterministic output files.
enum class LogLevel { off = 0, error = 1, warn = 2, info = 3, debug = 4 };

LogLevel log_level();

void log_message(LogLevel level, const std::string& message);

inline void log_error(const std::string& m) { log_message(LogLevel::error, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::warn, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::info, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::debug, m); }

}  // namespace capsrl
