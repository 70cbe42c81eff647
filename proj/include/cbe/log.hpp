#pragma once

#include <functional>
#include <string>

namespace cbe {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Default sink writes warnings to stderr and drops info messages.
void set_log_sink(LogSink sink);
void log_message(LogLevel level, const std::string& msg);
inline void log_warning(const std::string& msg) { log_message(LogLevel::warning, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }

}  // namespace cbe
