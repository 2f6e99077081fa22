#pragma once

#include <string>

namespace nestseq {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Current threshold. Initialized once from the NESTSEQ_LOG environment
// variable (error|warn|info|debug); defaults to info.
LogLevel log_level();
void set_log_level(LogLevel level);

// Writes "[level] message" to stderr when level passes the threshold.
void log(LogLevel level, const std::string& message);

void log_warn(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace nestseq
