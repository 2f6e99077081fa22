#include "nestseq/log.hpp"

#include <cstdlib>
#include <iostream>

namespace nestseq {
namespace {

LogLevel parse_env_level() {
  const char* env = std::getenv("NESTSEQ_LOG");
  if (env == nullptr) return LogLevel::kInfo;
  std::string value(env);
  if (value == "error") return LogLevel::kError;
  if (value == "warn") return LogLevel::kWarn;
  if (value == "info") return LogLevel::kInfo;
  if (value == "debug") return LogLevel::kDebug;
  std::cerr << "[warn] unknown NESTSEQ_LOG value '" << value
            << "', using info\n";
  return LogLevel::kInfo;
}

LogLevel& current_level() {
  static LogLevel level = parse_env_level();
  return level;
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::kError: return "error";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kInfo: return "info";
    case LogLevel::kDebug: return "debug";
  }
  return "?";
}

}  // namespace

LogLevel log_level() { return current_level(); }

void set_log_level(LogLevel level) { current_level() = level; }

void log(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(current_level())) return;
  std::cerr << "[" << level_name(level) << "] " << message << "\n";
}

void log_warn(const std::string& message) { log(LogLevel::kWarn, message); }
void log_info(const std::string& message) { log(LogLevel::kInfo, message); }
void log_debug(const std::string& message) { log(LogLevel::kDebug, message); }

}  // namespace nestseq
