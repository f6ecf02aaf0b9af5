#pragma once

#include <string>

namespace defectgen {

enum class LogLevel { Info = 0, Warn = 1, Quiet = 2 };

void set_log_level(LogLevel level);
void log_info(const std::string& msg);
void log_warn(const std::string& msg);

}  // namespace defectgen
