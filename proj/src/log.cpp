#include "defectgen/core/log.hpp"

#include <cstdio>

namespace defectgen {

namespace {
LogLevel g_level = LogLevel::Info;
}

void set_log_level(LogLevel level) { g_level = level; }

void log_info(const std::string& msg) {
  if (g_level <= LogLevel::Info) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

void log_warn(const std::string& msg) {
  if (g_level <= LogLevel::Warn) std::fprintf(stderr, "[warn] %s\n", msg.c_str());
}

}  // namespace defectgen
