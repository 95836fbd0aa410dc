#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace crop_ensemble {

// Library logger writing to stderr. The level is read once from the
// CROP_ENSEMBLE_LOG environment variable (trace, debug, info, warn, error, off);
// default is warn.
inline spdlog::logger& log() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("crop_ensemble");
    auto lg = existing ? existing : spdlog::stderr_logger_mt("crop_ensemble");
    lg->set_pattern("[%l] %v");
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("CROP_ENSEMBLE_LOG"); env != nullptr && *env != '\0')
      level = spdlog::level::from_str(env);
    lg->set_level(level);
    return lg;
  }();
  return *instance;
}

}  // namespace crop_ensemble
