#pragma once

#include <fmt/format.h>

#include <string_view>

namespace isofed::log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

/// Current threshold. Initialised from ISOFED_LOG (error|info|debug),
/// default info.
Level level();
void set_level(Level lvl);

/// Parses "error" | "info" | "debug"; throws ConfigError otherwise.
Level parse_level(std::string_view text);

void write(Level lvl, std::string_view message);

template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::kError, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (level() >= Level::kInfo)
    write(Level::kInfo, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  if (level() >= Level::kDebug)
    write(Level::kDebug, fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace isofed::log
