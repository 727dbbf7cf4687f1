#include "isofed/log.h"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

#include "isofed/errors.h"

namespace isofed::log {
namespace {

Level initial_level() {
  const char* env = std::getenv("ISOFED_LOG");
  if (env == nullptr) return Level::kInfo;
  try {
    return parse_level(env);
  } catch (const ConfigError&) {
    return Level::kInfo;
  }
}

std::atomic<Level>& current() {
  static std::atomic<Level> lvl{initial_level()};
  return lvl;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Level level() { return current().load(std::memory_order_relaxed); }

void set_level(Level lvl) { current().store(lvl, std::memory_order_relaxed); }

Level parse_level(std::string_view text) {
  if (text == "error") return Level::kError;
  if (text == "info") return Level::kInfo;
  if (text == "debug") return Level::kDebug;
  throw ConfigError("unknown log level '" + std::string(text) +
                    "' (expected error|info|debug)");
}

void write(Level lvl, std::string_view message) {
  static constexpr const char* kTags[] = {"error", "info", "debug"};
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[isofed " << kTags[static_cast<int>(lvl)] << "] " << message
            << '\n';
}

}  // namespace isofed::log
