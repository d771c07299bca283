#include "wsk/log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace wsk::log {

namespace {

Level parse_env() {
  const char* env = std::getenv("WSK_LOG");
  if (!env) return Level::warn;
  if (std::strcmp(env, "off") == 0) return Level::off;
  if (std::strcmp(env, "error") == 0) return Level::error;
  if (std::strcmp(env, "warn") == 0) return Level::warn;
  if (std::strcmp(env, "info") == 0) return Level::info;
  if (std::strcmp(env, "debug") == 0) return Level::debug;
  std::fprintf(stderr, "wsk: unknown WSK_LOG value '%s', using warn\n", env);
  return Level::warn;
}

std::atomic<int>& level_slot() {
  static std::atomic<int> slot{static_cast<int>(parse_env())};
  return slot;
}

const char* tag(Level lv) {
  switch (lv) {
    case Level::error: return "error";
    case Level::warn: return "warn";
    case Level::info: return "info";
    case Level::debug: return "debug";
    default: return "?";
  }
}

}  // namespace

Level level() { return static_cast<Level>(level_slot().load(std::memory_order_relaxed)); }

void set_level(Level lv) { level_slot().store(static_cast<int>(lv), std::memory_order_relaxed); }

void message(Level lv, const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  std::fprintf(stderr, "[wsk %s] ", tag(lv));
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
  va_end(args);
}

}  // namespace wsk::log
