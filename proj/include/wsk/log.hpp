#pragma once

#include <cstdarg>

namespace wsk::log {

enum class Level { off = 0, error = 1, warn = 2, info = 3, debug = 4 };

// Level comes from the WSK_LOG environment variable (off|error|warn|info|debug),
// read once on first use. Defaults to warn.
Level level();
void set_level(Level lv);

void message(Level lv, const char* fmt, ...)
#if defined(__GNUC__)
    __attribute__((format(printf, 2, 3)))
#endif
    ;

#define WSK_LOG_AT(lv, ...)                              \
  do {                                                   \
    if (static_cast<int>(::wsk::log::level()) >=         \
        static_cast<int>(lv))                            \
      ::wsk::log::message(lv, __VA_ARGS__);              \
  } while (0)

#define WSK_ERROR(...) WSK_LOG_AT(::wsk::log::Level::error, __VA_ARGS__)
#define WSK_WARN(...) WSK_LOG_AT(::wsk::log::Level::warn, __VA_ARGS__)
#define WSK_INFO(...) WSK_LOG_AT(::wsk::log::Level::info, __VA_ARGS__)
#define WSK_DEBUG(...) WSK_LOG_AT(::wsk::log::Level::debug, __VA_ARGS__)

}  // namespace wsk::log
