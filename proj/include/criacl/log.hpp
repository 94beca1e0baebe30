#pragma once

#include <iostream>
#include <sstream>
#include <utility>

// Minimal leveled logging to stderr. Verbosity comes from CRIACL_LOG
// (error, warn, info, debug); default info.

namespace criacl::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level threshold();
void set_threshold(Level level);

namespace detail {
void emit(Level level, const std::string& message);
}

template <typename... Args>
void write(Level level, Args&&... args) {
    if (static_cast<int>(level) > static_cast<int>(threshold())) return;
    std::ostringstream os;
    (os << ... << std::forward<Args>(args));
    detail::emit(level, os.str());
}

template <typename... Args>
void error(Args&&... args) { write(Level::error, std::forward<Args>(args)...); }
template <typename... Args>
void warn(Args&&... args) { write(Level::warn, std::forward<Args>(args)...); }
template <typename... Args>
void info(Args&&... args) { write(Level::info, std::forward<Args>(args)...); }
template <typename... Args>
void debug(Args&&... args) { write(Level::debug, std::forward<Args>(args)...); }

}  // namespace criacl::log
