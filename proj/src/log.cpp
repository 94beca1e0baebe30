#include "criacl/log.hpp"

#include <cstdlib>
#include <mutex>
#include <optional>
#include <string_view>

namespace criacl::log {
namespace {

std::optional<Level> g_override;

Level from_env() {
    const char* raw = std::getenv("CRIACL_LOG");
    if (raw == nullptr) return Level::info;
    const std::string_view v{raw};
    if (v == "error") return Level::error;
    if (v == "warn") return Level::warn;
    if (v == "debug") return Level::debug;
    return Level::info;
}

const char* tag(Level level) {
    switch (level) {
        case Level::error: return "[error] ";
        case Level::warn: return "[warn] ";
        case Level::info: return "[info] ";
        case Level::debug: return "[debug] ";
    }
    return "";
}

}  // namespace

Level threshold() {
    static const Level env_level = from_env();
    return g_override.value_or(env_level);
}

void set_threshold(Level level) { g_override = level; }

void detail::emit(Level level, const std::string& message) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << tag(level) << message << '\n';
}

}  // namespace criacl::log
