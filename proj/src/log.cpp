#include "waferwise/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace waferwise::log {

namespace {

Level from_env() {
    const char* env = std::getenv("WAFERWISE_LOG");
    if (env == nullptr) return Level::Warn;
    const std::string v(env);
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
}

std::atomic<int>& current() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

constexpr std::string_view name(Level level) {
    switch (level) {
        case Level::Error: return "error";
        case Level::Warn: return "warn";
        case Level::Info: return "info";
        case Level::Debug: return "debug";
    }
    return "?";
}

}  // namespace

Level threshold() { return static_cast<Level>(current().load()); }

void set_threshold(Level level) { current().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
    if (static_cast<int>(level) > current().load()) return;
    std::lock_guard lock(sink_mutex());
    std::cerr << "[waferwise " << name(level) << "] " << message << '\n';
}

}  // namespace waferwise::log
