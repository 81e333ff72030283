#include "capreward/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace capreward::log {
namespace {

Level level_from_env() {
    const char* v = std::getenv("CC_LOG_LEVEL");
    if (v == nullptr) return Level::info;
    const std::string s(v);
    if (s == "debug") return Level::debug;
    if (s == "warn") return Level::warn;
    if (s == "error") return Level::error;
    return Level::info;
}

std::atomic<Level>& threshold_ref() {
    static std::atomic<Level> t{level_from_env()};
    return t;
}

const char* label(Level l) {
    switch (l) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
    }
    return "?";
}

}  // namespace

void set_threshold(Level level) { threshold_ref().store(level); }
Level threshold() { return threshold_ref().load(); }

void write(Level level, std::string_view message) {
    if (level < threshold()) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[capreward " << label(level) << "] " << message << '\n';
}

WireLog wire_log() {
    static const WireLog mode = [] {
        const char* v = std::getenv("CC_GATEWAY_LOG");
        if (v == nullptr) return WireLog::off;
        const std::string s(v);
        if (s == "full") return WireLog::full;
        if (s == "errors") return WireLog::errors;
        return WireLog::off;
    }();
    return mode;
}

}  // namespace capreward::log
