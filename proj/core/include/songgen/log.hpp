#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

namespace songgen {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

// Verbosity comes from the SONGGEN_LOG environment variable only
// (quiet|warn|info|debug), default info.
inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("SONGGEN_LOG");
        if (!env) return LogLevel::info;
        std::string s(env);
        if (s == "quiet") return LogLevel::quiet;
        if (s == "warn") return LogLevel::warn;
        if (s == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

namespace detail {
inline void log_line(const char* tag, const std::string& msg) {
    std::cerr << tag << msg << "\n";
}
}  // namespace detail

template <class... Args>
void log_warn(Args&&... args) {
    if (log_level() < LogLevel::warn) return;
    std::ostringstream os;
    (os << ... << args);
    detail::log_line("[warn] ", os.str());
}

template <class... Args>
void log_info(Args&&... args) {
    if (log_level() < LogLevel::info) return;
    std::ostringstream os;
    (os << ... << args);
    detail::log_line("[info] ", os.str());
}

template <class... Args>
void log_debug(Args&&... args) {
    if (log_level() < LogLevel::debug) return;
    std::ostringstream os;
    (os << ... << args);
    detail::log_line("[debug] ", os.str());
}

}  // namespace songgen
