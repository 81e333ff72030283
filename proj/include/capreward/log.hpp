#pragma once

#include <string_view>

namespace capreward::log {

enum class Level { debug, info, warn, error };

// Messages below the threshold are dropped. Defaults to info, or to the value
// of CC_LOG_LEVEL (debug|info|warn|error) when set.
void set_threshold(Level level);
Level threshold();

// Thread-safe line-oriented write to stderr.
void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

// Wire-level logging for remote model calls, controlled by CC_GATEWAY_LOG.
enum class WireLog { off, errors, full };
WireLog wire_log();

}  // namespace capreward::log
