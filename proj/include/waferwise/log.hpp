#pragma once

#include <string_view>

namespace waferwise::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Threshold read once from WAFERWISE_LOG (error|warn|info|debug); default warn.
Level threshold();
void set_threshold(Level level);

void write(Level level, std::string_view message);

inline void warn(std::string_view message) { write(Level::Warn, message); }
inline void info(std::string_view message) { write(Level::Info, message); }
inline void debug(std::string_view message) { write(Level::Debug, message); }

}  // namespace waferwise::log
