#pragma once

#include <string_view>

namespace stmre {

enum class LogLevel { Quiet = 0, Warning = 1, Info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

/// Writes "warning: <message>" to stderr unless quiet.
void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace stmre
