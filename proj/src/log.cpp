#include "stmre/log.hpp"

#include <atomic>
#include <iostream>

namespace stmre {

namespace {
std::atomic<LogLevel> current_level{LogLevel::Warning};
}

void set_log_level(LogLevel level) { current_level = level; }
LogLevel log_level() { return current_level; }

void log_warning(std::string_view message) {
    if (current_level >= LogLevel::Warning) std::cerr << "warning: " << message << '\n';
}

void log_info(std::string_view message) {
    if (current_level >= LogLevel::Info) std::cerr << message << '\n';
}

}  // namespace stmre
