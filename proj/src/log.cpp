#include "cbe/log.hpp"

#include <iostream>
#include <mutex>

namespace cbe {

namespace {
std::mutex g_log_mutex;
LogSink g_sink;
}  // namespace

void set_log_sink(LogSink sink)
{
    std::lock_guard<std::mutex> lock(g_log_mutex);
    g_sink = std::move(sink);
}

void log_message(LogLevel level, const std::string& msg)
{
    std::lock_guard<std::mutex> lock(g_log_mutex);
    if (g_sink) {
        g_sink(level, msg);
        return;
    }
    if (level == LogLevel::warning)
        std::cerr << "warning: " << msg << '\n';
}

}  // namespace cbe
