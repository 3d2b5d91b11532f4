#pragma once

#include <functional>
#include <string>

namespace cret {

using LogSink = std::function<void(const std::string&)>;

/// Replace the warning sink (default: one line on stderr). Returns the old one.
LogSink set_warning_sink(LogSink sink);

void log_warning(const std::string& message);

}  // namespace cret
