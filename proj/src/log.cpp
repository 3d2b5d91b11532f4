#include "cret/log.hpp"

#include <iostream>
#include <mutex>

namespace cret {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink() {
  static LogSink s = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

LogSink set_warning_sink(LogSink s) {
  std::lock_guard lock(sink_mutex());
  LogSink old = std::move(sink());
  sink() = std::move(s);
  return old;
}

void log_warning(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace cret
