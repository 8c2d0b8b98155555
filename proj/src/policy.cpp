#include "crm/policy.hpp"

#include <algorithm>
#include <cmath>

#include "crm/error.hpp"
#include "crm/text.hpp"

namespace crm {

ConditionSpec ConditionSpec::explicit_value(double seconds, std::size_t window) {
  ConditionSpec s;
  s.mode = Mode::explicit_value;
  s.value = seconds;
  s.window_n = window;
  return s;
}

ConditionSpec ConditionSpec::average(std::size_t window) {
  ConditionSpec s;
  s.mode = Mode::avg;
  s.window_n = window;
  return s;
}

ConditionSpec ConditionSpec::maximum(std::size_t window) {
  ConditionSpec s;
  s.mode = Mode::max;
  s.window_n = window;
  return s;
}

ConditionSpec ConditionSpec::multiplexed(double p, std::size_t window, std::uint64_t seed) {
  ConditionSpec s;
  s.mode = Mode::multiplexed;
  s.p = p;
  s.window_n = window;
  s.rng_seed = seed;
  return s;
}

void ConditionSpec::validate() const {
  if (window_n == 0) throw ConfigError("condition window must be >= 1");
  if (mode == Mode::multiplexed && !(p >= 0.0 && p <= 1.0)) throw ConfigError("multiplexing probability must lie in [0, 1]");
  if (mode == Mode::explicit_value && !(value >= 0.0 && std::isfinite(value))) {
    throw ConfigError("explicit condition must be a finite value >= 0");
  }
}

std::string ConditionSpec::label() const {
  switch (mode) {
    case Mode::explicit_value: return "value:" + format_double(value);
    case Mode::avg: return "avg";
    case Mode::max: return "max";
    case Mode::multiplexed: return "mux:" + format_double(p);
  }
  return "?";
}

ConditionSpec parse_condition(const std::string& text, std::size_t window, std::uint64_t seed) {
  ConditionSpec spec;
  if (text == "avg") {
    spec = ConditionSpec::average(window);
  } else if (text == "max") {
    spec = ConditionSpec::maximum(window);
  } else if (text.starts_with("mux:")) {
    auto p = parse_double(std::string_view(text).substr(4));
    if (!p) throw ConfigError("malformed condition '" + text + "'");
    spec = ConditionSpec::multiplexed(*p, window, seed);
  } else if (text.starts_with("value:")) {
    auto v = parse_double(std::string_view(text).substr(6));
    if (!v) throw ConfigError("malformed condition '" + text + "'");
    spec = ConditionSpec::explicit_value(*v, window);
  } else {
    throw ConfigError("unknown condition '" + text + "' (expected avg, max, mux:<p> or value:<seconds>)");
  }
  spec.rng_seed = seed;
  spec.validate();
  return spec;
}

double select_condition(const ConditionSpec& spec, std::span<const double> recent_watch_times, Rng& rng) {
  spec.validate();
  if (recent_watch_times.empty()) throw DataError("cannot select a condition from an empty watch history");
  const auto window = recent_watch_times.last(std::min(spec.window_n, recent_watch_times.size()));

  double sum = 0.0, mx = 0.0;
  for (double w : window) {
    sum += w;
    mx = std::max(mx, w);
  }
  const double avg = sum / static_cast<double>(window.size());

  switch (spec.mode) {
    case ConditionSpec::Mode::explicit_value: return spec.value;
    case ConditionSpec::Mode::avg: return avg;
    case ConditionSpec::Mode::max: return mx;
    case ConditionSpec::Mode::multiplexed: return uniform01(rng) < spec.p ? mx : avg;
  }
  return avg;
}

}  // namespace crm
