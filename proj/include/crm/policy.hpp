#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "crm/random.hpp"

namespace crm {

// How the inference-time condition value is chosen.
struct ConditionSpec {
  enum class Mode { explicit_value, avg, max, multiplexed };

  Mode mode = Mode::avg;
  double value = 0.0;          // explicit_value only
  double p = 0.3;              // multiplexed: probability of picking the max strategy
  std::size_t window_n = 32;   // trailing watch times considered
  std::uint64_t rng_seed = 0;

  static ConditionSpec explicit_value(double seconds, std::size_t window = 32);
  static ConditionSpec average(std::size_t window = 32);
  static ConditionSpec maximum(std::size_t window = 32);
  static ConditionSpec multiplexed(double p, std::size_t window = 32, std::uint64_t seed = 0);

  void validate() const;
  // "avg", "max", "mux:0.3", "value:120"
  std::string label() const;
};

// Parses the CLI form `avg | max | mux:<p> | value:<seconds>`.
ConditionSpec parse_condition(const std::string& text, std::size_t window = 32, std::uint64_t seed = 0);

// Condition value for one request from the user's recent watch times (oldest
// first). Only the last min(window_n, size) values are used. The multiplexed
// mode draws once from `rng`: max with probability p, average otherwise.
// Throws DataError on an empty history; callers fall back to the
// unconditioned model for such users.
double select_condition(const ConditionSpec& spec, std::span<const double> recent_watch_times, Rng& rng);

}  // namespace crm
