#pragma once

#include <span>
#include <vector>

#include "crm/datasets.hpp"
#include "crm/simulator.hpp"

namespace crm {

// Per time-of-day bucket: average of the max- and avg-strategy conditions
// over every request issued by users active in that bucket.
struct TraceRow {
  std::size_t bucket = 0;
  double hour_start = 0.0;
  std::size_t users = 0;
  std::size_t requests = 0;
  double mean_max = 0.0;
  double mean_avg = 0.0;
};

// A request is every event after a user's first one; its condition is
// computed from the preceding min(window_n, available) watch times. Users
// are placed in buckets by their simulated active hour. Empty buckets are
// omitted.
std::vector<TraceRow> condition_trace(const SimWorld& world, std::span<const UserHistory> histories,
                                      std::size_t window_n = 32, std::size_t n_buckets = 24);

}  // namespace crm
