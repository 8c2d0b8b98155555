#include "crm/harness/trace.hpp"

#include <cmath>

#include "crm/error.hpp"
#include "crm/policy.hpp"

namespace crm {

std::vector<TraceRow> condition_trace(const SimWorld& world, std::span<const UserHistory> histories,
                                      std::size_t window_n, std::size_t n_buckets) {
  if (n_buckets == 0) throw ConfigError("trace needs at least one bucket");
  std::vector<TraceRow> rows(n_buckets);
  std::vector<double> sum_max(n_buckets, 0.0), sum_avg(n_buckets, 0.0);
  const auto max_spec = ConditionSpec::maximum(window_n);
  const auto avg_spec = ConditionSpec::average(window_n);
  Rng unused(0);
  std::vector<double> watch;
  for (const auto& h : histories) {
    const double hour = world.active_hours.at(h.user_id);
    const auto b = std::min(n_buckets - 1, static_cast<std::size_t>(std::floor(hour * static_cast<double>(n_buckets) / 24.0)));
    if (h.events.size() >= 2) ++rows[b].users;
    watch.clear();
    for (const auto& e : h.events) {
      if (!watch.empty()) {
        sum_max[b] += select_condition(max_spec, watch, unused);
        sum_avg[b] += select_condition(avg_spec, watch, unused);
        ++rows[b].requests;
      }
      watch.push_back(e.watch_time);
    }
  }
  std::vector<TraceRow> out;
  for (std::size_t b = 0; b < n_buckets; ++b) {
    if (rows[b].requests == 0) continue;
    TraceRow r = rows[b];
    r.bucket = b;
    r.hour_start = 24.0 * static_cast<double>(b) / static_cast<double>(n_buckets);
    r.mean_max = sum_max[b] / static_cast<double>(r.requests);
    r.mean_avg = sum_avg[b] / static_cast<double>(r.requests);
    out.push_back(r);
  }
  return out;
}

}  // namespace crm
