#include "crm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_set>

#include "crm/error.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

namespace {

constexpr std::string_view kHeader = "user_id\titem_id\twatch_time\tstep";

bool by_user_step(const InteractionEvent& a, const InteractionEvent& b) {
  return a.user_id != b.user_id ? a.user_id < b.user_id : a.step < b.step;
}

}  // namespace

void write_events(const std::filesystem::path& path, std::span<const InteractionEvent> events) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << kHeader << '\n';
  for (const auto& e : events) {
    f << e.user_id << '\t' << e.item_id << '\t' << format_double(e.watch_time) << '\t' << e.step << '\n';
  }
  if (!f) throw DataError("write failed for '" + path.string() + "'");
}

std::vector<InteractionEvent> load_events(const std::filesystem::path& path, std::size_t n_items,
                                          std::optional<std::size_t> n_users) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open event log '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line != kHeader) {
    throw DataError(path.string() + ":1: expected header '" + std::string(kHeader) + "'");
  }
  std::vector<InteractionEvent> events;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    const auto fields = split(line, '\t');
    if (fields.size() != 4) throw DataError(where + "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    const auto user = parse_u64(fields[0]);
    const auto item = parse_u64(fields[1]);
    const auto watch = parse_double(fields[2]);
    const auto step = parse_u64(fields[3]);
    if (!user || !item || !watch || !step) throw DataError(where + "malformed row '" + line + "'");
    if (*item == kPadItem || *item > n_items) {
      throw DataError(where + "item id " + std::to_string(*item) + " outside vocabulary 1.." + std::to_string(n_items));
    }
    if (n_users && *user >= *n_users) {
      throw DataError(where + "user id " + std::to_string(*user) + " outside 0.." + std::to_string(*n_users - 1));
    }
    if (!std::isfinite(*watch) || *watch < 0.0) throw DataError(where + "watch time must be finite and >= 0");
    if (*user > UINT32_MAX || *step > UINT32_MAX) throw DataError(where + "id overflow");
    events.push_back({static_cast<UserId>(*user), static_cast<ItemId>(*item), *watch, static_cast<std::uint32_t>(*step)});
  }
  std::stable_sort(events.begin(), events.end(), by_user_step);
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].user_id == events[i - 1].user_id && events[i].step == events[i - 1].step) {
      throw DataError(path.string() + ": duplicate step " + std::to_string(events[i].step) + " for user " +
                      std::to_string(events[i].user_id));
    }
  }
  return events;
}

std::vector<UserHistory> group_histories(std::span<const InteractionEvent> events) {
  std::vector<InteractionEvent> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(), by_user_step);
  std::vector<UserHistory> out;
  for (const auto& e : sorted) {
    if (out.empty() || out.back().user_id != e.user_id) out.push_back({e.user_id, {}});
    out.back().events.push_back(e);
  }
  return out;
}

LeaveOneOutSplit split_leave_one_out(std::span<const UserHistory> histories, std::size_t max_seq_len) {
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be > 0");
  LeaveOneOutSplit split;
  auto example_at = [&](const UserHistory& h, std::size_t target) {
    TrainExample ex;
    ex.user_id = h.user_id;
    const std::size_t begin = target > max_seq_len ? target - max_seq_len : 0;
    for (std::size_t j = begin; j < target; ++j) {
      ex.items.push_back(h.events[j].item_id);
      ex.watch.push_back(h.events[j].watch_time);
    }
    ex.target_item = h.events[target].item_id;
    ex.target_watch = h.events[target].watch_time;
    ex.target_step = h.events[target].step;
    return ex;
  };
  for (const auto& h : histories) {
    const std::size_t n = h.events.size();
    if (n < 3) {
      ++split.skipped_users;
      continue;
    }
    for (std::size_t t = 1; t + 1 < n; ++t) split.train.push_back(example_at(h, t));
    split.test.push_back(example_at(h, n - 1));
  }
  return split;
}

Batch make_batch(std::span<const TrainExample* const> examples, std::size_t window) {
  if (window == 0) throw ConfigError("batch window must be > 0");
  Batch b;
  b.window = window;
  b.items.assign(examples.size() * window, kPadItem);
  b.watch.assign(examples.size() * window, 0.0);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const TrainExample& ex = *examples[i];
    const std::size_t len = std::min(ex.items.size(), window);
    const std::size_t skip = ex.items.size() - len;
    const std::size_t pad = window - len;
    for (std::size_t j = 0; j < len; ++j) {
      b.items[i * window + pad + j] = ex.items[skip + j];
      b.watch[i * window + pad + j] = ex.watch[skip + j];
    }
    b.lengths.push_back(static_cast<std::uint32_t>(len));
    b.targets.push_back(ex.target_item);
    b.target_watch.push_back(ex.target_watch);
    b.users.push_back(ex.user_id);
  }
  return b;
}

EpochBatches make_batches(std::span<const TrainExample> examples, const BatchOptions& options) {
  if (options.batch_size < 2) throw ConfigError("batch_size must be >= 2 for in-batch negatives");
  const std::size_t max_retries = options.max_retries == 0 ? options.batch_size : options.max_retries;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(splitmix64(options.seed));
  std::shuffle(order.begin(), order.end(), rng);
  std::deque<std::size_t> pending(order.begin(), order.end());

  EpochBatches out;
  std::vector<const TrainExample*> members;
  std::unordered_set<ItemId> seen;
  std::vector<std::size_t> deferred;
  while (!pending.empty()) {
    members.clear();
    seen.clear();
    deferred.clear();
    std::size_t misses = 0;
    while (!pending.empty() && members.size() < options.batch_size) {
      const std::size_t idx = pending.front();
      pending.pop_front();
      if (!seen.insert(examples[idx].target_item).second) {
        deferred.push_back(idx);
        if (++misses > max_retries) break;
        continue;
      }
      members.push_back(&examples[idx]);
    }
    pending.insert(pending.begin(), deferred.begin(), deferred.end());
    if (members.size() < 2) {
      out.dropped += members.size();
      continue;
    }
    out.batches.push_back(make_batch(members, options.window));
  }
  return out;
}

}  // namespace crm
