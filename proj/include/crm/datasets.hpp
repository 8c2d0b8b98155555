#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "crm/simulator.hpp"

namespace crm {

struct UserHistory {
  UserId user_id = 0;
  std::vector<InteractionEvent> events;  // sorted by step
};

// A history prefix x_1..x_n (with watch times) and the event that followed it.
struct TrainExample {
  UserId user_id = 0;
  std::vector<ItemId> items;
  std::vector<double> watch;
  ItemId target_item = kPadItem;
  double target_watch = 0.0;
  std::uint32_t target_step = 0;
};

// Event log TSV: header `user_id\titem_id\twatch_time\tstep`, LF line endings.
void write_events(const std::filesystem::path& path, std::span<const InteractionEvent> events);

// Parses and validates a log. Item ids must lie in 1..n_items, user ids below
// n_users when given. Result is sorted by (user, step).
std::vector<InteractionEvent> load_events(const std::filesystem::path& path, std::size_t n_items,
                                          std::optional<std::size_t> n_users = std::nullopt);

std::vector<UserHistory> group_histories(std::span<const InteractionEvent> events);

struct LeaveOneOutSplit {
  std::vector<TrainExample> train;
  std::vector<TrainExample> test;  // one per kept user, in user order
  std::size_t skipped_users = 0;   // histories shorter than 3
};

// The last event of every user becomes its test target. Every earlier event
// from the second one on becomes a train target, each with the preceding
// (at most max_seq_len) events as its prefix.
LeaveOneOutSplit split_leave_one_out(std::span<const UserHistory> histories, std::size_t max_seq_len = 32);

// Left-padded mini-batch; row i occupies [i*window, (i+1)*window) and its
// real tokens are the last lengths[i] positions.
struct Batch {
  std::size_t window = 0;
  std::vector<ItemId> items;
  std::vector<double> watch;
  std::vector<std::uint32_t> lengths;
  std::vector<ItemId> targets;
  std::vector<double> target_watch;
  std::vector<UserId> users;

  std::size_t size() const { return targets.size(); }
  std::span<const ItemId> item_row(std::size_t i) const { return {items.data() + i * window, window}; }
  std::span<const double> watch_row(std::size_t i) const { return {watch.data() + i * window, window}; }
  // Unpadded views of row i.
  std::span<const ItemId> history_items(std::size_t i) const { return item_row(i).last(lengths[i]); }
  std::span<const double> history_watch(std::size_t i) const { return watch_row(i).last(lengths[i]); }
};

// Pads the given examples into one batch (prefixes longer than window keep
// their most recent events).
Batch make_batch(std::span<const TrainExample* const> examples, std::size_t window);

struct BatchOptions {
  std::size_t batch_size = 128;
  std::size_t window = 32;
  std::uint64_t seed = 0;
  // Consecutive target collisions tolerated while filling one batch before
  // it is closed early. 0 means batch_size.
  std::size_t max_retries = 0;
};

struct EpochBatches {
  std::vector<Batch> batches;
  std::size_t dropped = 0;  // examples left over in a singleton batch
};

// One shuffled pass over `examples`. Every batch has pairwise distinct target
// items; colliding examples are deferred to later batches, never duplicated.
EpochBatches make_batches(std::span<const TrainExample> examples, const BatchOptions& options);

}  // namespace crm
