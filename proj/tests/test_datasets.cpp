#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "crm/datasets.hpp"
#include "crm/error.hpp"

using namespace crm;
namespace fs = std::filesystem;

namespace {

std::vector<UserHistory> synthetic_histories(const std::vector<std::size_t>& lengths) {
  std::vector<UserHistory> out;
  ItemId next = 1;
  for (std::size_t u = 0; u < lengths.size(); ++u) {
    UserHistory h;
    h.user_id = static_cast<UserId>(u);
    for (std::size_t t = 0; t < lengths[u]; ++t) {
      h.events.push_back({h.user_id, next, 10.0 * static_cast<double>(t + 1), static_cast<std::uint32_t>(t)});
      next = next % 50 + 1;
    }
    out.push_back(std::move(h));
  }
  return out;
}

fs::path write_text(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Events, WriteLoadRoundTrip) {
  std::vector<InteractionEvent> ev = {{1, 5, 12.5, 0}, {0, 3, 0.0, 1}, {0, 2, 7.25, 0}};
  const auto p = fs::temp_directory_path() / "crm_events_rt.tsv";
  write_events(p, ev);
  const auto back = load_events(p, 10, 2);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0], (InteractionEvent{0, 2, 7.25, 0}));
  EXPECT_EQ(back[1], (InteractionEvent{0, 3, 0.0, 1}));
  EXPECT_EQ(back[2], (InteractionEvent{1, 5, 12.5, 0}));
  fs::remove(p);
}

TEST(Events, MalformedRowsReportLine) {
  const std::string header = "user_id\titem_id\twatch_time\tstep\n";
  auto expect_line = [](const fs::path& p, const std::string& needle) {
    try {
      load_events(p, 10);
      FAIL() << "expected DataError for " << p;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line(write_text("crm_bad1.tsv", header + "0\t1\t3.0\t0\n0\t11\t1.0\t1\n"), ":3");
  expect_line(write_text("crm_bad2.tsv", header + "0\t0\t3.0\t0\n"), ":2");
  expect_line(write_text("crm_bad3.tsv", header + "0\t1\t-1\t0\n"), ":2");
  expect_line(write_text("crm_bad4.tsv", header + "0\t1\tabc\t0\n"), ":2");
  expect_line(write_text("crm_bad5.tsv", header + "0\t1\t2\t0\n0\t2\t2\t0\n"), "duplicate step");
  expect_line(write_text("crm_bad6.tsv", "user\titem\n"), ":1");
  EXPECT_THROW(load_events(fs::temp_directory_path() / "does_not_exist.tsv", 10), DataError);
}

TEST(Split, CountsMatchCountingOracle) {
  const std::vector<std::size_t> lengths = {1, 2, 3, 10, 40};
  const auto split = split_leave_one_out(synthetic_histories(lengths), 32);
  // Users with n >= 3 give one test example and n - 2 train examples.
  std::size_t want_train = 0, want_test = 0, want_skip = 0;
  for (auto n : lengths) {
    if (n < 3) {
      ++want_skip;
      continue;
    }
    ++want_test;
    want_train += n - 2;
  }
  EXPECT_EQ(split.train.size(), want_train);
  EXPECT_EQ(split.test.size(), want_test);
  EXPECT_EQ(split.skipped_users, want_skip);
}

TEST(Split, TestIsLastEventAndNothingLeaks) {
  const auto hist = synthetic_histories({12, 40});
  const auto split = split_leave_one_out(hist, 8);
  for (const auto& t : split.test) {
    const auto& h = hist[t.user_id].events;
    EXPECT_EQ(t.target_item, h.back().item_id);
    EXPECT_EQ(t.target_step, h.back().step);
    EXPECT_LE(t.items.size(), 8u);
    EXPECT_EQ(t.items.back(), h[h.size() - 2].item_id);
  }
  for (const auto& ex : split.train) {
    const auto& h = hist[ex.user_id].events;
    EXPECT_LT(ex.target_step, h.back().step);  // held-out event never a train target
    EXPECT_EQ(ex.items.size(), std::min<std::size_t>(ex.target_step, 8));
    EXPECT_EQ(ex.items.size(), ex.watch.size());
    EXPECT_EQ(ex.items.back(), h[ex.target_step - 1].item_id);
  }
}

TEST(Batch, LeftPaddedRows) {
  TrainExample a{0, {1, 2, 3}, {1, 2, 3}, 4, 4.0, 3}, b{1, {7}, {9}, 8, 8.0, 1};
  std::vector<const TrainExample*> ptrs = {&a, &b};
  const auto batch = make_batch(ptrs, 4);
  EXPECT_EQ(batch.size(), 2u);
  EXPECT_EQ(std::vector<ItemId>(batch.item_row(0).begin(), batch.item_row(0).end()), (std::vector<ItemId>{0, 1, 2, 3}));
  EXPECT_EQ(std::vector<ItemId>(batch.item_row(1).begin(), batch.item_row(1).end()), (std::vector<ItemId>{0, 0, 0, 7}));
  EXPECT_EQ(batch.history_items(1).size(), 1u);
  EXPECT_EQ(batch.targets, (std::vector<ItemId>{4, 8}));
  EXPECT_DOUBLE_EQ(batch.history_watch(1)[0], 9.0);
}

TEST(Batch, EpochHasDistinctTargetsAndCoversExamples) {
  const auto split = split_leave_one_out(synthetic_histories({40, 40, 40, 40, 40}), 32);
  BatchOptions opts;
  opts.batch_size = 16;
  opts.seed = 5;
  const auto epoch = make_batches(split.train, opts);
  std::size_t covered = 0;
  for (const auto& b : epoch.batches) {
    EXPECT_GE(b.size(), 2u);
    EXPECT_LE(b.size(), 16u);
    std::set<ItemId> t(b.targets.begin(), b.targets.end());
    EXPECT_EQ(t.size(), b.size());
    covered += b.size();
  }
  EXPECT_EQ(covered + epoch.dropped, split.train.size());
  const auto again = make_batches(split.train, opts);
  ASSERT_EQ(again.batches.size(), epoch.batches.size());
  for (std::size_t i = 0; i < again.batches.size(); ++i) EXPECT_EQ(again.batches[i].targets, epoch.batches[i].targets);
}
