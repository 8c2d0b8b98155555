#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "crm/error.hpp"
#include "crm/simulator.hpp"

using namespace crm;

namespace {

WorldConfig small_world(std::uint64_t seed = 3) {
  WorldConfig c;
  c.n_users = 60;
  c.n_items = 300;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Simulator, SameSeedSameWorldAndLog) {
  const auto a = build_world(small_world()), b = build_world(small_world());
  EXPECT_TRUE(a == b);
  EXPECT_EQ(generate_sessions(a, {}), generate_sessions(b, {}));
  EXPECT_FALSE(a == build_world(small_world(4)));
}

TEST(Simulator, ExpectedWatchTimeFormula) {
  auto cfg = small_world();
  cfg.alpha = 1.5;
  cfg.beta = -0.25;
  const auto w = build_world(cfg);
  for (ItemId i : {1u, 17u, 300u}) {
    double dot = 0;
    for (std::size_t c = 0; c < cfg.latent_dim; ++c) dot += double(w.user_latents(5, c)) * w.item_latents(i - 1, c);
    const double want = w.durations[i - 1] / (1.0 + std::exp(-(1.5 * dot - 0.25)));
    EXPECT_NEAR(expected_watch_time(w, 5, i), want, 1e-9);
  }
  EXPECT_THROW(expected_watch_time(w, 5, 0), DataError);
  EXPECT_THROW(expected_watch_time(w, 60, 1), DataError);
}

TEST(Simulator, ZeroCountsRejected) {
  auto c = small_world();
  c.n_items = 0;
  EXPECT_THROW(build_world(c), ConfigError);
  c = small_world();
  c.n_users = 0;
  EXPECT_THROW(build_world(c), ConfigError);
}

TEST(Simulator, LatentNormsAreAboutOne) {
  // N(0, 1/d) coordinates give chi-distributed norms with mean close to 1.
  const auto w = build_world(small_world());
  double sum = 0;
  for (std::size_t u = 0; u < w.n_users(); ++u) {
    double s = 0;
    for (float v : w.user_latents.row(u)) s += double(v) * v;
    sum += std::sqrt(s);
  }
  const double mean = sum / w.n_users();
  EXPECT_GT(mean, 0.8);
  EXPECT_LT(mean, 1.2);
}

TEST(Simulator, LogShapeAndBounds) {
  const auto w = build_world(small_world());
  SessionConfig s;
  const auto ev = generate_sessions(w, s);
  ASSERT_EQ(ev.size(), w.n_users() * s.sessions_per_user * s.session_len);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    ASSERT_GE(ev[i].item_id, 1u);
    ASSERT_LE(ev[i].item_id, w.n_items());
    ASSERT_GE(ev[i].watch_time, 0.0);
    ASSERT_LE(ev[i].watch_time, w.duration(ev[i].item_id));
    if (i == 0) continue;
    ASSERT_GE(ev[i].user_id, ev[i - 1].user_id);
    if (ev[i].user_id == ev[i - 1].user_id) {
      ASSERT_EQ(ev[i].step, ev[i - 1].step + 1);
    }
  }
}

TEST(Simulator, NoiselessWatchIsOracleOnTickGrid) {
  const auto w = build_world(small_world());
  SessionConfig s;
  s.noise_sigma = 0.0;
  for (const auto& e : generate_sessions(w, s)) {
    const double oracle = expected_watch_time(w, e.user_id, e.item_id);
    ASSERT_LE(e.watch_time, oracle);
    ASSERT_GT(e.watch_time, oracle - 1.0 / kWatchTicksPerSecond);
    ASSERT_EQ(e.watch_time * kWatchTicksPerSecond, std::floor(e.watch_time * kWatchTicksPerSecond));
  }
}

TEST(Simulator, NoisyWatchAveragesToOracle) {
  const auto w = build_world(small_world());
  double observed = 0, expected = 0;
  for (const auto& e : generate_sessions(w, {})) {
    observed += e.watch_time;
    expected += expected_watch_time(w, e.user_id, e.item_id);
  }
  EXPECT_NEAR(observed / expected, 1.0, 0.05);
}

TEST(Simulator, PerUserStreamsAreIndependentOfOtherUsers) {
  const auto w = build_world(small_world());
  const auto all = generate_sessions(w, {});
  const auto one = generate_user_sessions(w, {}, 7);
  std::vector<InteractionEvent> slice;
  for (const auto& e : all)
    if (e.user_id == 7) slice.push_back(e);
  EXPECT_EQ(one, slice);
}

TEST(Simulator, ActiveHourShiftsDurationPreference) {
  auto cfg = small_world();
  cfg.n_users = 400;
  cfg.diurnal_amplitude = 2.0;
  const auto w = build_world(cfg);
  double night = 0, noon = 0;
  std::size_t n_night = 0, n_noon = 0;
  for (const auto& e : generate_sessions(w, {})) {
    const double h = w.active_hours[e.user_id];
    const double logd = std::log(w.duration(e.item_id));
    if (h < 3 || h > 21) night += logd, ++n_night;
    if (h > 9 && h < 15) noon += logd, ++n_noon;
  }
  ASSERT_GT(n_night, 0u);
  ASSERT_GT(n_noon, 0u);
  EXPECT_GT(night / n_night, noon / n_noon + 0.5);
}

TEST(Simulator, SaveLoadRoundTrip) {
  const auto w = build_world(small_world());
  const auto dir = std::filesystem::temp_directory_path() / "crm_world_rt";
  std::filesystem::create_directories(dir);
  w.save(dir);
  const auto back = SimWorld::load(dir);
  EXPECT_TRUE(back == w);
  EXPECT_EQ(back.config.alpha, w.config.alpha);
  EXPECT_EQ(back.config.diurnal_amplitude, w.config.diurnal_amplitude);
  std::filesystem::remove_all(dir);
}
