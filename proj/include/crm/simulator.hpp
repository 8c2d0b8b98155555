#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "crm/numerics/matrix.hpp"

namespace crm {

using UserId = std::uint32_t;
// Item ids run 1..n_items; 0 is reserved for padding.
using ItemId = std::uint32_t;
inline constexpr ItemId kPadItem = 0;

// Logged watch times are floored to this grid (a power-of-two fraction of a
// second), so sums of watch times, and differences of those sums, are exact
// in double precision.
inline constexpr double kWatchTicksPerSecond = 1024.0;

struct InteractionEvent {
  UserId user_id = 0;
  ItemId item_id = kPadItem;
  double watch_time = 0.0;  // seconds, 0 <= watch_time <= duration(item)
  std::uint32_t step = 0;   // position in the user's log, monotone across sessions

  friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

struct WorldConfig {
  std::size_t n_users = 500;
  std::size_t n_items = 2000;
  std::size_t latent_dim = 16;
  double alpha = 2.0;  // engagement = sigmoid(alpha * <u, v> + beta)
  double beta = 0.0;
  double min_duration = 5.0;
  double max_duration = 300.0;
  // Each user is active around one hour of the simulated day. Users active
  // near hour 0 lean towards long items, users near hour 12 towards short
  // ones, with this strength (log-duration coefficient in the choice logits).
  double diurnal_amplitude = 1.0;
  std::uint64_t seed = 0;
};

struct SessionConfig {
  std::size_t sessions_per_user = 4;
  std::size_t session_len = 10;
  std::size_t candidates = 100;       // items shown per step, drawn uniformly
  double selection_temperature = 0.1;  // softmax temperature over affinity
  double noise_sigma = 0.15;          // watch-time noise stddev, as a fraction of duration
};

struct SimWorld {
  WorldConfig config;
  Matrix user_latents;              // n_users x latent_dim
  Matrix item_latents;              // n_items x latent_dim, row = item_id - 1
  std::vector<float> durations;     // seconds, index item_id - 1
  std::vector<float> active_hours;  // [0, 24), per user

  std::size_t n_users() const { return config.n_users; }
  std::size_t n_items() const { return config.n_items; }
  double duration(ItemId item) const;
  double affinity(UserId user, ItemId item) const;
  // Log-duration preference of a user, driven by their active hour.
  double duration_bias(UserId user) const;

  void save(const std::filesystem::path& dir) const;
  static SimWorld load(const std::filesystem::path& dir);

  friend bool operator==(const SimWorld&, const SimWorld&);
};

SimWorld build_world(const WorldConfig& config);

// duration(item) * sigmoid(alpha * <u, v> + beta)
double expected_watch_time(const SimWorld& world, UserId user, ItemId item);

// Event log sorted by (user, step). Watch times are on the kWatchTicksPerSecond grid. Each user draws from an independent
// stream derived from (world seed, user id).
std::vector<InteractionEvent> generate_sessions(const SimWorld& world, const SessionConfig& config);

// Events of a single user; generate_sessions is the concatenation of these.
std::vector<InteractionEvent> generate_user_sessions(const SimWorld& world, const SessionConfig& config, UserId user);

}  // namespace crm
