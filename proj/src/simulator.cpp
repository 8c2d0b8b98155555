#include "crm/simulator.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <string>

#include "crm/error.hpp"
#include "crm/numerics/checkpoint.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_ids(const SimWorld& w, UserId user, ItemId item) {
  if (user >= w.n_users()) throw DataError("user id " + std::to_string(user) + " out of range");
  if (item == kPadItem || item > w.n_items()) throw DataError("item id " + std::to_string(item) + " out of range");
}

}  // namespace

double SimWorld::duration(ItemId item) const {
  if (item == kPadItem || item > n_items()) throw DataError("item id " + std::to_string(item) + " out of range");
  return durations[item - 1];
}

double SimWorld::affinity(UserId user, ItemId item) const {
  check_ids(*this, user, item);
  return dot<float>(user_latents.row(user), item_latents.row(item - 1));
}

double SimWorld::duration_bias(UserId user) const {
  return config.diurnal_amplitude * std::cos(2.0 * std::numbers::pi * active_hours.at(user) / 24.0);
}

bool operator==(const SimWorld& a, const SimWorld& b) {
  return a.config.n_users == b.config.n_users && a.config.n_items == b.config.n_items &&
         a.config.latent_dim == b.config.latent_dim && a.config.seed == b.config.seed &&
         a.user_latents == b.user_latents && a.item_latents == b.item_latents && a.durations == b.durations &&
         a.active_hours == b.active_hours;
}

SimWorld build_world(const WorldConfig& config) {
  if (config.n_users == 0 || config.n_items == 0 || config.latent_dim == 0) {
    throw ConfigError("world needs n_users, n_items and latent_dim > 0");
  }
  if (!(config.min_duration > 0.0) || !(config.max_duration >= config.min_duration)) {
    throw ConfigError("world durations need 0 < min_duration <= max_duration");
  }
  SimWorld w;
  w.config = config;
  Rng rng(config.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
  std::normal_distribution<double> normal(0.0, 1.0);

  w.user_latents = Matrix(config.n_users, config.latent_dim);
  for (auto& v : w.user_latents.values()) v = static_cast<float>(normal(rng) * scale);
  w.item_latents = Matrix(config.n_items, config.latent_dim);
  for (auto& v : w.item_latents.values()) v = static_cast<float>(normal(rng) * scale);

  const double lo = std::log(config.min_duration), hi = std::log(config.max_duration);
  w.durations.resize(config.n_items);
  for (auto& d : w.durations) {
    float v = static_cast<float>(std::exp(lo + (hi - lo) * uniform01(rng)));
    d = std::clamp(v, static_cast<float>(config.min_duration), static_cast<float>(config.max_duration));
  }
  w.active_hours.resize(config.n_users);
  for (auto& h : w.active_hours) h = static_cast<float>(24.0 * uniform01(rng));
  return w;
}

double expected_watch_time(const SimWorld& world, UserId user, ItemId item) {
  const double a = world.affinity(user, item);
  return world.duration(item) * sigmoid(world.config.alpha * a + world.config.beta);
}

std::vector<InteractionEvent> generate_user_sessions(const SimWorld& world, const SessionConfig& config, UserId user) {
  if (config.session_len < 2) throw ConfigError("session_len must be >= 2");
  if (!(config.selection_temperature > 0.0)) throw ConfigError("selection_temperature must be > 0");
  if (user >= world.n_users()) throw DataError("user id " + std::to_string(user) + " out of range");

  Rng rng = derived_rng(world.config.seed, user);
  const std::size_t n_items = world.n_items();
  const bool show_all = config.candidates == 0 || config.candidates >= n_items;
  const std::size_t n_cand = show_all ? n_items : config.candidates;
  const double bias = world.duration_bias(user);
  const double mid_log = 0.5 * (std::log(world.config.min_duration) + std::log(world.config.max_duration));

  std::vector<ItemId> cand(n_cand);
  std::vector<double> weights(n_cand);
  std::uniform_int_distribution<ItemId> pick(1, static_cast<ItemId>(n_items));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<InteractionEvent> events;
  events.reserve(config.sessions_per_user * config.session_len);
  std::uint32_t step = 0;
  for (std::size_t s = 0; s < config.sessions_per_user; ++s) {
    for (std::size_t t = 0; t < config.session_len; ++t, ++step) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n_cand; ++c) {
        cand[c] = show_all ? static_cast<ItemId>(c + 1) : pick(rng);
        weights[c] = world.affinity(user, cand[c]) / config.selection_temperature +
                     bias * (std::log(world.duration(cand[c])) - mid_log);
        mx = std::max(mx, weights[c]);
      }
      double total = 0.0;
      for (auto& wgt : weights) {
        wgt = std::exp(wgt - mx);
        total += wgt;
      }
      double r = uniform01(rng) * total;
      std::size_t chosen = n_cand - 1;
      for (std::size_t c = 0; c < n_cand; ++c) {
        if (r < weights[c]) {
          chosen = c;
          break;
        }
        r -= weights[c];
      }
      const ItemId item = cand[chosen];
      const double dur = world.duration(item);
      const double mean = expected_watch_time(world, user, item);
      double watch = mean;
      if (config.noise_sigma > 0.0) watch = std::clamp(mean + config.noise_sigma * dur * normal(rng), 0.0, dur);
      watch = std::floor(watch * kWatchTicksPerSecond) / kWatchTicksPerSecond;
      events.push_back({user, item, watch, step});
    }
  }
  return events;
}

std::vector<InteractionEvent> generate_sessions(const SimWorld& world, const SessionConfig& config) {
  std::vector<InteractionEvent> all;
  all.reserve(world.n_users() * config.sessions_per_user * config.session_len);
  for (UserId u = 0; u < world.n_users(); ++u) {
    auto ev = generate_user_sessions(world, config, u);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

void SimWorld::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  Checkpoint ckpt;
  ckpt.meta["kind"] = "world";
  ckpt.add("user_latents", user_latents);
  ckpt.add("item_latents", item_latents);
  ckpt.add("durations", Matrix(1, durations.size(), durations));
  ckpt.add("active_hours", Matrix(1, active_hours.size(), active_hours));
  ckpt.save(dir / "world.ckpt");

  std::ofstream meta(dir / "world.meta", std::ios::trunc);
  if (!meta) throw DataError("cannot write world metadata in '" + dir.string() + "'");
  meta << "n_users=" << config.n_users << "\n"
       << "n_items=" << config.n_items << "\n"
       << "latent_dim=" << config.latent_dim << "\n"
       << "alpha=" << format_double(config.alpha) << "\n"
       << "beta=" << format_double(config.beta) << "\n"
       << "min_duration=" << format_double(config.min_duration) << "\n"
       << "max_duration=" << format_double(config.max_duration) << "\n"
       << "diurnal_amplitude=" << format_double(config.diurnal_amplitude) << "\n"
       << "seed=" << config.seed << "\n";
}

SimWorld SimWorld::load(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "world.meta");
  if (!meta) throw DataError("cannot read world metadata in '" + dir.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed world metadata line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("world metadata missing key '" + k + "'");
    return it->second;
  };
  auto num = [&](const std::string& k) {
    auto v = parse_double(get(k));
    if (!v) throw DataError("world metadata key '" + k + "' is not a number");
    return *v;
  };
  auto count = [&](const std::string& k) {
    auto v = parse_u64(get(k));
    if (!v) throw DataError("world metadata key '" + k + "' is not an unsigned integer");
    return *v;
  };

  SimWorld w;
  w.config.n_users = count("n_users");
  w.config.n_items = count("n_items");
  w.config.latent_dim = count("latent_dim");
  w.config.alpha = num("alpha");
  w.config.beta = num("beta");
  w.config.min_duration = num("min_duration");
  w.config.max_duration = num("max_duration");
  w.config.diurnal_amplitude = num("diurnal_amplitude");
  w.config.seed = count("seed");

  const Checkpoint ckpt = Checkpoint::load(dir / "world.ckpt");
  w.user_latents = ckpt.tensor("user_latents");
  w.item_latents = ckpt.tensor("item_latents");
  const auto dv = ckpt.tensor("durations").values();
  w.durations.assign(dv.begin(), dv.end());
  const auto hv = ckpt.tensor("active_hours").values();
  w.active_hours.assign(hv.begin(), hv.end());
  if (w.user_latents.rows() != w.config.n_users || w.item_latents.rows() != w.config.n_items ||
      w.durations.size() != w.config.n_items || w.active_hours.size() != w.config.n_users ||
      w.user_latents.cols() != w.config.latent_dim || w.item_latents.cols() != w.config.latent_dim) {
    throw DataError("world checkpoint does not match its metadata");
  }
  return w;
}

}  // namespace crm
