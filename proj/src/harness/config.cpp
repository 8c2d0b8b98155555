#include "crm/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "crm/error.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

using nlohmann::json;

namespace {

struct KeySpec {
  const char* name;
  const char* help;
  std::function<void(PipelineConfig&, const json&)> read;
  std::function<json(const PipelineConfig&)> write;
};

std::uint64_t as_u64(const json& v, const char* key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const char* key) {
  if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
  return v.get<double>();
}

std::string as_string(const json& v, const char* key) {
  if (!v.is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
  return v.get<std::string>();
}

bool as_bool(const json& v, const char* key) {
  if (!v.is_boolean()) throw ConfigError(std::string("config key '") + key + "' must be true or false");
  return v.get<bool>();
}

#define CRM_SIZE_KEY(NAME, FIELD, HELP)                                                                 \
  KeySpec{NAME, HELP, [](PipelineConfig& c, const json& v) { c.FIELD = as_u64(v, NAME); },          \
          [](const PipelineConfig& c) { return json(static_cast<std::uint64_t>(c.FIELD)); }}
#define CRM_DOUBLE_KEY(NAME, FIELD, HELP)                                                               \
  KeySpec{NAME, HELP, [](PipelineConfig& c, const json& v) { c.FIELD = as_double(v, NAME); },       \
          [](const PipelineConfig& c) { return json(c.FIELD); }}
#define CRM_STRING_KEY(NAME, FIELD, HELP)                                                               \
  KeySpec{NAME, HELP, [](PipelineConfig& c, const json& v) { c.FIELD = as_string(v, NAME); },       \
          [](const PipelineConfig& c) { return json(c.FIELD); }}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      CRM_SIZE_KEY("seed", seed, "master seed (required)"),
      KeySpec{"variants", "models to run: baseline, crm_dnn, crm_dt (required; string or list)",
              [](PipelineConfig& c, const json& v) {
                c.variants.clear();
                if (v.is_string()) {
                  c.variants.push_back(v.get<std::string>());
                } else if (v.is_array()) {
                  for (const auto& e : v) c.variants.push_back(as_string(e, "variants"));
                } else {
                  throw ConfigError("config key 'variants' must be a string or a list of strings");
                }
              },
              [](const PipelineConfig& c) { return json(c.variants); }},
      CRM_SIZE_KEY("n_users", world.n_users, "simulated users"),
      CRM_SIZE_KEY("n_items", world.n_items, "simulated items"),
      CRM_SIZE_KEY("latent_dim", world.latent_dim, "simulator latent dimension"),
      CRM_DOUBLE_KEY("alpha", world.alpha, "engagement slope: watch = duration * sigmoid(alpha * affinity + beta)"),
      CRM_DOUBLE_KEY("beta", world.beta, "engagement offset"),
      CRM_DOUBLE_KEY("min_duration", world.min_duration, "shortest item duration, seconds"),
      CRM_DOUBLE_KEY("max_duration", world.max_duration, "longest item duration, seconds"),
      CRM_DOUBLE_KEY("diurnal_amplitude", world.diurnal_amplitude, "time-of-day pull towards long or short items"),
      CRM_SIZE_KEY("sessions_per_user", sessions.sessions_per_user, "sessions per user"),
      CRM_SIZE_KEY("session_len", sessions.session_len, "events per session"),
      CRM_SIZE_KEY("candidates", sessions.candidates, "items shown per step (0 = all)"),
      CRM_DOUBLE_KEY("selection_temperature", sessions.selection_temperature, "softmax temperature of item choice"),
      CRM_DOUBLE_KEY("noise_sigma", sessions.noise_sigma, "watch-time noise, fraction of duration"),
      CRM_SIZE_KEY("max_seq_len", max_seq_len, "history window of train examples and the transformer context"),
      CRM_SIZE_KEY("dim", dim, "embedding and output dimension of the two-tower models"),
      CRM_SIZE_KEY("hidden", hidden, "hidden layer width of each tower"),
      CRM_SIZE_KEY("epochs", epochs, "two-tower training epochs"),
      CRM_SIZE_KEY("batch_size", batch_size, "training batch size"),
      CRM_DOUBLE_KEY("lr", lr, "two-tower learning rate"),
      CRM_DOUBLE_KEY("temperature", temperature, "in-batch softmax logit temperature"),
      CRM_STRING_KEY("optimizer", optimizer, "adam or sgd"),
      CRM_SIZE_KEY("dt_d_model", dt_d_model, "transformer width"),
      CRM_SIZE_KEY("dt_layers", dt_layers, "transformer blocks"),
      CRM_SIZE_KEY("dt_heads", dt_heads, "attention heads"),
      CRM_SIZE_KEY("dt_user_dim", dt_user_dim, "per-user embedding width of the transformer model (0 = none)"),
      CRM_SIZE_KEY("dt_epochs", dt_epochs, "transformer training epochs"),
      CRM_DOUBLE_KEY("dt_lr", dt_lr, "transformer learning rate"),
      KeySpec{"dt_share_item_embeddings", "item tower reuses the transformer's item table",
              [](PipelineConfig& c, const json& v) { c.dt_share_item_embeddings = as_bool(v, "dt_share_item_embeddings"); },
              [](const PipelineConfig& c) { return json(c.dt_share_item_embeddings); }},
      CRM_STRING_KEY("index", index, "exact or ivf"),
      CRM_SIZE_KEY("n_clusters", n_clusters, "IVF clusters"),
      CRM_SIZE_KEY("n_probe", n_probe, "IVF clusters probed per query"),
      CRM_SIZE_KEY("window", window, "trailing watch times used by the condition policy"),
      CRM_DOUBLE_KEY("mux_p", mux_p, "probability of the max strategy under multiplexing"),
      KeySpec{"eval_k", "HitRate cutoffs",
              [](PipelineConfig& c, const json& v) {
                if (!v.is_array()) throw ConfigError("config key 'eval_k' must be a list of integers");
                c.eval_k.clear();
                for (const auto& e : v) c.eval_k.push_back(as_u64(e, "eval_k"));
              },
              [](const PipelineConfig& c) {
                json a = json::array();
                for (auto k : c.eval_k) a.push_back(static_cast<std::uint64_t>(k));
                return a;
              }},
      CRM_SIZE_KEY("watch_k", watch_k, "top-K used for the oracle watch-time metric"),
      KeySpec{"sweep_grid", "explicit condition values for the sweep, seconds, ascending",
              [](PipelineConfig& c, const json& v) {
                if (!v.is_array()) throw ConfigError("config key 'sweep_grid' must be a list of numbers");
                c.sweep_grid.clear();
                for (const auto& e : v) c.sweep_grid.push_back(as_double(e, "sweep_grid"));
              },
              [](const PipelineConfig& c) { return json(c.sweep_grid); }},
      CRM_SIZE_KEY("trace_buckets", trace_buckets, "time-of-day buckets of the condition trace"),
  };
  return specs;
}

#undef CRM_SIZE_KEY
#undef CRM_DOUBLE_KEY
#undef CRM_STRING_KEY

json to_json(const PipelineConfig& c) {
  json j = json::object();
  for (const auto& k : key_specs()) j[k.name] = k.write(c);
  return j;
}

}  // namespace

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(std::string("config key '") + key + "' " + what);
  };
  require(!variants.empty(), "variants", "must name at least one model");
  std::set<std::string> seen;
  for (const auto& v : variants) {
    require(v == "baseline" || v == "crm_dnn" || v == "crm_dt", "variants", "has unknown model '" + v + "'");
    require(seen.insert(v).second, "variants", "lists '" + v + "' twice");
  }
  require(world.n_users > 0, "n_users", "must be > 0");
  require(world.n_items > 0, "n_items", "must be > 0");
  require(world.latent_dim > 0, "latent_dim", "must be > 0");
  require(world.min_duration > 0.0, "min_duration", "must be > 0");
  require(world.max_duration >= world.min_duration, "max_duration", "must be >= min_duration");
  require(sessions.sessions_per_user > 0, "sessions_per_user", "must be > 0");
  require(sessions.session_len >= 2, "session_len", "must be >= 2");
  require(sessions.selection_temperature > 0.0, "selection_temperature", "must be > 0");
  require(sessions.noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  require(sessions.sessions_per_user * sessions.session_len >= 3, "session_len",
          "leaves fewer than 3 events per user");
  require(max_seq_len > 0, "max_seq_len", "must be > 0");
  require(dim > 0, "dim", "must be > 0");
  require(hidden > 0, "hidden", "must be > 0");
  require(epochs > 0, "epochs", "must be > 0");
  require(batch_size >= 2, "batch_size", "must be >= 2");
  require(lr > 0.0, "lr", "must be > 0");
  require(temperature > 0.0, "temperature", "must be > 0");
  require(optimizer == "adam" || optimizer == "sgd", "optimizer", "must be adam or sgd");
  require(dt_d_model > 0, "dt_d_model", "must be > 0");
  require(dt_layers > 0, "dt_layers", "must be > 0");
  require(dt_heads > 0 && dt_d_model % dt_heads == 0, "dt_heads", "must divide dt_d_model");
  require(dt_epochs > 0, "dt_epochs", "must be > 0");
  require(dt_lr > 0.0, "dt_lr", "must be > 0");
  require(!dt_share_item_embeddings || dt_d_model == dim, "dt_share_item_embeddings", "needs dt_d_model == dim");
  require(index == "exact" || index == "ivf", "index", "must be exact or ivf");
  if (index == "ivf") {
    require(n_clusters > 0 && n_clusters <= world.n_items, "n_clusters", "must be in 1..n_items");
    require(n_probe > 0 && n_probe <= n_clusters, "n_probe", "must be in 1..n_clusters");
  }
  require(window > 0, "window", "must be > 0");
  require(mux_p >= 0.0 && mux_p <= 1.0, "mux_p", "must be in [0, 1]");
  require(!eval_k.empty(), "eval_k", "must not be empty");
  for (auto k : eval_k) require(k > 0, "eval_k", "entries must be > 0");
  require(watch_k > 0, "watch_k", "must be > 0");
  require(!sweep_grid.empty(), "sweep_grid", "must not be empty");
  for (std::size_t i = 0; i < sweep_grid.size(); ++i) {
    require(sweep_grid[i] >= 0.0, "sweep_grid", "entries must be >= 0");
    require(i == 0 || sweep_grid[i] > sweep_grid[i - 1], "sweep_grid", "must be strictly ascending");
  }
  require(trace_buckets > 0, "trace_buckets", "must be > 0");
}

TwoTowerConfig PipelineConfig::two_tower_config(bool conditioned) const {
  TwoTowerConfig c;
  c.n_items = world.n_items;
  c.item_dim = dim;
  c.output_dim = dim;
  c.user_hidden = {hidden};
  c.item_hidden = {hidden};
  c.conditioned = conditioned;
  c.seed = splitmix64(seed ^ (conditioned ? 0x2ULL : 0x1ULL));
  return c;
}

DtConfig PipelineConfig::dt_config() const {
  DtConfig c;
  c.n_items = world.n_items;
  c.n_users = world.n_users;
  c.d_model = dt_d_model;
  c.n_layers = dt_layers;
  c.n_heads = dt_heads;
  c.max_seq_len = max_seq_len;
  c.user_dim = dt_user_dim;
  c.proj_hidden = {hidden};
  c.output_dim = dim;
  c.item_dim = dim;
  c.item_hidden = {hidden};
  c.share_item_embeddings = dt_share_item_embeddings;
  c.seed = splitmix64(seed ^ 0x3ULL);
  return c;
}

TrainOptions PipelineConfig::train_options(const std::string& variant) const {
  const bool dt = variant == "crm_dt";
  TrainOptions o;
  o.epochs = dt ? dt_epochs : epochs;
  o.batch_size = batch_size;
  o.window = max_seq_len;
  o.temperature = temperature;
  o.optimizer.kind = parse_optimizer_kind(optimizer);
  o.optimizer.lr = dt ? dt_lr : lr;
  o.seed = splitmix64(seed ^ fnv1a64(variant));
  return o;
}

IndexConfig PipelineConfig::index_config() const {
  IndexConfig c;
  c.kind = parse_index_kind(index);
  c.n_clusters = n_clusters;
  c.n_probe = n_probe;
  return c;
}

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::set<std::string> known;
  for (const auto& k : key_specs()) known.insert(k.name);
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  for (const char* required : {"seed", "variants"}) {
    if (!j.contains(required)) throw ConfigError(std::string("missing config key '") + required + "'");
  }
  PipelineConfig c;
  for (const auto& k : key_specs()) {
    if (j.contains(k.name)) k.read(c, j.at(k.name));
  }
  c.world.seed = c.seed;
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string resolved_config_json(const PipelineConfig& config) { return to_json(config).dump(2) + "\n"; }

std::string config_hash(const PipelineConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(config).dump())));
  return buf;
}

std::string config_keys_help() {
  const PipelineConfig defaults;
  std::ostringstream o;
  for (const auto& k : key_specs()) {
    std::string def = std::string(k.name) == "seed" || std::string(k.name) == "variants" ? "(required)"
                                                                                            : k.write(defaults).dump();
    char line[256];
    std::snprintf(line, sizeof(line), "  %-26s %-28s %s\n", k.name, def.c_str(), k.help);
    o << line;
  }
  return o.str();
}

}  // namespace crm
