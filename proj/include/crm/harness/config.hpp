#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crm/crm_dt.hpp"
#include "crm/retrieval.hpp"
#include "crm/simulator.hpp"
#include "crm/towers.hpp"

namespace crm {

// Everything an experiment run depends on. Loaded from a flat JSON object;
// `seed` and `variants` are required, every other key has a default.
struct PipelineConfig {
  std::uint64_t seed = 0;
  std::vector<std::string> variants;  // any of baseline, crm_dnn, crm_dt

  WorldConfig world;
  SessionConfig sessions;
  std::size_t max_seq_len = 32;

  // Two-tower models.
  std::size_t dim = 32;
  std::size_t hidden = 64;
  std::size_t epochs = 8;
  std::size_t batch_size = 128;
  double lr = 5e-3;
  double temperature = 0.05;
  std::string optimizer = "adam";

  // Transformer model.
  std::size_t dt_d_model = 32;
  std::size_t dt_layers = 2;
  std::size_t dt_heads = 2;
  std::size_t dt_user_dim = 8;
  std::size_t dt_epochs = 3;
  double dt_lr = 5e-3;
  bool dt_share_item_embeddings = false;

  std::string index = "exact";
  std::size_t n_clusters = 64;
  std::size_t n_probe = 8;

  std::size_t window = 32;
  double mux_p = 0.3;
  std::vector<std::size_t> eval_k = {10, 50, 100};
  std::size_t watch_k = 50;
  std::vector<double> sweep_grid = {2, 5, 10, 20, 40, 80, 160, 300};
  std::size_t trace_buckets = 24;

  // Checks ranges and cross-field constraints; throws ConfigError naming the key.
  void validate() const;

  TwoTowerConfig two_tower_config(bool conditioned) const;
  DtConfig dt_config() const;
  TrainOptions train_options(const std::string& variant) const;
  IndexConfig index_config() const;
};

// Parses a JSON object. Missing required keys and unknown keys are errors
// that name the key.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);

// Canonical JSON with every key (sorted), used for the resolved-config file
// and the config hash.
std::string resolved_config_json(const PipelineConfig& config);
// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const PipelineConfig& config);

// "key  default  description" lines for --help.
std::string config_keys_help();

}  // namespace crm
