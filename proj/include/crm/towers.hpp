#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "crm/datasets.hpp"
#include "crm/features.hpp"
#include "crm/numerics/layers.hpp"
#include "crm/numerics/optim.hpp"

namespace crm {

struct TwoTowerConfig {
  std::size_t n_items = 0;
  std::size_t item_dim = 32;
  std::size_t watch_dim = 8;
  std::size_t condition_dim = 8;
  std::vector<std::size_t> user_hidden = {64};
  std::vector<std::size_t> item_hidden = {64};
  std::size_t output_dim = 32;
  std::size_t n_buckets = kConditionBuckets;
  double bucket_tau = 1.0;
  // false: baseline two-tower. true: condition-aware user tower (CRM-DNN).
  bool conditioned = false;
  std::uint64_t seed = 0;
};

enum class ConditionMode { off, teacher_forced };

// Baseline two-tower retriever and its condition-aware variant. The user
// tower input is
//   mean(item emb of history) ++ mean(watch-bucket emb of history) ++ condition slot
// where the condition slot holds the condition-bucket embedding, or zeros
// when no condition is supplied. Both towers L2-normalize their output.
class TwoTowerModel final : public RetrievalModel {
 public:
  explicit TwoTowerModel(const TwoTowerConfig& config);

  const TwoTowerConfig& config() const { return config_; }
  std::size_t user_input_dim() const { return config_.item_dim + config_.watch_dim + config_.condition_dim; }

  std::string_view variant() const override { return config_.conditioned ? "crm_dnn" : "baseline"; }
  bool conditioned() const override { return config_.conditioned; }
  std::size_t n_items() const override { return config_.n_items; }
  std::size_t output_dim() const override { return config_.output_dim; }

  std::vector<float> user_forward(std::span<const ItemId> items, std::span<const double> watch,
                                  std::optional<ConditionFeature> condition) const;
  std::vector<float> item_forward(ItemId item) const;

  std::vector<float> encode_user(const UserQuery& query) const override;
  Matrix item_vectors() const override;

  ParamList<float> params();
  Checkpoint to_checkpoint() const override;
  static TwoTowerModel from_checkpoint(const Checkpoint& ckpt);

  // Loss on one batch; accumulates parameter gradients when `backward`.
  double batch_loss(const Batch& batch, ConditionMode mode, double temperature, bool backward);

  EmbeddingTable<float> item_embeddings;
  EmbeddingTable<float> watch_embeddings;
  EmbeddingTable<float> condition_embeddings;
  Mlp<float> user_mlp;
  Mlp<float> item_mlp;

 private:
  // User tower input row for one history (pads skipped). Returns the number of
  // real history items.
  std::size_t user_features(std::span<const ItemId> items, std::span<const double> watch,
                            std::optional<ConditionFeature> condition, std::span<float> out) const;

  TwoTowerConfig config_;
};

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 128;
  std::size_t window = 32;
  double temperature = 1.0;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0 = no cap
};

struct TrainTrace {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> step_loss;
  std::size_t steps = 0;
};

// Mini-batch training with in-batch softmax. With teacher_forced, each
// example's observed target watch time is fed as the condition. Aborts with
// NumericError (naming epoch and batch) on a non-finite loss.
// Shared epoch/batch loop: batches each epoch with distinct targets, calls
// `batch_loss` (which must accumulate gradients into `params`), then steps
// the optimizer.
TrainTrace run_training_loop(const ParamList<float>& params, std::span<const TrainExample> examples,
                             const TrainOptions& options, const std::function<double(const Batch&)>& batch_loss);

TrainTrace train(TwoTowerModel& model, std::span<const TrainExample> examples, const TrainOptions& options,
                 ConditionMode mode);

}  // namespace crm
