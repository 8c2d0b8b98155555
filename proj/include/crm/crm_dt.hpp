#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crm/datasets.hpp"
#include "crm/features.hpp"
#include "crm/numerics/attention.hpp"
#include "crm/towers.hpp"

namespace crm {

// Interleaved watch-time-to-go / item stream
//   W_1, x_1, W_2, x_2, ..., W_n, x_n, W_{n+1}
// with W_{n+1} the condition and W_i = W_{i+1} + w_i.
struct DecisionSequence {
  std::vector<double> watch_to_go;  // n + 1 values, non-increasing
  std::vector<ItemId> items;        // n values

  std::size_t length() const { return items.size(); }
  std::size_t token_count() const { return 2 * items.size() + 1; }
};

DecisionSequence build_decision_sequence(std::span<const double> watch, std::span<const ItemId> items,
                                         double condition_next);

inline constexpr std::size_t kWatchToGoBuckets = 24;

struct DtConfig {
  std::size_t n_items = 0;
  std::size_t n_users = 0;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t ffn_mult = 4;
  std::size_t max_seq_len = 32;
  std::size_t wtg_buckets = kWatchToGoBuckets;
  double bucket_tau = 1.0;
  // Static user features: a learned per-user embedding of this width (0 = none).
  std::size_t user_dim = 8;
  std::vector<std::size_t> proj_hidden = {64};
  std::size_t output_dim = 32;
  std::size_t item_dim = 32;
  std::vector<std::size_t> item_hidden = {64};
  // Item tower reads the transformer's item-token table (needs item_dim == d_model).
  bool share_item_embeddings = false;
  std::uint64_t seed = 0;
};

// Transformer-based CRM. The user vector is read at the final W_{n+1}
// token, concatenated with the static user features, projected and
// L2-normalized. Items go through a separate two-tower style item tower.
class DtModel final : public RetrievalModel {
 public:
  explicit DtModel(const DtConfig& config);

  const DtConfig& config() const { return config_; }
  std::size_t max_tokens() const { return 2 * config_.max_seq_len + 1; }

  std::string_view variant() const override { return "crm_dt"; }
  bool conditioned() const override { return true; }
  std::size_t n_items() const override { return config_.n_items; }
  std::size_t output_dim() const override { return config_.output_dim; }

  // Transformer output for every token position (token_count x d_model).
  Matrix hidden_states(const DecisionSequence& seq) const;
  std::vector<float> user_forward(const DecisionSequence& seq, UserId user) const;
  std::vector<float> item_forward(ItemId item) const;

  // Without a condition the final token carries W_{n+1} = 0.
  std::vector<float> encode_user(const UserQuery& query) const override;
  Matrix item_vectors() const override;

  ParamList<float> params();
  Checkpoint to_checkpoint() const override;
  static DtModel from_checkpoint(const Checkpoint& ckpt);

  // Batch loss with teacher-forced W_{n+1} = target watch time.
  double batch_loss(const Batch& batch, double temperature, bool backward);

  EmbeddingTable<float> token_items;
  EmbeddingTable<float> wtg_embeddings;
  EmbeddingTable<float> positions;
  CausalTransformer<float> transformer;
  EmbeddingTable<float> user_embeddings;  // only when user_dim > 0
  Mlp<float> projection;
  EmbeddingTable<float> item_embeddings;  // unused when share_item_embeddings
  Mlp<float> item_mlp;

 private:
  struct SeqCache {
    DecisionSequence seq;
    std::vector<std::size_t> wtg_ids;
    typename CausalTransformer<float>::Cache transformer;
  };

  Matrix embed_tokens(const DecisionSequence& seq, std::vector<std::size_t>* wtg_ids) const;
  const EmbeddingTable<float>& item_table() const { return config_.share_item_embeddings ? token_items : item_embeddings; }
  EmbeddingTable<float>& item_table() { return config_.share_item_embeddings ? token_items : item_embeddings; }
  void fill_projection_input(std::span<const float> last_hidden, UserId user, std::span<float> out) const;

  DtConfig config_;
};

// Same contract as the two-tower train(): in-batch softmax on the batches of
// each epoch, per-epoch mean loss.
TrainTrace dt_train(DtModel& model, std::span<const TrainExample> examples, const TrainOptions& options);

}  // namespace crm
