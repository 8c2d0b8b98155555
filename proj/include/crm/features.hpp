#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "crm/numerics/checkpoint.hpp"
#include "crm/numerics/layers.hpp"
#include "crm/simulator.hpp"

namespace crm {

// floor(log2(1 + seconds / tau)) clamped to [0, n_buckets - 1].
std::size_t log_bucket(double seconds, std::size_t n_buckets, double tau = 1.0);

inline constexpr std::size_t kConditionBuckets = 16;

struct ConditionFeature {
  double raw_watch_time = 0.0;
  std::size_t bucket_id = 0;
};

ConditionFeature make_condition(double seconds, std::size_t n_buckets = kConditionBuckets, double tau = 1.0);

// Item tower shared by every model variant: embedding lookup, MLP, L2
// normalization. Row r of the output belongs to ids[r].
struct ItemTowerCache {
  std::vector<ItemId> ids;
  typename Mlp<float>::Cache mlp;
  Matrix out;
  std::vector<double> norms;
};

Matrix item_tower_forward(const EmbeddingTable<float>& table, const Mlp<float>& mlp, std::span<const ItemId> ids,
                          ItemTowerCache* cache = nullptr);
void item_tower_backward(EmbeddingTable<float>& table, Mlp<float>& mlp, const Matrix& grad_out,
                         const ItemTowerCache& cache);

// What a user-side encoder sees for one request.
struct UserQuery {
  UserId user_id = 0;
  std::span<const ItemId> items;  // oldest first; pad ids are ignored
  std::span<const double> watch;
  std::optional<double> condition;  // seconds; nullopt = unconditioned
};

// Common surface of the three model variants, used by evaluation and the CLI.
class RetrievalModel {
 public:
  virtual ~RetrievalModel() = default;

  // "baseline", "crm_dnn" or "crm_dt".
  virtual std::string_view variant() const = 0;
  // True when encode_user consumes UserQuery::condition.
  virtual bool conditioned() const = 0;
  virtual std::size_t n_items() const = 0;
  virtual std::size_t output_dim() const = 0;

  virtual std::vector<float> encode_user(const UserQuery& query) const = 0;
  // n_items x output_dim, row r is item r + 1.
  virtual Matrix item_vectors() const = 0;

  virtual Checkpoint to_checkpoint() const = 0;
};

}  // namespace crm
