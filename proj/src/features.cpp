#include "crm/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crm/error.hpp"

namespace crm {

std::size_t log_bucket(double seconds, std::size_t n_buckets, double tau) {
  if (n_buckets == 0) throw ConfigError("bucket count must be > 0");
  if (!std::isfinite(seconds)) throw NumericError("cannot bucketize a non-finite watch time");
  if (seconds <= 0.0) return 0;
  const double b = std::floor(std::log2(1.0 + seconds / tau));
  return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(n_buckets - 1)));
}

ConditionFeature make_condition(double seconds, std::size_t n_buckets, double tau) {
  if (seconds < 0.0) throw DataError("condition watch time must be >= 0");
  return {seconds, log_bucket(seconds, n_buckets, tau)};
}

Matrix item_tower_forward(const EmbeddingTable<float>& table, const Mlp<float>& mlp, std::span<const ItemId> ids,
                          ItemTowerCache* cache) {
  Matrix emb(ids.size(), table.dim());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] == kPadItem) throw DataError("item tower: pad id has no item representation");
    const auto row = table.lookup(ids[r]);
    std::copy(row.begin(), row.end(), emb.row(r).begin());
  }
  Matrix raw = mlp.forward(emb, cache ? &cache->mlp : nullptr);
  std::vector<double> norms;
  Matrix out = l2_normalize_rows(raw, &norms);
  if (cache) {
    cache->ids.assign(ids.begin(), ids.end());
    cache->out = out;
    cache->norms = std::move(norms);
  }
  return out;
}

void item_tower_backward(EmbeddingTable<float>& table, Mlp<float>& mlp, const Matrix& grad_out,
                         const ItemTowerCache& cache) {
  const Matrix graw = l2_normalize_rows_backward(cache.out, cache.norms, grad_out);
  const Matrix gemb = mlp.backward(graw, cache.mlp);
  for (std::size_t r = 0; r < cache.ids.size(); ++r) table.accumulate(cache.ids[r], gemb.row(r));
}

}  // namespace crm
