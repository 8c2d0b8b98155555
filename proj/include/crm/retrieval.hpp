#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crm/numerics/checkpoint.hpp"
#include "crm/simulator.hpp"

namespace crm {

// Top-K list: scores are non-increasing, ties ordered by smaller item id.
struct RetrievalResult {
  std::vector<ItemId> ids;
  std::vector<float> scores;
  std::size_t k = 0;  // requested K
};

enum class IndexKind { exact, ivf };

struct IndexConfig {
  IndexKind kind = IndexKind::exact;
  std::size_t n_clusters = 64;
  std::size_t n_probe = 8;
  std::size_t kmeans_iterations = 20;
};

// Cached item vectors plus, for IVF, a k-means coarse quantizer whose posting
// lists partition the items. Immutable after build; search is const and safe
// to call from many threads.
class ItemIndex {
 public:
  static ItemIndex build(Matrix vectors, std::vector<ItemId> ids, const IndexConfig& config, std::uint64_t seed);

  IndexKind kind() const { return config_.kind; }
  const IndexConfig& config() const { return config_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return vectors_.cols(); }
  const Matrix& vectors() const { return vectors_; }
  const std::vector<ItemId>& ids() const { return ids_; }
  const Matrix& centroids() const { return centroids_; }
  // Row positions (not item ids) per cluster.
  const std::vector<std::vector<std::uint32_t>>& postings() const { return postings_; }
  // k-means objective (sum of squared distances) after every assignment step.
  const std::vector<double>& kmeans_trace() const { return kmeans_trace_; }

  // Dot-product top-K. K larger than the index returns every item ranked.
  RetrievalResult search(std::span<const float> query, std::size_t k) const;
  // IVF search with an explicit probe count (ignored for exact indexes).
  RetrievalResult search(std::span<const float> query, std::size_t k, std::size_t n_probe) const;

  Checkpoint to_checkpoint() const;
  static ItemIndex from_checkpoint(const Checkpoint& ckpt);

 private:
  std::vector<std::size_t> probe_order(std::span<const float> query) const;

  IndexConfig config_;
  Matrix vectors_;
  std::vector<ItemId> ids_;
  Matrix centroids_;
  std::vector<std::vector<std::uint32_t>> postings_;
  std::vector<double> kmeans_trace_;
};

// Index over a model's item_vectors() matrix (row r is item r + 1).
ItemIndex build_index(const Matrix& item_vectors, const IndexConfig& config, std::uint64_t seed);

// Result of k-means on the rows of `points`.
struct KMeansResult {
  Matrix centroids;
  std::vector<std::uint32_t> assignment;
  std::vector<double> objective_trace;
};

// k-means++ seeding followed by `iterations` Lloyd steps; empty clusters keep
// their previous centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t iterations, std::uint64_t seed);

// |approx ∩ exact| / K; both results must have the same K.
double recall_at_k(const RetrievalResult& approx, const RetrievalResult& exact);

IndexKind parse_index_kind(const std::string& name);

}  // namespace crm
