#include "crm/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "crm/error.hpp"
#include "crm/random.hpp"
#include "crm/text.hpp"

namespace crm {

namespace {

struct Scored {
  double score;
  ItemId id;
};

// Higher score first, then smaller id.
bool ranks_before(const Scored& a, const Scored& b) { return a.score != b.score ? a.score > b.score : a.id < b.id; }

double sq_dist(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

// Nearest centroid (ties -> lower index) and its squared distance.
std::pair<std::uint32_t, double> nearest(const Matrix& centroids, std::span<const float> x) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = sq_dist(centroids.row(c), x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return {best, best_d};
}

RetrievalResult finish(std::vector<Scored>& cand, std::size_t k) {
  RetrievalResult r;
  r.k = k;
  const std::size_t keep = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), ranks_before);
  for (std::size_t i = 0; i < keep; ++i) {
    r.ids.push_back(cand[i].id);
    r.scores.push_back(static_cast<float>(cand[i].score));
  }
  return r;
}

}  // namespace

IndexKind parse_index_kind(const std::string& name) {
  if (name == "exact") return IndexKind::exact;
  if (name == "ivf") return IndexKind::ivf;
  throw ConfigError("unknown index kind '" + name + "' (expected exact or ivf)");
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t iterations, std::uint64_t seed) {
  const std::size_t n = points.rows(), d = points.cols();
  if (n == 0) throw DataError("k-means on an empty point set");
  if (k == 0 || k > n) throw ConfigError("k-means needs 1 <= k <= n points (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");

  Rng rng(splitmix64(seed));
  KMeansResult out;
  out.centroids = Matrix(k, d);
  // k-means++: first centre uniform, then proportional to squared distance.
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(), out.centroids.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], sq_dist(points.row(i), out.centroids.row(c)));
      total += closest[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
      continue;
    }
    double r = uniform01(rng) * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (r < closest[i]) {
        pick = i;
        break;
      }
      r -= closest[i];
    }
  }

  out.assignment.assign(n, 0);
  auto assign = [&] {
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [c, dist] = nearest(out.centroids, points.row(i));
      out.assignment[i] = c;
      obj += dist;
    }
    out.objective_trace.push_back(obj);
  };

  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  assign();
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = out.assignment[i];
      ++counts[c];
      const auto row = points.row(i);
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += row[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) out.centroids(c, j) = static_cast<float>(sums[c * d + j] / static_cast<double>(counts[c]));
    }
    assign();
  }
  return out;
}

ItemIndex ItemIndex::build(Matrix vectors, std::vector<ItemId> ids, const IndexConfig& config, std::uint64_t seed) {
  if (vectors.rows() == 0) throw DataError("cannot build an index over an empty item set");
  if (ids.size() != vectors.rows()) throw ShapeError("index: ids and vectors differ in count");
  if (!vectors.all_finite()) throw NumericError("index: item vectors contain non-finite values");
  ItemIndex index;
  index.config_ = config;
  index.vectors_ = std::move(vectors);
  index.ids_ = std::move(ids);
  if (config.kind == IndexKind::ivf) {
    if (config.n_clusters == 0 || config.n_clusters > index.size()) {
      throw ConfigError("ivf index needs 1 <= n_clusters <= n_items");
    }
    if (config.n_probe == 0) throw ConfigError("ivf index needs n_probe >= 1");
    KMeansResult km = kmeans(index.vectors_, config.n_clusters, config.kmeans_iterations, seed);
    index.centroids_ = std::move(km.centroids);
    index.kmeans_trace_ = std::move(km.objective_trace);
    index.postings_.assign(config.n_clusters, {});
    for (std::size_t i = 0; i < km.assignment.size(); ++i) index.postings_[km.assignment[i]].push_back(static_cast<std::uint32_t>(i));
  }
  return index;
}

ItemIndex build_index(const Matrix& item_vectors, const IndexConfig& config, std::uint64_t seed) {
  std::vector<ItemId> ids(item_vectors.rows());
  std::iota(ids.begin(), ids.end(), ItemId{1});
  return ItemIndex::build(item_vectors, std::move(ids), config, seed);
}

std::vector<std::size_t> ItemIndex::probe_order(std::span<const float> query) const {
  std::vector<std::pair<double, std::size_t>> dist(centroids_.rows());
  for (std::size_t c = 0; c < centroids_.rows(); ++c) dist[c] = {sq_dist(centroids_.row(c), query), c};
  std::sort(dist.begin(), dist.end());
  std::vector<std::size_t> order;
  for (const auto& [d, c] : dist) order.push_back(c);
  return order;
}

RetrievalResult ItemIndex::search(std::span<const float> query, std::size_t k) const {
  return search(query, k, config_.n_probe);
}

RetrievalResult ItemIndex::search(std::span<const float> query, std::size_t k, std::size_t n_probe) const {
  if (k == 0) throw ConfigError("search needs K >= 1");
  if (query.size() != dim()) {
    throw ShapeError("query dim " + std::to_string(query.size()) + " != index dim " + std::to_string(dim()));
  }
  std::vector<Scored> cand;
  if (config_.kind == IndexKind::exact) {
    cand.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) cand.push_back({dot<float>(vectors_.row(i), query), ids_[i]});
  } else {
    const auto order = probe_order(query);
    const std::size_t probes = std::min(std::max<std::size_t>(n_probe, 1), order.size());
    for (std::size_t p = 0; p < probes; ++p) {
      for (std::uint32_t i : postings_[order[p]]) cand.push_back({dot<float>(vectors_.row(i), query), ids_[i]});
    }
  }
  return finish(cand, k);
}

Checkpoint ItemIndex::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "index";
  ckpt.meta["variant"] = config_.kind == IndexKind::exact ? "exact" : "ivf";
  ckpt.meta["n_clusters"] = std::to_string(config_.n_clusters);
  ckpt.meta["n_probe"] = std::to_string(config_.n_probe);
  ckpt.meta["kmeans_iterations"] = std::to_string(config_.kmeans_iterations);
  ckpt.add("vectors", vectors_);
  Matrix ids(1, ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] >= (1u << 24)) throw DataError("item id too large for index serialization");
    ids(0, i) = static_cast<float>(ids_[i]);
  }
  ckpt.add("ids", std::move(ids));
  if (config_.kind == IndexKind::ivf) {
    ckpt.add("centroids", centroids_);
    for (std::size_t c = 0; c < postings_.size(); ++c) {
      Matrix list(1, postings_[c].size());
      for (std::size_t j = 0; j < postings_[c].size(); ++j) list(0, j) = static_cast<float>(postings_[c][j]);
      ckpt.add("posting/" + std::to_string(c), std::move(list));
    }
  }
  return ckpt;
}

ItemIndex ItemIndex::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta_value("kind") != "index") throw DataError("checkpoint is not an item index");
  auto count = [&](const std::string& k) {
    auto v = parse_u64(ckpt.meta_value(k));
    if (!v) throw DataError("index metadata '" + k + "' is not an unsigned integer");
    return static_cast<std::size_t>(*v);
  };
  ItemIndex index;
  index.config_.kind = parse_index_kind(ckpt.meta_value("variant"));
  index.config_.n_clusters = count("n_clusters");
  index.config_.n_probe = count("n_probe");
  index.config_.kmeans_iterations = count("kmeans_iterations");
  index.vectors_ = ckpt.tensor("vectors");
  for (float v : ckpt.tensor("ids").values()) index.ids_.push_back(static_cast<ItemId>(v));
  if (index.ids_.size() != index.vectors_.rows()) throw DataError("index checkpoint: ids and vectors differ in count");
  if (index.config_.kind == IndexKind::ivf) {
    index.centroids_ = ckpt.tensor("centroids");
    std::vector<bool> covered(index.size(), false);
    for (std::size_t c = 0; c < index.config_.n_clusters; ++c) {
      std::vector<std::uint32_t> list;
      for (float v : ckpt.tensor("posting/" + std::to_string(c)).values()) {
        const auto pos = static_cast<std::uint32_t>(v);
        if (pos >= index.size() || covered[pos]) throw DataError("index checkpoint: posting lists do not partition the items");
        covered[pos] = true;
        list.push_back(pos);
      }
      index.postings_.push_back(std::move(list));
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
      throw DataError("index checkpoint: posting lists do not cover every item");
    }
  }
  return index;
}

double recall_at_k(const RetrievalResult& approx, const RetrievalResult& exact) {
  if (approx.k != exact.k) throw ConfigError("recall_at_k: K differs (" + std::to_string(approx.k) + " vs " + std::to_string(exact.k) + ")");
  if (approx.k == 0) throw ConfigError("recall_at_k: K must be >= 1");
  std::unordered_set<ItemId> truth(exact.ids.begin(), exact.ids.end());
  std::size_t hit = 0;
  for (ItemId id : approx.ids) hit += truth.count(id);
  return static_cast<double>(hit) / static_cast<double>(approx.k);
}

}  // namespace crm
