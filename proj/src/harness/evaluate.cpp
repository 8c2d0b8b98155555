#include "crm/harness/evaluate.hpp"

#include <algorithm>
#include <chrono>

#include "crm/error.hpp"
#include "crm/harness/stats.hpp"

namespace crm {

double EvalReport::hit_rate_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return hit_rate[i];
  }
  throw ConfigError("report has no hit rate at K=" + std::to_string(k));
}

namespace {

struct Accumulator {
  const ItemIndex& index;
  const SimWorld& world;
  const EvalOptions& options;
  std::size_t search_k;
  std::vector<std::vector<double>> hits;
  std::vector<double> oracle;

  Accumulator(const ItemIndex& idx, const SimWorld& w, const EvalOptions& opt, std::size_t n)
      : index(idx), world(w), options(opt), hits(opt.ks.size(), std::vector<double>(n)), oracle(n) {
    if (options.ks.empty()) throw ConfigError("evaluation needs at least one K");
    search_k = std::max(*std::max_element(options.ks.begin(), options.ks.end()), options.watch_k);
    if (options.watch_k == 0) throw ConfigError("watch_k must be >= 1");
  }

  void record(std::size_t slot, const TrainExample& test, std::span<const float> user_vec) {
    const RetrievalResult r = index.search(user_vec, search_k);
    for (std::size_t ki = 0; ki < options.ks.size(); ++ki) {
      const std::size_t k = std::min(options.ks[ki], r.ids.size());
      hits[ki][slot] = std::find(r.ids.begin(), r.ids.begin() + static_cast<std::ptrdiff_t>(k), test.target_item) !=
                               r.ids.begin() + static_cast<std::ptrdiff_t>(k)
                           ? 1.0
                           : 0.0;
    }
    const std::size_t wk = std::min(options.watch_k, r.ids.size());
    double s = 0.0;
    for (std::size_t j = 0; j < wk; ++j) s += expected_watch_time(world, test.user_id, r.ids[j]);
    oracle[slot] = wk ? s / static_cast<double>(wk) : 0.0;
  }

  EvalReport finish() const {
    EvalReport rep;
    rep.config_hash = options.config_hash;
    rep.n_users = oracle.size();
    rep.ks = options.ks;
    for (const auto& h : hits) {
      rep.hit_rate.push_back(mean(h));
      rep.hit_rate_se.push_back(standard_error(h));
    }
    rep.watch_k = options.watch_k;
    rep.mean_oracle_watch = mean(oracle);
    rep.mean_oracle_watch_se = standard_error(oracle);
    rep.per_user_oracle_watch = oracle;
    return rep;
  }
};

}  // namespace

EvalReport evaluate(const RetrievalModel& model, const ItemIndex& index, std::span<const TrainExample> tests,
                    const std::optional<ConditionSpec>& condition, const SimWorld& world, const EvalOptions& options) {
  if (model.output_dim() != index.dim()) {
    throw ShapeError("model output dim " + std::to_string(model.output_dim()) + " != index dim " +
                     std::to_string(index.dim()));
  }
  if (condition) condition->validate();
  const auto start = std::chrono::steady_clock::now();
  Accumulator acc(index, world, options, tests.size());
  const bool use_condition = condition.has_value() && model.conditioned();
  std::vector<double> chosen;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const TrainExample& t = tests[i];
    UserQuery q{t.user_id, t.items, t.watch, std::nullopt};
    if (use_condition) {
      Rng rng = derived_rng(condition->rng_seed, t.user_id);
      q.condition = select_condition(*condition, t.watch, rng);
      chosen.push_back(*q.condition);
    }
    acc.record(i, t, model.encode_user(q));
  }
  EvalReport rep = acc.finish();
  rep.variant = std::string(model.variant());
  rep.condition = use_condition ? condition->label() : "none";
  rep.mean_condition = mean(chosen);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

EvalReport evaluate_vectors(const Matrix& user_vectors, const ItemIndex& index, std::span<const TrainExample> tests,
                            const SimWorld& world, const EvalOptions& options) {
  if (user_vectors.rows() != tests.size()) throw ShapeError("one user vector per test example required");
  if (user_vectors.cols() != index.dim()) throw ShapeError("user vector dim != index dim");
  Accumulator acc(index, world, options, tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) acc.record(i, tests[i], user_vectors.row(i));
  EvalReport rep = acc.finish();
  rep.variant = "vectors";
  rep.condition = "none";
  return rep;
}

std::vector<EvalReport> sweep_condition(const RetrievalModel& model, const ItemIndex& index,
                                        std::span<const TrainExample> tests, std::span<const double> grid,
                                        const SimWorld& world, const EvalOptions& options) {
  if (grid.empty()) throw ConfigError("condition sweep needs a non-empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("condition sweep grid must be strictly ascending");
  }
  std::vector<EvalReport> rows;
  for (double v : grid) rows.push_back(evaluate(model, index, tests, ConditionSpec::explicit_value(v), world, options));
  return rows;
}

}  // namespace crm
