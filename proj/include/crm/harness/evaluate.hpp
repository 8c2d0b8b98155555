#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crm/datasets.hpp"
#include "crm/features.hpp"
#include "crm/policy.hpp"
#include "crm/retrieval.hpp"
#include "crm/simulator.hpp"

namespace crm {

struct EvalOptions {
  std::vector<std::size_t> ks = {10, 50, 100};
  std::size_t watch_k = 50;  // top-K used for the oracle watch-time metric
  std::string config_hash;
};

struct EvalReport {
  std::string variant;
  std::string condition;  // policy label, or "none"
  std::string config_hash;
  std::size_t n_users = 0;
  std::vector<std::size_t> ks;
  std::vector<double> hit_rate;
  std::vector<double> hit_rate_se;
  std::size_t watch_k = 0;
  double mean_oracle_watch = 0.0;  // mean over users of mean oracle watch time of top watch_k
  double mean_oracle_watch_se = 0.0;
  double mean_condition = 0.0;  // average condition fed to the model (0 when unconditioned)
  std::vector<double> per_user_oracle_watch;  // aligned with the test examples
  double seconds = 0.0;                       // wall time; not part of report tables

  double hit_rate_at(std::size_t k) const;
};

// For every test example: pick the condition (when the model takes one), encode
// the user, search top-K, record whether the held-out item was retrieved and
// the simulator's expected watch time of the retrieved items.
EvalReport evaluate(const RetrievalModel& model, const ItemIndex& index, std::span<const TrainExample> tests,
                    const std::optional<ConditionSpec>& condition, const SimWorld& world,
                    const EvalOptions& options = {});

// Same evaluation with user vectors supplied directly (one row per test).
EvalReport evaluate_vectors(const Matrix& user_vectors, const ItemIndex& index, std::span<const TrainExample> tests,
                            const SimWorld& world, const EvalOptions& options = {});

// One explicit-condition evaluation per grid value, in grid order. The grid
// must be non-empty and strictly ascending.
std::vector<EvalReport> sweep_condition(const RetrievalModel& model, const ItemIndex& index,
                                        std::span<const TrainExample> tests, std::span<const double> grid,
                                        const SimWorld& world, const EvalOptions& options = {});

}  // namespace crm
