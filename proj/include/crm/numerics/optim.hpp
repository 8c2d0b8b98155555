#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crm/numerics/param.hpp"

namespace crm {

// value -= lr * grad for every parameter, then zero the grads. A non-finite
// gradient raises NumericError naming the parameter; nothing is updated in
// that case.
template <typename T>
void sgd_step(const ParamList<T>& params, double lr);

struct GradCheckOptions {
  double step = 1e-3;
  std::size_t samples = 100;  // coordinates drawn across all params; all of them if fewer exist
  std::uint64_t seed = 0;
  // When the one-sided slopes disagree by more than kink_tolerance (relative),
  // the step straddles a non-smooth point such as a relu kink; the coordinate
  // is re-measured with a step ten times smaller, down to min_step. Unset
  // means 1e-2 for float and 1e-6 for double. The leftover error at a kink is
  // about half the slope gap.
  std::optional<double> kink_tolerance;
  double min_step = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t refined = 0;  // coordinates re-measured with a smaller step
};

// Central-difference gradient check. The params' `grad` fields must already
// hold the analytic gradient at the current values; `loss_fn` re-evaluates
// the loss (and must not touch the grads it is checked against). Error per
// coordinate is |analytic - numeric| / max(1, |numeric|). For float params the
// refinement floor is raised to 1e-4 so rounding noise stays below tolerance.
template <typename T>
GradCheckReport grad_check(const ParamList<T>& params, const std::function<double()>& loss_fn,
                           const GradCheckOptions& options = {});

}  // namespace crm

namespace crm {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimizerKind parse_optimizer_kind(std::string_view name);

// Owns per-parameter state for stateful optimizers. step() applies one update
// and zeroes the gradients.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, ParamList<float> params);

  void step();
  const ParamList<float>& params() const { return params_; }

 private:
  OptimizerConfig config_;
  ParamList<float> params_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace crm
