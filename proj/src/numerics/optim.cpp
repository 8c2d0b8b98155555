#include "crm/numerics/optim.hpp"

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "crm/error.hpp"

namespace crm {

template <typename T>
void sgd_step(const ParamList<T>& params, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("sgd_step: learning rate must be finite and >= 0");
  for (const auto& p : params) {
    if (!p.param->grad.all_finite()) throw NumericError("sgd_step: non-finite gradient in parameter '" + p.name + "'");
  }
  for (const auto& p : params) {
    auto v = p.param->value.values();
    auto g = p.param->grad.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(v[i] - lr * g[i]);
    p.param->zero_grad();
  }
}

template <typename T>
GradCheckReport grad_check(const ParamList<T>& params, const std::function<double()>& loss_fn,
                           const GradCheckOptions& options) {
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : params) {
    offsets.push_back(total);
    total += p.param->value.size();
  }
  std::vector<std::size_t> coords;
  if (total <= options.samples) {
    coords.resize(total);
    std::iota(coords.begin(), coords.end(), 0);
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t i = 0; i < options.samples; ++i) coords.push_back(pick(rng));
  }

  auto eval = [&]() {
    const double l = loss_fn();
    if (!std::isfinite(l)) throw NumericError("grad_check: loss is not finite");
    return l;
  };

  GradCheckReport report;
  for (std::size_t flat : coords) {
    const std::size_t pi = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    const std::size_t idx = flat - offsets[pi];
    auto& value = params[pi].param->value.values()[idx];
    const double analytic = params[pi].param->grad.values()[idx];

    const T original = value;
    const double base = eval();
    constexpr bool is_float = std::is_same_v<T, float>;
    const double floor_step = is_float ? std::max(options.min_step, 1e-4) : options.min_step;
    const double kink_tol = options.kink_tolerance.value_or(is_float ? 1e-2 : 1e-6);
    double numeric = 0.0;
    for (double h = options.step;; h /= 10.0) {
      const T plus = static_cast<T>(original + h);
      const T minus = static_cast<T>(original - h);
      value = plus;
      const double lp = eval();
      value = minus;
      const double lm = eval();
      value = original;
      const double hp = static_cast<double>(plus) - static_cast<double>(original);
      const double hm = static_cast<double>(original) - static_cast<double>(minus);
      numeric = (lp - lm) / (hp + hm);
      const double slope_gap = std::abs((lp - base) / hp - (base - lm) / hm);
      if (slope_gap <= kink_tol * std::max(1.0, std::abs(numeric)) || h / 10.0 < floor_step) break;
      if (h == options.step) ++report.refined;
    }

    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    ++report.checked;
    if (err > report.max_rel_error || report.checked == 1) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      if (err >= report.max_rel_error) {
        report.worst_param = params[pi].name;
        report.worst_index = idx;
      }
    }
  }
  return report;
}

template void sgd_step(const ParamList<float>&, double);
template void sgd_step(const ParamList<double>&, double);
template GradCheckReport grad_check(const ParamList<float>&, const std::function<double()>&, const GradCheckOptions&);
template GradCheckReport grad_check(const ParamList<double>&, const std::function<double()>&, const GradCheckOptions&);

}  // namespace crm

namespace crm {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

Optimizer::Optimizer(const OptimizerConfig& config, ParamList<float> params)
    : config_(config), params_(std::move(params)) {
  if (!(config_.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (config_.kind == OptimizerKind::adam) {
    for (const auto& p : params_) {
      m_.emplace_back(p.param->value.rows(), p.param->value.cols());
      v_.emplace_back(p.param->value.rows(), p.param->value.cols());
    }
  }
}

void Optimizer::step() {
  if (config_.kind == OptimizerKind::sgd) {
    sgd_step(params_, config_.lr);
    return;
  }
  for (const auto& p : params_) {
    if (!p.param->grad.all_finite()) throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto val = params_[k].param->value.values();
    auto g = params_[k].param->grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(config_.beta1 * m[i] + (1.0 - config_.beta1) * gi);
      v[i] = static_cast<float>(config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi);
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      val[i] = static_cast<float>(val[i] - config_.lr * mh / (std::sqrt(vh) + config_.eps));
    }
    params_[k].param->zero_grad();
  }
}

}  // namespace crm
