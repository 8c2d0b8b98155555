#pragma once

#include <string>
#include <vector>

#include "crm/numerics/matrix.hpp"

namespace crm {

// A trainable tensor and its accumulated gradient (same shape).
template <typename T>
struct Param {
  BasicMatrix<T> value;
  BasicMatrix<T> grad;

  Param() = default;
  Param(std::size_t rows, std::size_t cols) : value(rows, cols), grad(rows, cols) {}
  explicit Param(BasicMatrix<T> v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.set_zero(); }
};

template <typename T>
struct NamedParam {
  std::string name;
  Param<T>* param;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (const auto& p : params) p.param->zero_grad();
}

}  // namespace crm
