#include "crm/numerics/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crm/error.hpp"

namespace crm {

double inbatch_softmax_from_logits(const BasicMatrix<double>& logits, BasicMatrix<double>* probs,
                                   BasicMatrix<double>* grad_logits) {
  const std::size_t b = logits.rows();
  if (b < 2) throw ShapeError("in-batch softmax needs at least 2 rows, got " + std::to_string(b));
  if (logits.cols() != b) throw ShapeError("in-batch softmax logits must be square");
  if (probs) *probs = BasicMatrix<double>(b, b);
  if (grad_logits) *grad_logits = BasicMatrix<double>(b, b);

  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double z : row) denom += std::exp(z - mx);
    const double log_denom = std::log(denom);
    total += -(row[i] - mx - log_denom);
    if (probs || grad_logits) {
      for (std::size_t j = 0; j < b; ++j) {
        const double p = std::exp(row[j] - mx - log_denom);
        if (probs) (*probs)(i, j) = p;
        if (grad_logits) (*grad_logits)(i, j) = (p - (i == j ? 1.0 : 0.0)) / static_cast<double>(b);
      }
    }
  }
  const double loss = total / static_cast<double>(b);
  if (!std::isfinite(loss)) throw NumericError("in-batch softmax loss is not finite");
  return loss;
}

template <typename T>
InBatchSoftmaxResult<T> inbatch_softmax_loss(const BasicMatrix<T>& user_reps, const BasicMatrix<T>& item_reps,
                                             double temperature) {
  if (user_reps.rows() < 2) {
    throw ShapeError("in-batch softmax needs at least 2 rows, got " + std::to_string(user_reps.rows()));
  }
  if (!user_reps.same_shape(item_reps)) {
    throw ShapeError("in-batch softmax: user reps " + std::to_string(user_reps.rows()) + "x" +
                     std::to_string(user_reps.cols()) + " vs item reps " + std::to_string(item_reps.rows()) + "x" +
                     std::to_string(item_reps.cols()));
  }
  if (!(temperature > 0.0)) throw ConfigError("in-batch softmax temperature must be > 0");

  const std::size_t b = user_reps.rows();
  const std::size_t d = user_reps.cols();
  BasicMatrix<double> logits(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) logits(i, j) = dot<T>(user_reps.row(i), item_reps.row(j)) / temperature;
  }

  InBatchSoftmaxResult<T> out;
  BasicMatrix<double> glogits;
  out.loss = inbatch_softmax_from_logits(logits, &out.probs, &glogits);

  out.grad_user = BasicMatrix<T>(b, d);
  out.grad_item = BasicMatrix<T>(b, d);
  std::vector<double> gu(d), gv(d);
  for (std::size_t i = 0; i < b; ++i) {
    std::fill(gu.begin(), gu.end(), 0.0);
    std::fill(gv.begin(), gv.end(), 0.0);
    for (std::size_t j = 0; j < b; ++j) {
      const double gij = glogits(i, j) / temperature;  // d/dU_i via V_j
      const double gji = glogits(j, i) / temperature;  // d/dV_i via U_j
      for (std::size_t c = 0; c < d; ++c) {
        gu[c] += gij * item_reps(j, c);
        gv[c] += gji * user_reps(j, c);
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      out.grad_user(i, c) = static_cast<T>(gu[c]);
      out.grad_item(i, c) = static_cast<T>(gv[c]);
    }
  }
  return out;
}

template InBatchSoftmaxResult<float> inbatch_softmax_loss(const BasicMatrix<float>&, const BasicMatrix<float>&, double);
template InBatchSoftmaxResult<double> inbatch_softmax_loss(const BasicMatrix<double>&, const BasicMatrix<double>&,
                                                           double);

}  // namespace crm
