#pragma once

#include <vector>

#include "crm/numerics/matrix.hpp"

namespace crm {

template <typename T>
struct InBatchSoftmaxResult {
  double loss = 0.0;
  BasicMatrix<T> grad_user;  // dL/dU, B x d
  BasicMatrix<T> grad_item;  // dL/dV, B x d
  BasicMatrix<double> probs;  // row-wise softmax over the batch's items
};

// Row i of U is paired with row i of V; every other row of V acts as a
// negative for it. Logits are (U V^T) / temperature and
//   loss = -(1/B) sum_i log softmax_j(logits_i)[i].
// Requires B >= 2.
template <typename T>
InBatchSoftmaxResult<T> inbatch_softmax_loss(const BasicMatrix<T>& user_reps, const BasicMatrix<T>& item_reps,
                                             double temperature = 1.0);

// Same loss starting from a precomputed B x B logit matrix; also returns
// dL/dlogits in `grad_logits` when non-null.
double inbatch_softmax_from_logits(const BasicMatrix<double>& logits, BasicMatrix<double>* probs = nullptr,
                                   BasicMatrix<double>* grad_logits = nullptr);

}  // namespace crm
