#include "crm/numerics/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crm/error.hpp"

namespace crm {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

template <typename T>
BasicMatrix<T>::BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(rows_, cols_));
  }
}

template <typename T>
void BasicMatrix<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool BasicMatrix<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " + shape_str(b.rows(), b.cols()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  BasicMatrix<T> c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    T* crow = c.data() + i * m;
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_str(a.rows(), a.cols()) + "^T * " + shape_str(b.rows(), b.cols()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  BasicMatrix<T> c(k, m);
  for (std::size_t r = 0; r < n; ++r) {
    const T* arow = a.data() + r * k;
    const T* brow = b.data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const T av = arow[i];
      if (av == T{0}) continue;
      T* crow = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a.rows(), a.cols()) + " * " + shape_str(b.rows(), b.cols()) + "^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  BasicMatrix<T> c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* brow = b.data() + j * k;
      T s{0};
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
  return c;
}

template <typename T>
void add_inplace(BasicMatrix<T>& acc, const BasicMatrix<T>& x) {
  if (!acc.same_shape(x)) {
    throw ShapeError("add_inplace: " + shape_str(acc.rows(), acc.cols()) + " += " + shape_str(x.rows(), x.cols()));
  }
  auto dst = acc.values();
  auto src = x.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename T>
BasicMatrix<T> l2_normalize_rows(const BasicMatrix<T>& x, std::vector<double>* norms) {
  BasicMatrix<T> y(x.rows(), x.cols());
  if (norms) norms->assign(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double n = std::sqrt(dot<T>(x.row(r), x.row(r)));
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("l2_normalize_rows: row " + std::to_string(r) + " has norm " + std::to_string(n));
    if (norms) (*norms)[r] = n;
    auto src = x.row(r);
    auto dst = y.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) dst[c] = static_cast<T>(src[c] / n);
  }
  return y;
}

template <typename T>
BasicMatrix<T> l2_normalize_rows_backward(const BasicMatrix<T>& y, const std::vector<double>& norms,
                                          const BasicMatrix<T>& dy) {
  if (!y.same_shape(dy) || norms.size() != y.rows()) throw ShapeError("l2_normalize_rows_backward: shape mismatch");
  BasicMatrix<T> dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const double proj = dot<T>(y.row(r), dy.row(r));
    for (std::size_t c = 0; c < y.cols(); ++c) {
      dx(r, c) = static_cast<T>((dy(r, c) - y(r, c) * proj) / norms[r]);
    }
  }
  return dx;
}

#define CRM_INSTANTIATE_MATRIX(T)                                                                   \
  template class BasicMatrix<T>;                                                                    \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);                     \
  template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&);                  \
  template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&);                  \
  template void add_inplace(BasicMatrix<T>&, const BasicMatrix<T>&);                                \
  template double dot(std::span<const T>, std::span<const T>);                                      \
  template BasicMatrix<T> l2_normalize_rows(const BasicMatrix<T>&, std::vector<double>*);           \
  template BasicMatrix<T> l2_normalize_rows_backward(const BasicMatrix<T>&, const std::vector<double>&, \
                                                     const BasicMatrix<T>&);

CRM_INSTANTIATE_MATRIX(float)
CRM_INSTANTIATE_MATRIX(double)

#undef CRM_INSTANTIATE_MATRIX

}  // namespace crm
