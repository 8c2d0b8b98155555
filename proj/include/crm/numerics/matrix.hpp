#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace crm {

// Dense row-major matrix. Storage type T is float for models and double for
// the reference gradient checks.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v);
  void set_zero() { fill(T{0}); }
  bool same_shape(const BasicMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;

// C = A * B
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
// C = A^T * B
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
// C = A * B^T
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

// acc += x
template <typename T>
void add_inplace(BasicMatrix<T>& acc, const BasicMatrix<T>& x);

template <typename T>
double dot(std::span<const T> a, std::span<const T> b);

// Row-wise L2 normalization and its backward pass. `norms` receives the
// pre-normalization row norms for use in backward.
template <typename T>
BasicMatrix<T> l2_normalize_rows(const BasicMatrix<T>& x, std::vector<double>* norms = nullptr);
template <typename T>
BasicMatrix<T> l2_normalize_rows_backward(const BasicMatrix<T>& y, const std::vector<double>& norms,
                                          const BasicMatrix<T>& dy);

}  // namespace crm
