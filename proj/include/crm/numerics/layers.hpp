#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crm/numerics/matrix.hpp"
#include "crm/numerics/param.hpp"

namespace crm {

enum class Activation { identity, relu };

std::string_view to_string(Activation a);

// y = act(x W + b), W is in x out.
template <typename T>
class Dense {
 public:
  struct Cache {
    BasicMatrix<T> input;
    BasicMatrix<T> output;  // post-activation
  };

  Dense() = default;
  Dense(std::size_t in, std::size_t out, Activation act);

  // Glorot-uniform weights, zero bias.
  void init(std::mt19937_64& rng);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  BasicMatrix<T> forward(const BasicMatrix<T>& x, Cache* cache = nullptr) const;
  // Accumulates into weight.grad / bias.grad and returns dL/dx.
  BasicMatrix<T> backward(const BasicMatrix<T>& dy, const Cache& cache);

  void collect(ParamList<T>& out, const std::string& prefix);

  Param<T> weight;
  Param<T> bias;
  Activation activation = Activation::identity;
};

template <typename T>
class Mlp {
 public:
  using Cache = std::vector<typename Dense<T>::Cache>;

  Mlp() = default;
  // dims = {in, h1, ..., out}; hidden layers use `hidden`, the last layer `last`.
  Mlp(const std::vector<std::size_t>& dims, Activation hidden, Activation last = Activation::identity);

  void init(std::mt19937_64& rng);
  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  BasicMatrix<T> forward(const BasicMatrix<T>& x, Cache* cache = nullptr) const;
  BasicMatrix<T> backward(const BasicMatrix<T>& dy, const Cache& cache);
  void collect(ParamList<T>& out, const std::string& prefix);

  std::vector<Dense<T>> layers;
};

// Forward through a layer stack, checking that dimensions chain. A mismatch
// raises ShapeError naming the offending layer index.
template <typename T>
BasicMatrix<T> mlp_forward(const BasicMatrix<T>& input, std::span<const Dense<T>> layers);

template <typename T>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t vocab_size, std::size_t dim);

  void init(std::mt19937_64& rng, double stddev);

  std::size_t vocab_size() const { return table.value.rows(); }
  std::size_t dim() const { return table.value.cols(); }

  std::span<const T> lookup(std::size_t index) const;
  // grad[index] += scale * g
  void accumulate(std::size_t index, std::span<const T> g, T scale = T{1});

  void collect(ParamList<T>& out, const std::string& name);

  Param<T> table;
};

template <typename T>
class LayerNorm {
 public:
  struct Cache {
    BasicMatrix<T> normalized;
    std::vector<double> inv_std;
  };

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  BasicMatrix<T> forward(const BasicMatrix<T>& x, Cache* cache = nullptr) const;
  BasicMatrix<T> backward(const BasicMatrix<T>& dy, const Cache& cache);
  void collect(ParamList<T>& out, const std::string& prefix);

  Param<T> gamma;
  Param<T> beta;
  double eps = 1e-5;
};

}  // namespace crm
