#pragma once

#include <random>
#include <string>
#include <vector>

#include "crm/numerics/layers.hpp"

namespace crm {

// Multi-head self-attention where token t attends to tokens 0..t only.
// Masked positions are never evaluated, so row t of the output is a function
// of input rows 0..t alone (bitwise, not just numerically).
template <typename T>
class CausalSelfAttention {
 public:
  struct Cache {
    typename Dense<T>::Cache q, k, v, o;
    BasicMatrix<T> queries, keys, values_;
    std::vector<BasicMatrix<T>> probs;  // per head, T x T lower-triangular
  };

  CausalSelfAttention() = default;
  CausalSelfAttention(std::size_t d_model, std::size_t n_heads);

  void init(std::mt19937_64& rng);
  std::size_t d_model() const { return query.in_dim(); }
  std::size_t n_heads() const { return heads_; }

  BasicMatrix<T> forward(const BasicMatrix<T>& x, Cache* cache = nullptr) const;
  BasicMatrix<T> backward(const BasicMatrix<T>& dy, const Cache& cache);
  void collect(ParamList<T>& out, const std::string& prefix);

  Dense<T> query, key, value, output;

 private:
  std::size_t heads_ = 1;
};

template <typename T>
BasicMatrix<T> causal_attention_forward(const BasicMatrix<T>& tokens, const CausalSelfAttention<T>& attention);

// Pre-layer-norm transformer block:
//   h = x + attn(ln1(x));  y = h + ffn(ln2(h))
template <typename T>
class TransformerBlock {
 public:
  struct Cache {
    typename LayerNorm<T>::Cache ln1, ln2;
    typename CausalSelfAttention<T>::Cache attn;
    typename Mlp<T>::Cache ffn;
  };

  TransformerBlock() = default;
  TransformerBlock(std::size_t d_model, std::size_t n_heads, std::size_t ffn_dim);

  void init(std::mt19937_64& rng);
  BasicMatrix<T> forward(const BasicMatrix<T>& x, Cache* cache = nullptr) const;
  BasicMatrix<T> backward(const BasicMatrix<T>& dy, const Cache& cache);
  void collect(ParamList<T>& out, const std::string& prefix);

  LayerNorm<T> ln1;
  CausalSelfAttention<T> attn;
  LayerNorm<T> ln2;
  Mlp<T> ffn;
};

// Stack of blocks followed by a final layer norm.
template <typename T>
class CausalTransformer {
 public:
  struct Cache {
    std::vector<typename TransformerBlock<T>::Cache> blocks;
    typename LayerNorm<T>::Cache final_ln;
  };

  CausalTransformer() = default;
  CausalTransformer(std::size_t d_model, std::size_t n_heads, std::size_t n_layers, std::size_t ffn_dim);

  void init(std::mt19937_64& rng);
  BasicMatrix<T> forward(const BasicMatrix<T>& x, Cache* cache = nullptr) const;
  BasicMatrix<T> backward(const BasicMatrix<T>& dy, const Cache& cache);
  void collect(ParamList<T>& out, const std::string& prefix);

  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> final_ln;
};

}  // namespace crm
