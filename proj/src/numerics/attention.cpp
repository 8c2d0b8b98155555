#include "crm/numerics/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crm/error.hpp"

namespace crm {

template <typename T>
CausalSelfAttention<T>::CausalSelfAttention(std::size_t d_model, std::size_t n_heads)
    : query(d_model, d_model, Activation::identity),
      key(d_model, d_model, Activation::identity),
      value(d_model, d_model, Activation::identity),
      output(d_model, d_model, Activation::identity),
      heads_(n_heads) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("attention: d_model " + std::to_string(d_model) + " not divisible by head count " +
                      std::to_string(n_heads));
  }
}

template <typename T>
void CausalSelfAttention<T>::init(std::mt19937_64& rng) {
  query.init(rng);
  key.init(rng);
  value.init(rng);
  output.init(rng);
}

template <typename T>
BasicMatrix<T> CausalSelfAttention<T>::forward(const BasicMatrix<T>& x, Cache* cache) const {
  const std::size_t n = x.rows();
  const std::size_t d = d_model();
  if (n == 0) throw ShapeError("attention: empty token sequence");
  if (x.cols() != d) throw ShapeError("attention: token dim " + std::to_string(x.cols()) + " != " + std::to_string(d));
  const std::size_t hd = d / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  BasicMatrix<T> q = query.forward(x, cache ? &cache->q : nullptr);
  BasicMatrix<T> k = key.forward(x, cache ? &cache->k : nullptr);
  BasicMatrix<T> v = value.forward(x, cache ? &cache->v : nullptr);
  BasicMatrix<T> mixed(n, d);
  if (cache) cache->probs.assign(heads_, BasicMatrix<T>(n, n));

  std::vector<double> logits(n);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += static_cast<double>(q(i, off + c)) * k(j, off + c);
        logits[j] = s * scale;
        mx = std::max(mx, logits[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        logits[j] = std::exp(logits[j] - mx);
        denom += logits[j];
      }
      for (std::size_t j = 0; j <= i; ++j) {
        const double p = logits[j] / denom;
        if (cache) cache->probs[h](i, j) = static_cast<T>(p);
        for (std::size_t c = 0; c < hd; ++c) mixed(i, off + c) += static_cast<T>(p * v(j, off + c));
      }
    }
  }
  BasicMatrix<T> y = output.forward(mixed, cache ? &cache->o : nullptr);
  if (cache) {
    cache->queries = std::move(q);
    cache->keys = std::move(k);
    cache->values_ = std::move(v);
  }
  return y;
}

template <typename T>
BasicMatrix<T> CausalSelfAttention<T>::backward(const BasicMatrix<T>& dy, const Cache& cache) {
  const std::size_t n = dy.rows();
  const std::size_t d = d_model();
  const std::size_t hd = d / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  BasicMatrix<T> dmixed = output.backward(dy, cache.o);
  BasicMatrix<T> dq(n, d), dk(n, d), dv(n, d);
  const auto& q = cache.queries;
  const auto& k = cache.keys;
  const auto& v = cache.values_;

  std::vector<double> dp(n);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * hd;
    const auto& p = cache.probs[h];
    for (std::size_t i = 0; i < n; ++i) {
      double row_dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += static_cast<double>(dmixed(i, off + c)) * v(j, off + c);
        dp[j] = s;
        row_dot += s * p(i, j);
        for (std::size_t c = 0; c < hd; ++c) dv(j, off + c) += static_cast<T>(p(i, j) * dmixed(i, off + c));
      }
      for (std::size_t j = 0; j <= i; ++j) {
        const double ds = p(i, j) * (dp[j] - row_dot) * scale;
        for (std::size_t c = 0; c < hd; ++c) {
          dq(i, off + c) += static_cast<T>(ds * k(j, off + c));
          dk(j, off + c) += static_cast<T>(ds * q(i, off + c));
        }
      }
    }
  }
  BasicMatrix<T> dx = query.backward(dq, cache.q);
  add_inplace(dx, key.backward(dk, cache.k));
  add_inplace(dx, value.backward(dv, cache.v));
  return dx;
}

template <typename T>
void CausalSelfAttention<T>::collect(ParamList<T>& out, const std::string& prefix) {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
  output.collect(out, prefix + ".output");
}

template <typename T>
BasicMatrix<T> causal_attention_forward(const BasicMatrix<T>& tokens, const CausalSelfAttention<T>& attention) {
  return attention.forward(tokens);
}

template <typename T>
TransformerBlock<T>::TransformerBlock(std::size_t d_model, std::size_t n_heads, std::size_t ffn_dim)
    : ln1(d_model),
      attn(d_model, n_heads),
      ln2(d_model),
      ffn({d_model, ffn_dim, d_model}, Activation::relu, Activation::identity) {}

template <typename T>
void TransformerBlock<T>::init(std::mt19937_64& rng) {
  attn.init(rng);
  ffn.init(rng);
}

template <typename T>
BasicMatrix<T> TransformerBlock<T>::forward(const BasicMatrix<T>& x, Cache* cache) const {
  BasicMatrix<T> h = attn.forward(ln1.forward(x, cache ? &cache->ln1 : nullptr), cache ? &cache->attn : nullptr);
  add_inplace(h, x);
  BasicMatrix<T> y = ffn.forward(ln2.forward(h, cache ? &cache->ln2 : nullptr), cache ? &cache->ffn : nullptr);
  add_inplace(y, h);
  return y;
}

template <typename T>
BasicMatrix<T> TransformerBlock<T>::backward(const BasicMatrix<T>& dy, const Cache& cache) {
  BasicMatrix<T> dh = ln2.backward(ffn.backward(dy, cache.ffn), cache.ln2);
  add_inplace(dh, dy);
  BasicMatrix<T> dx = ln1.backward(attn.backward(dh, cache.attn), cache.ln1);
  add_inplace(dx, dh);
  return dx;
}

template <typename T>
void TransformerBlock<T>::collect(ParamList<T>& out, const std::string& prefix) {
  ln1.collect(out, prefix + ".ln1");
  attn.collect(out, prefix + ".attn");
  ln2.collect(out, prefix + ".ln2");
  ffn.collect(out, prefix + ".ffn");
}

template <typename T>
CausalTransformer<T>::CausalTransformer(std::size_t d_model, std::size_t n_heads, std::size_t n_layers,
                                        std::size_t ffn_dim)
    : final_ln(d_model) {
  for (std::size_t i = 0; i < n_layers; ++i) blocks.emplace_back(d_model, n_heads, ffn_dim);
}

template <typename T>
void CausalTransformer<T>::init(std::mt19937_64& rng) {
  for (auto& b : blocks) b.init(rng);
}

template <typename T>
BasicMatrix<T> CausalTransformer<T>::forward(const BasicMatrix<T>& x, Cache* cache) const {
  if (cache) cache->blocks.assign(blocks.size(), {});
  BasicMatrix<T> h = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) h = blocks[i].forward(h, cache ? &cache->blocks[i] : nullptr);
  return final_ln.forward(h, cache ? &cache->final_ln : nullptr);
}

template <typename T>
BasicMatrix<T> CausalTransformer<T>::backward(const BasicMatrix<T>& dy, const Cache& cache) {
  BasicMatrix<T> g = final_ln.backward(dy, cache.final_ln);
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g, cache.blocks[i]);
  return g;
}

template <typename T>
void CausalTransformer<T>::collect(ParamList<T>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".block" + std::to_string(i));
  final_ln.collect(out, prefix + ".final_ln");
}

template class CausalSelfAttention<float>;
template class CausalSelfAttention<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;
template class CausalTransformer<float>;
template class CausalTransformer<double>;
template BasicMatrix<float> causal_attention_forward(const BasicMatrix<float>&, const CausalSelfAttention<float>&);
template BasicMatrix<double> causal_attention_forward(const BasicMatrix<double>&, const CausalSelfAttention<double>&);

}  // namespace crm
