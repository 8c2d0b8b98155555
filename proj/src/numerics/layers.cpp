#include "crm/numerics/layers.hpp"

#include <cmath>

#include "crm/error.hpp"

namespace crm {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
  }
  return "unknown";
}

template <typename T>
Dense<T>::Dense(std::size_t in, std::size_t out, Activation act)
    : weight(in, out), bias(1, out), activation(act) {}

template <typename T>
void Dense<T>::init(std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& w : weight.value.values()) w = static_cast<T>(dist(rng));
  bias.value.set_zero();
}

template <typename T>
BasicMatrix<T> Dense<T>::forward(const BasicMatrix<T>& x, Cache* cache) const {
  BasicMatrix<T> y = matmul(x, weight.value);
  const auto b = bias.value.row(0);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) {
      T v = yr[c] + b[c];
      if (activation == Activation::relu && v < T{0}) v = T{0};
      yr[c] = v;
    }
  }
  if (cache) {
    cache->input = x;
    cache->output = y;
  }
  return y;
}

template <typename T>
BasicMatrix<T> Dense<T>::backward(const BasicMatrix<T>& dy, const Cache& cache) {
  BasicMatrix<T> dz = dy;
  if (activation == Activation::relu) {
    auto z = dz.values();
    auto out = cache.output.values();
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (out[i] <= T{0}) z[i] = T{0};
    }
  }
  add_inplace(weight.grad, matmul_tn(cache.input, dz));
  auto gb = bias.grad.row(0);
  for (std::size_t r = 0; r < dz.rows(); ++r) {
    auto zr = dz.row(r);
    for (std::size_t c = 0; c < zr.size(); ++c) gb[c] += zr[c];
  }
  return matmul_nt(dz, weight.value);
}

template <typename T>
void Dense<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

template <typename T>
Mlp<T>::Mlp(const std::vector<std::size_t>& dims, Activation hidden, Activation last) {
  if (dims.size() < 2) throw ConfigError("Mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers.emplace_back(dims[i], dims[i + 1], i + 2 == dims.size() ? last : hidden);
  }
}

template <typename T>
void Mlp<T>::init(std::mt19937_64& rng) {
  for (auto& l : layers) l.init(rng);
}

template <typename T>
BasicMatrix<T> Mlp<T>::forward(const BasicMatrix<T>& x, Cache* cache) const {
  if (cache) cache->assign(layers.size(), {});
  BasicMatrix<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h, cache ? &(*cache)[i] : nullptr);
  }
  return h;
}

template <typename T>
BasicMatrix<T> Mlp<T>::backward(const BasicMatrix<T>& dy, const Cache& cache) {
  BasicMatrix<T> g = dy;
  for (std::size_t i = layers.size(); i-- > 0;) g = layers[i].backward(g, cache[i]);
  return g;
}

template <typename T>
void Mlp<T>::collect(ParamList<T>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "." + std::to_string(i));
}

template <typename T>
BasicMatrix<T> mlp_forward(const BasicMatrix<T>& input, std::span<const Dense<T>> layers) {
  BasicMatrix<T> h = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.value.rows() != 1 || l.bias.value.cols() != l.out_dim()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias has shape " + std::to_string(l.bias.value.rows()) + "x" +
                       std::to_string(l.bias.value.cols()) + ", expected 1x" + std::to_string(l.out_dim()));
    }
    if (h.cols() != l.in_dim()) {
      throw ShapeError("layer " + std::to_string(i) + ": expects input dim " + std::to_string(l.in_dim()) + ", got " +
                       std::to_string(h.cols()));
    }
    h = l.forward(h);
  }
  if (!h.all_finite()) throw NumericError("mlp_forward: non-finite output");
  return h;
}

template <typename T>
EmbeddingTable<T>::EmbeddingTable(std::size_t vocab_size, std::size_t dim) : table(vocab_size, dim) {
  if (dim == 0) throw ConfigError("embedding dim must be > 0");
}

template <typename T>
void EmbeddingTable<T>::init(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& w : table.value.values()) w = static_cast<T>(dist(rng));
}

template <typename T>
std::span<const T> EmbeddingTable<T>::lookup(std::size_t index) const {
  if (index >= vocab_size()) {
    throw DataError("embedding lookup index " + std::to_string(index) + " >= vocab size " + std::to_string(vocab_size()));
  }
  return table.value.row(index);
}

template <typename T>
void EmbeddingTable<T>::accumulate(std::size_t index, std::span<const T> g, T scale) {
  if (index >= vocab_size()) {
    throw DataError("embedding grad index " + std::to_string(index) + " >= vocab size " + std::to_string(vocab_size()));
  }
  auto dst = table.grad.row(index);
  for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += scale * g[c];
}

template <typename T>
void EmbeddingTable<T>::collect(ParamList<T>& out, const std::string& name) {
  out.push_back({name, &table});
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim) : gamma(1, dim), beta(1, dim) {
  gamma.value.fill(T{1});
}

template <typename T>
BasicMatrix<T> LayerNorm<T>::forward(const BasicMatrix<T>& x, Cache* cache) const {
  const std::size_t d = x.cols();
  if (d != gamma.value.cols()) throw ShapeError("LayerNorm: input dim " + std::to_string(d) + " != " + std::to_string(gamma.value.cols()));
  BasicMatrix<T> y(x.rows(), d);
  if (cache) {
    cache->normalized = BasicMatrix<T>(x.rows(), d);
    cache->inv_std.assign(x.rows(), 0.0);
  }
  const auto g = gamma.value.row(0);
  const auto b = beta.value.row(0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    double mean = 0.0;
    for (T v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (xr[c] - mean) * inv;
      y(r, c) = static_cast<T>(g[c] * xh + b[c]);
      if (cache) cache->normalized(r, c) = static_cast<T>(xh);
    }
    if (cache) cache->inv_std[r] = inv;
  }
  return y;
}

template <typename T>
BasicMatrix<T> LayerNorm<T>::backward(const BasicMatrix<T>& dy, const Cache& cache) {
  const std::size_t d = dy.cols();
  BasicMatrix<T> dx(dy.rows(), d);
  const auto g = gamma.value.row(0);
  auto gg = gamma.grad.row(0);
  auto gb = beta.grad.row(0);
  std::vector<double> dxh(d);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = cache.normalized(r, c);
      gg[c] += static_cast<T>(dy(r, c) * xh);
      gb[c] += dy(r, c);
      dxh[c] = static_cast<double>(dy(r, c)) * g[c];
      mean_dxh += dxh[c];
      mean_dxh_xh += dxh[c] * xh;
    }
    mean_dxh /= static_cast<double>(d);
    mean_dxh_xh /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = cache.normalized(r, c);
      dx(r, c) = static_cast<T>(cache.inv_std[r] * (dxh[c] - mean_dxh - xh * mean_dxh_xh));
    }
  }
  return dx;
}

template <typename T>
void LayerNorm<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", &gamma});
  out.push_back({prefix + ".beta", &beta});
}

template class Dense<float>;
template class Dense<double>;
template class Mlp<float>;
template class Mlp<double>;
template class EmbeddingTable<float>;
template class EmbeddingTable<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template BasicMatrix<float> mlp_forward(const BasicMatrix<float>&, std::span<const Dense<float>>);
template BasicMatrix<double> mlp_forward(const BasicMatrix<double>&, std::span<const Dense<double>>);

}  // namespace crm
