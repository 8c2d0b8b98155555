#pragma once

// Straightforward reference implementations the library is checked against.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "crm/numerics/matrix.hpp"
#include "crm/random.hpp"

namespace oracle {

template <typename T>
crm::BasicMatrix<T> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  crm::Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  crm::BasicMatrix<T> m(r, c);
  for (auto& v : m.values()) v = static_cast<T>(n(rng));
  return m;
}

inline std::vector<std::vector<double>> to_rows(const crm::BasicMatrix<float>& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Top-K by full scan with a plain sort; ties broken by smaller id.
inline std::vector<std::uint32_t> topk(const crm::Matrix& vectors, std::span<const float> q, std::size_t k) {
  std::vector<std::pair<double, std::uint32_t>> all;
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    double acc = 0;
    for (std::size_t c = 0; c < vectors.cols(); ++c) acc += static_cast<double>(vectors(r, c)) * q[c];
    all.push_back({acc, static_cast<std::uint32_t>(r + 1)});
  }
  std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(all[i].second);
  return ids;
}

}  // namespace oracle
