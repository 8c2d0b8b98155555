#include <cmath>

#include <gtest/gtest.h>

#include "crm/error.hpp"
#include "crm/numerics/attention.hpp"
#include "oracles.hpp"

using namespace crm;

namespace {

// Masked-softmax attention written out with scalar loops: scores for j > i
// are set to -inf before the softmax.
BasicMatrix<double> attention_oracle(const BasicMatrix<double>& x, const CausalSelfAttention<double>& a) {
  const auto q = a.query.forward(x), k = a.key.forward(x), v = a.value.forward(x);
  const std::size_t n = x.rows(), d = x.cols(), heads = a.n_heads(), hd = d / heads;
  BasicMatrix<double> mixed(n, d);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (j > i) {
          s[j] = -INFINITY;
          continue;
        }
        double acc = 0;
        for (std::size_t c = 0; c < hd; ++c) acc += q(i, h * hd + c) * k(j, h * hd + c);
        s[j] = acc / std::sqrt(static_cast<double>(hd));
      }
      double mx = -INFINITY, z = 0;
      for (double e : s) mx = std::max(mx, e);
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += s[j] / z * v(j, h * hd + c);
        mixed(i, h * hd + c) = acc;
      }
    }
  }
  return a.output.forward(mixed);
}

}  // namespace

TEST(Attention, MatchesMaskedSoftmaxOracle) {
  Rng rng(4);
  CausalSelfAttention<double> attn(8, 2);
  attn.init(rng);
  const auto x = oracle::random_matrix<double>(6, 8, 5);
  const auto got = causal_attention_forward(x, attn);
  const auto want = attention_oracle(x, attn);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.values()[i], want.values()[i], 1e-12);
}

TEST(Attention, FirstTokenOnlySeesItself) {
  Rng rng(1);
  CausalSelfAttention<double> attn(4, 1);
  attn.init(rng);
  const auto x = oracle::random_matrix<double>(3, 4, 2);
  const auto y = attn.forward(x);
  // With a single visible key the softmax weight is 1: output = out(v(x0)).
  const auto expect = attn.output.forward(attn.value.forward(BasicMatrix<double>(1, 4, {x.row(0).begin(), x.row(0).end()})));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y(0, c), expect(0, c), 1e-12);
}

TEST(Attention, HeadCountMustDivideWidth) {
  EXPECT_THROW(CausalSelfAttention<float>(10, 3), ConfigError);
  EXPECT_THROW(CausalTransformer<float>(10, 4, 2, 16), ConfigError);
}

TEST(Attention, PrefixOutputsBitwiseInvariantToLaterTokens) {
  Rng rng(7);
  CausalTransformer<float> net(16, 2, 2, 32);
  net.init(rng);
  Rng pick(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + pick() % 20;
    auto x = oracle::random_matrix<float>(n, 16, 100 + trial);
    const auto base = net.forward(x);
    const std::size_t t = pick() % (n - 1);
    for (std::size_t r = t + 1; r < n; ++r)
      for (auto& v : x.row(r)) v += 0.75f;
    const auto pert = net.forward(x);
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t c = 0; c < 16; ++c) ASSERT_EQ(base(r, c), pert(r, c)) << "trial " << trial << " row " << r;
    bool changed = false;
    for (std::size_t c = 0; c < 16; ++c) changed |= base(n - 1, c) != pert(n - 1, c);
    EXPECT_TRUE(changed);
  }
}
