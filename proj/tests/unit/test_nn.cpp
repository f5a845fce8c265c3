// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "rgu/errors.hpp"
#include "rgu/finite_diff.hpp"
#include "rgu/nn.hpp"
#include "rgu/tensor.hpp"
#include "test_support.hpp"

using namespace rgu;
using rgu::test::rel_err;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Straight-line forward from unflattened parts, written independently of nn.cpp.
std::vector<double> reference_forward(const nn::NoisePredictor& m, std::vector<double> x, int t,
                                      nn::ClassId c) {
  const auto& a = m.architecture();
  const auto p = m.parts();
  std::vector<double> in = x;
  for (std::size_t j = 0; j < a.time_embed_dim; ++j) in.push_back(p.time_embedding(t - 1, j));
  const std::size_t crow = c ? static_cast<std::size_t>(*c) : a.num_classes;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    std::vector<double> out(L.bias);
    for (std::size_t o = 0; o < out.size(); ++o) {
      for (std::size_t i = 0; i < in.size(); ++i) out[o] += L.weight(o, i) * in[i];
      if (l == 0) out[o] += p.class_embedding(crow, o);
      if (l + 1 < p.layers.size()) out[o] = out[o] * sigmoid(out[o]);
    }
    in = out;
  }
  return in;
}

}  // namespace

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(t.append_row(std::vector<double>{1.0}), ShapeError);
}

TEST(Tensor, Kernels) {
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  EXPECT_DOUBLE_EQ(dot(a, b), 12.0);
  EXPECT_DOUBLE_EQ(squared_norm(a), 14.0);
  std::vector<double> y{1, 1, 1};
  axpy(2.0, a, y);
  EXPECT_EQ(y, (std::vector<double>{3, 5, 7}));
}

TEST(Silu, Values) {
  EXPECT_DOUBLE_EQ(nn::silu(0.0), 0.0);
  EXPECT_NEAR(nn::silu(1.0), 0.7310585786300049, 1e-15);
  for (double z : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
    const double h = 1e-6;
    const double fd = (nn::silu(z + h) - nn::silu(z - h)) / (2 * h);
    EXPECT_NEAR(nn::silu_derivative(z), fd, 1e-8);
  }
}

TEST(Architecture, Validation) {
  nn::Architecture a = rgu::test::tiny_arch();
  EXPECT_NO_THROW(a.validate());
  a.class_embed_dim = 3;
  EXPECT_THROW(a.validate(), DomainError);
  a = rgu::test::tiny_arch();
  a.hidden_dims.clear();
  EXPECT_THROW(a.validate(), DomainError);
}

TEST(Architecture, ParamCountAndLayout) {
  const auto a = rgu::test::tiny_arch();
  // (2+3)*5+5, 5*4+4, 4*2+2, 6*3, 4*5
  EXPECT_EQ(a.param_count(), 30u + 24u + 10u + 18u + 20u);
  const auto lay = nn::ParamLayout::of(a);
  EXPECT_EQ(lay.layers[0].weight, 0u);
  EXPECT_EQ(lay.layers[0].bias, 25u);
  EXPECT_EQ(lay.layers[1].weight, 30u);
  EXPECT_EQ(lay.time_table, 64u);
  EXPECT_EQ(lay.class_table, 82u);
  EXPECT_EQ(lay.total, 102u);
}

TEST(NoisePredictor, PartsRoundTrip) {
  Rng rng(3);
  const auto m = nn::NoisePredictor::random_init(rgu::test::tiny_arch(), rng);
  const auto back = nn::NoisePredictor::from_parts(m.architecture(), m.parts());
  EXPECT_EQ(back.param_vector(), m.param_vector());
}

TEST(NoisePredictor, RejectsWrongParamLength) {
  EXPECT_THROW(nn::NoisePredictor(rgu::test::tiny_arch(), std::vector<double>(7, 0.0)), ShapeError);
}

TEST(Forward, HandEvaluatedSingleUnit) {
  nn::Architecture a;
  a.input_dim = 1;
  a.hidden_dims = {1};
  a.num_classes = 1;
  a.num_timesteps = 1;
  a.time_embed_dim = 1;
  a.class_embed_dim = 1;
  // W0 = [1, 0], b0 = 0, W1 = [2], b1 = 0.5, time = [0], class = [0, 0]
  const nn::NoisePredictor m(a, {1.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.0, 0.0});
  const Tensor out = nn::mlp_forward(m, Tensor({1, 1}, {1.0}), 1, 0);
  EXPECT_NEAR(out(0, 0), 2.0 * 0.7310585786300049 + 0.5, 1e-15);
}

TEST(Forward, MatchesReferenceImplementation) {
  Rng rng(11);
  const auto m = nn::NoisePredictor::random_init(rgu::test::tiny_arch(), rng);
  Tensor x({3, 2}, rgu::test::normal_vector(6, rng));
  for (nn::ClassId c : {nn::ClassId{0}, nn::ClassId{2}, nn::ClassId{}}) {
    const Tensor out = nn::mlp_forward(m, x, 4, c);
    for (std::size_t b = 0; b < 3; ++b) {
      const auto ref = reference_forward(m, {x(b, 0), x(b, 1)}, 4, c);
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(out(b, j), ref[j], 1e-12);
    }
  }
}

TEST(Forward, RejectsBadInputs) {
  Rng rng(1);
  const auto m = nn::NoisePredictor::random_init(rgu::test::tiny_arch(), rng);
  EXPECT_THROW(nn::mlp_forward(m, Tensor({2, 3}), 1, 0), ShapeError);
  EXPECT_THROW(nn::mlp_forward(m, Tensor({2, 2}), 0, 0), DomainError);
  EXPECT_THROW(nn::mlp_forward(m, Tensor({2, 2}), 7, 0), DomainError);
  EXPECT_THROW(nn::mlp_forward(m, Tensor({2, 2}), 1, 3), DomainError);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(5);
  const auto arch = rgu::test::tiny_arch();
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = nn::NoisePredictor::random_init(arch, rng, 0.5);
    const Tensor x({4, 2}, rgu::test::normal_vector(8, rng));
    const Tensor eps({4, 2}, rgu::test::normal_vector(8, rng));
    const std::vector<int> t{1, 3, 6, 2};
    const std::vector<nn::ClassId> c{0, 2, std::nullopt, 1};
    const auto analytic = nn::mlp_backward(m, x, eps, t, c);
    const auto fd = nn::finite_diff_grad(
        [&](std::span<const double> p) {
          return nn::mlp_backward(m.with_params({p.begin(), p.end()}), x, eps, t, c).loss;
        },
        m.params(), 1e-5);
    ASSERT_EQ(fd.size(), analytic.grad.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      EXPECT_LT(rel_err(analytic.grad.values[i], fd[i]), 1e-7) << "param " << i;
    }
  }
}

TEST(Backward, WeightedZeroWeightSkipsGradient) {
  Rng rng(8);
  const auto m = nn::NoisePredictor::random_init(rgu::test::tiny_arch(), rng);
  const Tensor x({2, 2}, rgu::test::normal_vector(4, rng));
  const Tensor eps({2, 2}, rgu::test::normal_vector(4, rng));
  const std::vector<int> t{2, 5};
  const std::vector<nn::ClassId> c{0, 1};
  const auto zero = nn::weighted_backward(m, x, eps, t, c, [](std::size_t, double) { return 0.0; });
  for (double g : zero.grad.values) EXPECT_EQ(g, 0.0);
  // unit weight on sample 0 only equals the gradient of l_0 alone
  const auto one = nn::weighted_backward(m, x, eps, t, c,
                                         [](std::size_t b, double) { return b == 0 ? 1.0 : 0.0; });
  const auto single = nn::mlp_backward(m, Tensor({1, 2}, {x(0, 0), x(0, 1)}),
                                       Tensor({1, 2}, {eps(0, 0), eps(0, 1)}),
                                       std::vector<int>{2}, std::vector<nn::ClassId>{0});
  for (std::size_t i = 0; i < single.grad.size(); ++i) {
    EXPECT_NEAR(one.grad.values[i], single.grad.values[i], 1e-14);
  }
  EXPECT_NEAR(one.sample_losses[0], single.loss, 1e-15);
}

TEST(Backward, SteppedMovesAgainstDirection) {
  nn::NoisePredictor m(rgu::test::tiny_arch());
  nn::FlatGrad d(m.params().size());
  d.values[3] = 2.0;
  const auto s = m.stepped(d, 0.25);
  EXPECT_EQ(s.params()[3], -0.5);
  EXPECT_THROW(m.stepped(nn::FlatGrad(3), 0.1), ShapeError);
}
