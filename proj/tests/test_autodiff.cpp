#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "gradcheck.hpp"
#include "hytas/autodiff.hpp"
#include "hytas/error.hpp"
#include "test_util.hpp"

using namespace hytas;

namespace {

Tensor random_tensor(Shape shape, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = d(rng);
  return t;
}

// Checks d/dx sum(w * op(x)) for a fixed random w against central differences.
void expect_op_gradient(const Shape& in_shape, const std::function<Var(Var)>& op, unsigned seed = 1,
                        double tol = 1e-7) {
  const Tensor x0 = random_tensor(in_shape, seed);
  Tensor w;
  auto loss_of = [&](Tape& tape, Var x) {
    Var y = op(x);
    if (w.empty()) w = random_tensor(y.shape(), seed + 100);
    return sum(mul(y, tape.leaf(w)));
  };
  Tape tape;
  Var x = tape.leaf(x0, true);
  const auto grads = backward(tape, loss_of(tape, x));
  const Tensor analytic = grads[x];
  const Tensor fd = finite_diff_gradient(
      [&](const Tensor& xv) {
        Tape t;
        return loss_of(t, t.leaf(xv)).value().item();
      },
      x0, 1e-6);
  ASSERT_EQ(analytic.shape(), fd.shape());
  for (std::size_t i = 0; i < fd.numel(); ++i) {
    EXPECT_NEAR(analytic[i], fd[i], tol * std::max(1.0, std::abs(fd[i]))) << "coordinate " << i;
  }
}

TEST(Autodiff, MatmulBothOperands) {
  const Tensor b0 = random_tensor({4, 3}, 5);
  expect_op_gradient({2, 5, 4}, [&](Var a) { return matmul(a, a.tape().leaf(b0)); });
  const Tensor a0 = random_tensor({2, 5, 4}, 6);
  expect_op_gradient({4, 3}, [&](Var b) { return matmul(b.tape().leaf(a0), b); });
}

TEST(Autodiff, LinearWeightAndBias) {
  const Tensor x0 = random_tensor({3, 2, 5}, 7);
  const Tensor b0 = random_tensor({4}, 8);
  const Tensor w0 = random_tensor({4, 5}, 9);
  expect_op_gradient({4, 5}, [&](Var w) { return linear(w.tape().leaf(x0), w, w.tape().leaf(b0)); });
  expect_op_gradient({4}, [&](Var b) { return linear(b.tape().leaf(x0), b.tape().leaf(w0), b); });
  expect_op_gradient({3, 2, 5}, [&](Var x) { return linear(x, x.tape().leaf(w0), Var{}); });
}

TEST(Autodiff, ElementwiseAndShapeOps) {
  const Tensor other = random_tensor({3, 4}, 10);
  expect_op_gradient({2, 3, 4}, [&](Var a) { return add(a, a.tape().leaf(other)); });
  expect_op_gradient({2, 3, 4}, [&](Var a) { return mul(a, a.tape().leaf(other)); });
  expect_op_gradient({2, 3, 4}, [&](Var a) { return mul(a, a); });
  expect_op_gradient({2, 3, 4}, [](Var a) { return scale(a, -2.5); });
  expect_op_gradient({2, 3, 4}, [](Var a) { return transpose_last_two(a); });
  expect_op_gradient({2, 3, 4, 5}, [](Var a) { return permute(a, {2, 0, 3, 1}); });
  expect_op_gradient({2, 3, 4}, [](Var a) { return reshape(a, {6, 4}); });
  expect_op_gradient({2, 3, 4}, [](Var a) { return concat({a, scale(a, 2.0)}, 1); });
  expect_op_gradient({2, 5, 4}, [](Var a) { return slice(a, 1, 1, 3); });
  expect_op_gradient({3, 4}, [](Var a) { return expand_leading(a, 3); });
  expect_op_gradient({2, 3, 4}, [](Var a) { return mean(a, 1); });
}

TEST(Autodiff, NonlinearOps) {
  expect_op_gradient({3, 7}, [](Var a) { return softmax(a); });
  expect_op_gradient({2, 3, 7}, [](Var a) { return gelu(a); });
  const Tensor g0 = random_tensor({6}, 11);
  const Tensor b0 = random_tensor({6}, 12);
  expect_op_gradient({2, 3, 6}, [&](Var x) { return layer_norm(x, x.tape().leaf(g0), x.tape().leaf(b0)); });
  const Tensor x0 = random_tensor({2, 3, 6}, 13);
  expect_op_gradient({6}, [&](Var g) { return layer_norm(g.tape().leaf(x0), g, g.tape().leaf(b0)); });
}

TEST(Autodiff, AttentionMatchesComposedOps) {
  const std::size_t b = 2, t = 4, h = 2, hd = 3;
  const Tensor qkv0 = random_tensor({b, t, 3 * h * hd}, 14);
  expect_op_gradient({b, t, 3 * h * hd}, [&](Var qkv) { return attention(qkv, h, hd); });

  Tape tape;
  Var qkv = tape.leaf(qkv0);
  const Tensor fused = attention(qkv, h, hd).value();
  Var r = permute(reshape(qkv, {b, t, 3, h, hd}), {2, 0, 3, 1, 4});
  Var q = reshape(slice(r, 0, 0, 1), {b, h, t, hd});
  Var k = reshape(slice(r, 0, 1, 1), {b, h, t, hd});
  Var v = reshape(slice(r, 0, 2, 1), {b, h, t, hd});
  Var att = softmax(scale(matmul(q, transpose_last_two(k)), 1.0 / std::sqrt(static_cast<double>(hd))));
  const Tensor composed = reshape(permute(matmul(att, v), {0, 2, 1, 3}), {b, t, h * hd}).value();
  for (std::size_t i = 0; i < fused.numel(); ++i) EXPECT_NEAR(fused[i], composed[i], 1e-12);
}

TEST(Autodiff, CrossEntropy) {
  const std::vector<int> labels{2, 0, 1};
  Tape tape;
  Var logits = tape.leaf(Tensor({3, 3}, 0.0), true);
  Var loss = cross_entropy(logits, labels);
  EXPECT_NEAR(loss.value().item(), std::log(3.0), 1e-15);
  expect_op_gradient({3, 4}, [&](Var a) { return reshape(cross_entropy(a, labels), {1}); });
}

TEST(Autodiff, FanOutAccumulates) {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1.0, 2.0, 3.0}), true);
  Var y = sum(add(mul(x, x), scale(x, 3.0)));
  const auto g = backward(tape, y);
  EXPECT_EQ(g[x].storage(), (std::vector<double>{5.0, 7.0, 9.0}));
}

TEST(Autodiff, RejectsNonScalarLoss) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 1.0), true);
  EXPECT_THROW(backward(tape, x), ContractError);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 3}, 1.0));
  Var b = tape.leaf(Tensor({4, 2}, 1.0));
  EXPECT_THROW(matmul(a, b), DimensionError);
  EXPECT_THROW(add(a, b), DimensionError);
}

TEST(Autodiff, BatchGradientIsSumOfSampleGradients) {
  const auto g = testutil::small_genotype();
  const auto geom = testutil::small_geometry();
  const auto net = build(g, geom, 3);
  const auto batch = synth_batch(geom, Provenance::Random, 4, 2);
  auto grads_of = [&](const Tensor& data) {
    Tape tape;
    ForwardOptions fo;
    fo.param_grads = true;
    const auto res = forward(net, tape, data, fo);
    const auto gm = backward(tape, sum(res.logits));
    std::vector<Tensor> out;
    for (const auto& p : res.params) out.push_back(gm[p]);
    return out;
  };
  const auto both = grads_of(batch.data);
  const std::size_t per = batch.data.numel() / 2;
  const auto src = batch.data.data();
  Tensor s0(Shape{1, geom.tokens, geom.token_width}), s1(Shape{1, geom.tokens, geom.token_width});
  std::copy_n(src.begin(), per, s0.data().begin());
  std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(per), per, s1.data().begin());
  const auto g0 = grads_of(s0);
  const auto g1 = grads_of(s1);
  for (std::size_t p = 0; p < both.size(); ++p) {
    for (std::size_t i = 0; i < both[p].numel(); ++i) {
      EXPECT_NEAR(both[p][i], g0[p][i] + g1[p][i], 1e-12 * std::max(1.0, std::abs(both[p][i])));
    }
  }
}

TEST(Autodiff, NetworkGradientsMatchFiniteDifferences) {
  const auto g = testutil::small_genotype();
  const auto geom = testutil::small_geometry();
  auto net = build(g, geom, 21);
  const auto batch = synth_batch(geom, Provenance::Random, 22, 4);
  const auto res = testutil::check_gradients(net, batch, 4, 23);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
  EXPECT_GT(res.coordinates, 100u);
}

}  // namespace
