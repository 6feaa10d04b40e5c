#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "touchadd/nn/ops.hpp"
#include "touchadd/nn/params.hpp"
#include "touchadd/rng.hpp"

namespace touchadd::nn {
namespace {

Mat random_mat(Index r, Index c, Rng& rng, Real scale = 1.0) { return normal_init(r, c, scale, rng); }

// Central-difference check of d f / d inputs against backward().
void check_gradients(std::vector<Tensor> inputs, const std::function<Tensor(std::vector<Tensor>&)>& f,
                     Real tol = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  Tensor out = f(inputs);
  ASSERT_EQ(out.rows(), 1);
  ASSERT_EQ(out.cols(), 1);
  out.backward();
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    const Mat analytic = inputs[k].grad().size() ? inputs[k].grad() : Mat::Zero(inputs[k].rows(), inputs[k].cols());
    Mat& w = inputs[k].mutable_value();
    for (Index i = 0; i < w.size(); ++i) {
      const Real saved = w.data()[i];
      const Real h = 1e-5;
      w.data()[i] = saved + h;
      const Real up = f(inputs).item();
      w.data()[i] = saved - h;
      const Real down = f(inputs).item();
      w.data()[i] = saved;
      const Real numeric = (up - down) / (2 * h);
      EXPECT_NEAR(analytic.data()[i], numeric, tol * std::max<Real>(1.0, std::abs(numeric)))
          << "input " << k << " entry " << i;
    }
  }
}

// Weighted sum so that every output entry carries a distinct gradient.
Tensor probe(const Tensor& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(x, Tensor::constant(random_mat(x.rows(), x.cols(), rng))));
}

TEST(NnGrad, MatmulLinear) {
  Rng rng(1);
  check_gradients({Tensor(random_mat(3, 4, rng), true), Tensor(random_mat(4, 5, rng), true),
                   Tensor(random_mat(1, 5, rng), true)},
                  [](auto& in) { return probe(linear(in[0], in[1], in[2])); });
  check_gradients({Tensor(random_mat(2, 3, rng), true), Tensor(random_mat(3, 2, rng), true)},
                  [](auto& in) { return probe(matmul(in[0], in[1])); });
}

TEST(NnGrad, Elementwise) {
  Rng rng(2);
  auto a = Tensor(random_mat(3, 4, rng), true);
  auto b = Tensor(random_mat(3, 4, rng), true);
  check_gradients({a, b}, [](auto& in) { return probe(add(in[0], in[1])); });
  check_gradients({a, b}, [](auto& in) { return probe(sub(in[0], in[1])); });
  check_gradients({a, b}, [](auto& in) { return probe(mul(in[0], in[1])); });
  check_gradients({a}, [](auto& in) { return probe(scale(in[0], -2.5)); });
  check_gradients({a, Tensor(random_mat(1, 4, rng), true)}, [](auto& in) { return probe(add_row(in[0], in[1])); });
  check_gradients({a, Tensor(random_mat(3, 1, rng), true)}, [](auto& in) { return probe(add_col(in[0], in[1])); });
}

TEST(NnGrad, Activations) {
  Rng rng(3);
  auto x = Tensor(random_mat(4, 5, rng), true);
  check_gradients({x}, [](auto& in) { return probe(gelu(in[0])); });
  check_gradients({x}, [](auto& in) { return probe(silu(in[0])); });
  check_gradients({x}, [](auto& in) { return probe(sigmoid(in[0])); });
  check_gradients({x}, [](auto& in) { return probe(relu(in[0])); }, 1e-5);
}

TEST(NnGrad, LayerNorm) {
  Rng rng(4);
  check_gradients({Tensor(random_mat(3, 6, rng), true), Tensor(random_mat(1, 6, rng), true),
                   Tensor(random_mat(1, 6, rng), true)},
                  [](auto& in) { return probe(layer_norm(in[0], in[1], in[2])); });
}

TEST(NnGrad, EmbeddingAndRows) {
  Rng rng(5);
  const std::vector<int> ids{2, 0, 2, 3};
  auto table = Tensor(random_mat(4, 3, rng), true);
  check_gradients({table}, [&](auto& in) { return probe(embedding(in[0], ids)); });
  check_gradients({table}, [&](auto& in) { return probe(embedding_bag(in[0], ids)); });
  auto other = Tensor(random_mat(2, 3, rng), true);
  check_gradients({table, other}, [](auto& in) { return probe(concat_rows({in[0], in[1]})); });
  check_gradients({table}, [](auto& in) { return probe(slice_rows(in[0], 1, 2)); });
  check_gradients({table}, [](auto& in) { return probe(transpose(in[0])); });
}

TEST(NnGrad, CausalAttention) {
  Rng rng(6);
  check_gradients({Tensor(random_mat(5, 4, rng), true), Tensor(random_mat(5, 4, rng), true),
                   Tensor(random_mat(5, 4, rng), true)},
                  [](auto& in) { return probe(causal_attention(in[0], in[1], in[2], 2)); });
}

TEST(NnGrad, ConvPoolUpsample) {
  Rng rng(7);
  auto x = Tensor(random_mat(2, 16, rng), true);
  check_gradients({x, Tensor(random_mat(3, 18, rng), true), Tensor(random_mat(3, 1, rng), true)},
                  [](auto& in) { return probe(conv3x3(in[0], in[1], in[2], 4, 4)); });
  check_gradients({x}, [](auto& in) { return probe(avg_pool2(in[0], 4, 4)); });
  check_gradients({x}, [](auto& in) { return probe(upsample2(in[0], 4, 4)); });
}

TEST(NnGrad, Losses) {
  Rng rng(8);
  const std::vector<int> targets{1, 0, 3};
  check_gradients({Tensor(random_mat(3, 4, rng), true)},
                  [&](auto& in) { return cross_entropy(in[0], targets); });
  auto a = Tensor(random_mat(3, 4, rng), true);
  auto b = Tensor(random_mat(3, 4, rng), true);
  check_gradients({a, b}, [](auto& in) { return mse(in[0], in[1]); });
  Mat target = (random_mat(2, 5, rng).array() > 0.0).cast<Real>();
  check_gradients({Tensor(random_mat(2, 5, rng), true)},
                  [&](auto& in) { return dice_loss(sigmoid(in[0]), target); });
  check_gradients({a}, [](auto& in) { return mean(in[0]); });
}

TEST(NnOps, ConvMatchesDirectSum) {
  Rng rng(9);
  const int H = 3, W = 5;
  const Mat x = random_mat(2, H * W, rng);
  const Mat w = random_mat(1, 18, rng);
  const Mat b = Mat::Constant(1, 1, 0.25);
  const Mat got = conv3x3(Tensor::constant(x), Tensor::constant(w), Tensor::constant(b), H, W).value();
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      Real expect = 0.25;
      for (int c = 0; c < 2; ++c)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int sy = y + ky - 1, sx = xx + kx - 1;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
            expect += w(0, c * 9 + ky * 3 + kx) * x(c, sy * W + sx);
          }
      EXPECT_NEAR(got(0, y * W + xx), expect, 1e-12);
    }
}

TEST(NnOps, AttentionFirstRowCopiesValue) {
  Rng rng(10);
  const Mat v = random_mat(4, 6, rng);
  const Mat out = causal_attention(Tensor::constant(random_mat(4, 6, rng)),
                                   Tensor::constant(random_mat(4, 6, rng)), Tensor::constant(v), 3)
                      .value();
  for (Index c = 0; c < 6; ++c) EXPECT_NEAR(out(0, c), v(0, c), 1e-12);
}

TEST(NnOps, CrossEntropyUniformIsLogV) {
  const std::vector<int> t{0, 5, 9};
  EXPECT_NEAR(cross_entropy(Tensor::constant(Mat::Zero(3, 10)), t).item(), std::log(10.0), 1e-12);
}

TEST(NnOps, DiceOfIdenticalMasksIsZero) {
  Mat m = Mat::Zero(1, 8);
  m(0, 2) = m(0, 3) = 1;
  EXPECT_NEAR(dice_loss(Tensor::constant(m), m).item(), 0.0, 1e-9);
  EXPECT_NEAR(dice_loss(Tensor::constant(Mat::Zero(1, 8)), m).item(), 1.0 - 1e-6 / (2 + 1e-6), 1e-12);
}

TEST(NnGraph, NoGradBuildsNoGraph) {
  Tensor w(Mat::Ones(2, 2), true);
  NoGradGuard guard;
  const Tensor y = mul(w, w);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->inputs.empty());
}

TEST(NnGraph, SharedInputAccumulates) {
  Tensor x(Mat::Constant(1, 1, 3.0), true);
  Tensor y = add(mul(x, x), x);
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 7.0);
}

TEST(Adam, ZeroLearningRateLeavesWeights) {
  Rng rng(11);
  ParamStore store;
  Tensor w = store.add("w", random_mat(2, 2, rng));
  const Mat before = w.value();
  Adam opt(store, AdamConfig{.lr = 0.0});
  sum(mul(w, w)).backward();
  opt.step();
  EXPECT_EQ(w.value(), before);
}

TEST(Adam, MinimizesQuadratic) {
  ParamStore store;
  Tensor w = store.add("w", Mat::Constant(1, 3, 4.0));
  Adam opt(store, AdamConfig{.lr = 0.1, .clip_norm = 0.0});
  for (int i = 0; i < 300; ++i) {
    sum(mul(w, w)).backward();
    opt.step();
  }
  EXPECT_LT(w.value().cwiseAbs().maxCoeff(), 0.05);
}

TEST(Checkpoint, RoundTripAndHeaderChecks) {
  Rng rng(12);
  ParamStore a;
  a.add("x", random_mat(3, 2, rng));
  const auto path = std::filesystem::temp_directory_path() / "touchadd_nn_ckpt.bin";
  write_checkpoint(path, "TESTCKP1", 3, "{\"k\":1}", a);
  ParamStore b;
  b.add("x", Mat::Zero(3, 2));
  std::ifstream in(path, std::ios::binary);
  const auto header = read_checkpoint_header(in, "TESTCKP1", 3);
  EXPECT_EQ(header.config_json, "{\"k\":1}");
  b.read(in);
  EXPECT_EQ(b.get("x").value(), a.get("x").value());

  std::ifstream again(path, std::ios::binary);
  EXPECT_THROW(read_checkpoint_header(again, "TESTCKP1", 4), CheckpointError);
  std::ifstream wrong(path, std::ios::binary);
  EXPECT_THROW(read_checkpoint_header(wrong, "OTHERCK1", 3), CheckpointError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace touchadd::nn
