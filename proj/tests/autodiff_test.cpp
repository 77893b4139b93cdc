#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "featadapt/autodiff.hpp"
#include "featadapt/gradcheck.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"

using namespace featadapt;

TEST(Backward, LinearSum) {
  Tensor w({{1.0, 2.0}});
  w.requires_grad(true);
  Tape tape;
  Tensor loss = sum_all(w);
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(w.grad()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(w.grad()(0, 1), 1.0);
}

TEST(Backward, AnalyticDerivativeOracle) {
  // loss = (5w - 2)^2 at w = 1: d/dw = 2 (5w - 2) * 5 = 30
  Tensor w = Tensor::scalar(1.0);
  w.requires_grad(true);
  Tape tape;
  Tensor diff = sub(mul(w, 5.0), 2.0);
  Tensor loss = mul(diff, diff);
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(loss.item(), 9.0);
  EXPECT_DOUBLE_EQ(w.grad()(0, 0), 30.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor w({{1.0, 2.0}});
  w.requires_grad(true);
  Tape tape;
  Tensor y = mul(w, 2.0);
  EXPECT_THROW(backward(y, tape), ShapeError);
}

TEST(Backward, DetachedLeafKeepsZeroGrad) {
  Tensor w = Tensor::scalar(1.0);
  w.requires_grad(true);
  Tensor unused = Tensor::scalar(3.0);
  unused.requires_grad(true);
  Tape tape;
  Tensor loss = mul(w, w);
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(w.grad().item(), 2.0);
  EXPECT_DOUBLE_EQ(unused.grad().item(), 0.0);
}

TEST(Backward, FanOutAccumulates) {
  // loss = w*w + 3w: d/dw = 2w + 3
  Tensor w = Tensor::scalar(2.0);
  w.requires_grad(true);
  Tape tape;
  Tensor loss = add(mul(w, w), mul(w, 3.0));
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(w.grad().item(), 7.0);
}

TEST(Backward, GradsAccumulateAcrossCallsUntilCleared) {
  Tensor w = Tensor::scalar(1.0);
  w.requires_grad(true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    Tensor loss = mul(w, 4.0);
    backward(loss, tape);
  }
  EXPECT_DOUBLE_EQ(w.grad().item(), 8.0);
  w.zero_grad();
  EXPECT_DOUBLE_EQ(w.grad().item(), 0.0);
}

TEST(Backward, FrozenInputNeverReceivesGrad) {
  Tensor frozen({{1.0, 2.0}, {3.0, 4.0}});
  Tensor x({{1.0}, {1.0}});
  x.requires_grad(true);
  Tape tape;
  Tensor loss = sum_all(matmul(frozen, x));
  backward(loss, tape);
  EXPECT_FALSE(frozen.requires_grad());
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 4.0);  // column sums of frozen
  EXPECT_DOUBLE_EQ(x.grad()(1, 0), 6.0);
}

TEST(Tape, NoActiveTapeMeansPlainEvaluation) {
  Tensor w = Tensor::scalar(1.0);
  w.requires_grad(true);
  Tensor y = mul(w, 2.0);  // no tape in scope
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(Tape, RecordsOnlyGradPaths) {
  Tensor a = Tensor::scalar(1.0);
  Tensor b = Tensor::scalar(2.0);
  b.requires_grad(true);
  Tape tape;
  add(a, a);  // no grad input, not recorded
  EXPECT_EQ(tape.size(), 0u);
  mul(a, b);
  EXPECT_EQ(tape.size(), 1u);
}

// ---------------------------------------------------------------------------
// Finite-difference checks, per op and on random composite graphs
// ---------------------------------------------------------------------------

namespace {

constexpr double kFdTol = 1e-4;

Tensor random_signed(std::size_t rows, std::size_t cols, Rng& rng, double floor = 0.05) {
  // uniform in [-2, 2], nudged away from zero to keep relu kinks out of the
  // finite-difference window
  std::vector<double> values(rows * cols);
  for (auto& v : values) {
    v = rng.uniform(-2.0, 2.0);
    if (std::abs(v) < floor) v = v < 0.0 ? -floor : floor;
  }
  return Tensor(rows, cols, std::move(values));
}

void expect_grad_matches(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                         std::vector<Tensor> inputs) {
  auto report = check_gradients(fn, inputs, 1e-5);
  EXPECT_LE(report.max_rel_err, kFdTol) << "worst abs err " << report.max_abs_err;
  EXPECT_GT(report.elements_checked, 0u);
}

}  // namespace

TEST(GradCheck, Matmul) {
  Rng rng(11);
  Tensor a = random_signed(4, 3, rng);
  Tensor b = random_signed(3, 2, rng);
  a.requires_grad(true);
  b.requires_grad(true);
  expect_grad_matches(
      [](const std::vector<Tensor>& in) { return mean_all(matmul(in[0], in[1])); },
      {a, b});
}

TEST(GradCheck, ElementwiseAndScalarBroadcast) {
  Rng rng(12);
  Tensor a = random_signed(3, 3, rng);
  Tensor b = random_signed(3, 3, rng);
  Tensor s = random_signed(1, 1, rng);
  a.requires_grad(true);
  b.requires_grad(true);
  s.requires_grad(true);
  expect_grad_matches(
      [](const std::vector<Tensor>& in) {
        Tensor h = mul(in[0], in[1]);
        h = add(h, in[2]);          // scalar broadcast
        h = sub(h, mul(in[0], in[2]));
        return mean_all(mul(h, h));
      },
      {a, b, s});
}

TEST(GradCheck, TransposeReluSoftmax) {
  Rng rng(13);
  Tensor a = random_signed(4, 3, rng);
  a.requires_grad(true);
  expect_grad_matches(
      [](const std::vector<Tensor>& in) {
        Tensor h = relu(in[0]);
        h = softmax_rows(matmul(h, transpose(h)));
        return mean_all(h);
      },
      {a});
}

TEST(GradCheck, RowBiasAndColumnScale) {
  Rng rng(14);
  Tensor x = random_signed(5, 3, rng);
  Tensor bias = random_signed(3, 1, rng);
  Tensor scale = random_signed(3, 1, rng);
  x.requires_grad(true);
  bias.requires_grad(true);
  scale.requires_grad(true);
  expect_grad_matches(
      [](const std::vector<Tensor>& in) {
        Tensor h = scale_columns(add_row_bias(in[0], in[1]), in[2]);
        return mean_all(mul(h, h));
      },
      {x, bias, scale});
}

TEST(GradCheck, CrossEntropy) {
  Rng rng(15);
  Tensor logits = random_signed(3, 5, rng);
  logits.requires_grad(true);
  const std::vector<int> labels{0, 3, 2};
  expect_grad_matches(
      [&labels](const std::vector<Tensor>& in) { return cross_entropy(in[0], labels); },
      {logits});
}

TEST(GradCheck, MseLoss) {
  Rng rng(16);
  Tensor pred = random_signed(4, 2, rng);
  Tensor target = random_signed(4, 2, rng);
  pred.requires_grad(true);
  expect_grad_matches(
      [&target](const std::vector<Tensor>& in) { return mse_loss(in[0], target); },
      {pred});
}

TEST(CrossEntropy, UniformLogitsEqualLogC) {
  Tensor logits(3, 4);  // all zero -> uniform
  const std::vector<int> labels{0, 1, 2};
  EXPECT_NEAR(cross_entropy(logits, labels).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tensor logits(2, 3);
  EXPECT_THROW(cross_entropy(logits, {0, 3}), ValueError);
  EXPECT_THROW(cross_entropy(logits, {0}), ShapeError);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(17);
  Tensor x = Tensor::randn(6, 5, rng, 3.0);
  Tensor y = softmax_rows(x);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) sum += y(i, j);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, StableUnderLargeLogits) {
  Tensor x({{1000.0, 1000.0, 999.0}});
  Tensor y = softmax_rows(x);
  EXPECT_NEAR(y(0, 0), y(0, 1), 1e-15);
  EXPECT_GT(y(0, 0), y(0, 2));
}

// Random composite graphs over the full op set; the module-level soundness
// property (the acceptance suite runs 50 of these).
TEST(GradCheck, RandomCompositeGraphs) {
  Rng rng(100);
  for (int graph = 0; graph < 12; ++graph) {
    Tensor a = random_signed(4, 3, rng);
    Tensor b = random_signed(4, 3, rng);
    Tensor c = random_signed(3, 4, rng);
    Tensor s = random_signed(1, 1, rng);
    a.requires_grad(true);
    b.requires_grad(true);
    c.requires_grad(true);
    s.requires_grad(true);
    const int variant = graph % 4;
    expect_grad_matches(
        [variant](const std::vector<Tensor>& in) {
          Tensor h = add(in[0], in[1]);        // 4x3
          h = matmul(h, in[2]);                // 4x4
          h = mul(h, in[3]);                   // scalar broadcast
          if (variant == 0) h = relu(h);
          if (variant == 1) h = softmax_rows(h);
          if (variant == 2) h = matmul(transpose(h), h);
          if (variant == 3) h = sub(h, transpose(h));
          return mean_all(mul(h, h));
        },
        {a, b, c, s});
  }
}
