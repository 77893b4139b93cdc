#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "featadapt/autodiff.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"

using namespace featadapt;

TEST(Tensor, ConstructionAndShape) {
  Tensor t(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_DOUBLE_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.shape().str(), "2x3");
}

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor(2, 2, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, RejectsNonFiniteAtConstruction) {
  EXPECT_THROW(Tensor(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}), ValueError);
  EXPECT_THROW(Tensor(1, 1, {std::numeric_limits<double>::infinity()}), ValueError);
  EXPECT_THROW(Tensor({{1.0, -std::numeric_limits<double>::infinity()}}), ValueError);
}

TEST(Tensor, RejectsZeroDimensions) {
  EXPECT_THROW(Tensor(0, 3), ValueError);
  EXPECT_THROW(Tensor(3, 0), ValueError);
  Rng rng(0);
  EXPECT_THROW(Tensor::randn(0, 1, rng), ValueError);
}

TEST(Tensor, ZerosAndIdentityAreExact) {
  Tensor z = Tensor::zeros(2, 2);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);

  Tensor id = Tensor::identity(2);
  EXPECT_EQ(id(0, 0), 1.0);
  EXPECT_EQ(id(0, 1), 0.0);
  EXPECT_EQ(id(1, 0), 0.0);
  EXPECT_EQ(id(1, 1), 1.0);
}

TEST(Tensor, RandnIsDeterministicPerSeed) {
  Rng rng_a(0);
  Rng rng_b(0);
  Tensor a = Tensor::randn(3, 3, rng_a);
  Tensor b = Tensor::randn(3, 3, rng_b);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_EQ(a.data()[i], b.data()[i]);  // bit-identical
  }

  Rng rng_c(1);
  Tensor c = Tensor::randn(3, 3, rng_c);
  EXPECT_GT(max_abs_diff(a, c), 0.0);
}

TEST(Tensor, CloneIsIndependent) {
  Tensor a(1, 2, {1.0, 2.0});
  Tensor shared = a;  // handle copy shares storage
  Tensor deep = a.clone();
  a.set(0, 0, 9.0);
  EXPECT_DOUBLE_EQ(shared(0, 0), 9.0);
  EXPECT_DOUBLE_EQ(deep(0, 0), 1.0);
  EXPECT_TRUE(a.same_storage(shared));
  EXPECT_FALSE(a.same_storage(deep));
}

TEST(Matmul, IdentityCase) {
  Tensor x({{3.0}, {4.0}});
  Tensor result = matmul(Tensor::identity(2), x);
  EXPECT_EQ(result(0, 0), 3.0);
  EXPECT_EQ(result(1, 0), 4.0);
}

TEST(Matmul, HandMultiplicationOracle) {
  // [[1,2],[3,4]] * [[5],[6]] = [[1*5+2*6],[3*5+4*6]] = [[17],[39]]
  Tensor result = matmul(Tensor({{1, 2}, {3, 4}}), Tensor({{5}, {6}}));
  EXPECT_DOUBLE_EQ(result(0, 0), 17.0);
  EXPECT_DOUBLE_EQ(result(1, 0), 39.0);
}

TEST(Matmul, DimensionMismatchNamesBothShapes) {
  Tensor a(2, 3, std::vector<double>(6, 1.0));
  Tensor b(2, 3, std::vector<double>(6, 1.0));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string message = e.what();
    EXPECT_NE(message.find("2x3"), std::string::npos);
  }
}

TEST(Matmul, IdentityLeavesOperandBitExact) {
  Rng rng(7);
  Tensor x = Tensor::randn(5, 4, rng);
  Tensor result = matmul(Tensor::identity(5), x);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(result.data()[i], x.data()[i]);
  }
}

TEST(Matmul, AssociativeWithinTolerance) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = Tensor::randn(4, 3, rng, 0.5);
    Tensor b = Tensor::randn(3, 5, rng, 0.5);
    Tensor c = Tensor::randn(5, 2, rng, 0.5);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-10);
  }
}

TEST(Elementwise, AdditiveIdentity) {
  Tensor result = add(Tensor({{1.0, 2.0}}), Tensor({{0.0, 0.0}}));
  EXPECT_DOUBLE_EQ(result(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(result(0, 1), 2.0);
}

TEST(Elementwise, HandMultiplication) {
  Tensor result = mul(Tensor({{2.0, 3.0}}), Tensor({{4.0, 5.0}}));
  EXPECT_DOUBLE_EQ(result(0, 0), 8.0);
  EXPECT_DOUBLE_EQ(result(0, 1), 15.0);
}

TEST(Elementwise, ShapeMismatch) {
  Tensor a(2, 2, std::vector<double>(4, 1.0));
  Tensor b(3, 1, std::vector<double>(3, 1.0));
  EXPECT_THROW(sub(a, b), ShapeError);
}

TEST(Elementwise, ScalarBroadcastBothSides) {
  Tensor m({{1.0, 2.0}, {3.0, 4.0}});
  Tensor twice = mul(m, 2.0);
  EXPECT_DOUBLE_EQ(twice(1, 1), 8.0);

  Tensor from_left = add(Tensor::scalar(10.0), m);
  EXPECT_DOUBLE_EQ(from_left(0, 0), 11.0);
  EXPECT_DOUBLE_EQ(from_left(1, 1), 14.0);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, PermutationIsAPermutation) {
  Rng rng(5);
  auto p = rng.permutation(20);
  std::vector<bool> hit(20, false);
  for (auto v : p) {
    ASSERT_LT(v, 20u);
    EXPECT_FALSE(hit[v]);
    hit[v] = true;
  }
}

TEST(Rng, SampleWithoutReplacement) {
  Rng rng(9);
  auto s = rng.sample_without_replacement(10, 5);
  EXPECT_EQ(s.size(), 5u);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i - 1], s[i]);
  EXPECT_THROW(rng.sample_without_replacement(3, 4), ValueError);
}

TEST(Rng, NormalMomentsAreSane) {
  Rng rng(123);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sum_sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.05);
}
