#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "transnet/error.hpp"
#include "transnet/rng.hpp"
#include "transnet/tensor.hpp"

namespace transnet {
namespace {

// Plain triple loop, independent of the blocked kernels.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const auto m = a.shape().n, k = a.shape().c, p = b.shape().c;
  Tensor c({m, p, 1, 1});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * p + j];
      c[i * p + j] = s;
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  const auto r = a.shape().n, c = a.shape().c;
  Tensor t({c, r, 1, 1});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

double max_rel(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

TEST(MakeTensor, BroadcastFillZero) {
  const Tensor t = make_tensor({1, 1, 2, 2}, {0.0});
  EXPECT_EQ(t.size(), 4u);
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(MakeTensor, ValuesLandInChannelOrder) {
  const Tensor t = make_tensor({1, 2, 1, 1}, {3.0, 4.0});
  EXPECT_EQ(t.at(0, 0, 0, 0), 3.0);
  EXPECT_EQ(t.at(0, 1, 0, 0), 4.0);
}

TEST(MakeTensor, CountMismatchNamesBothCounts) {
  try {
    make_tensor({1, 1, 2, 2}, {1.0, 2.0, 3.0});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 4 values, got 3"), std::string::npos);
  }
}

TEST(MakeTensor, RoundTripIsExact) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape4 s{1 + rng.uniform_index(3), 1 + rng.uniform_index(4), 1 + rng.uniform_index(5),
                   1 + rng.uniform_index(5)};
    std::vector<double> values(s.count());
    for (double& v : values) v = rng.normal();
    EXPECT_EQ(make_tensor(s, values).to_vector(), values);
  }
}

TEST(Shape, OverflowIsRejected) {
  const std::size_t big = std::numeric_limits<std::size_t>::max() / 2;
  EXPECT_THROW((Shape4{big, 4, 1, 1}.count()), ShapeError);
}

TEST(Tensor, ReshapeKeepsValuesAndChecksCount) {
  Tensor t({2, 3, 1, 1});
  std::iota(t.values().begin(), t.values().end(), 0.0);
  const Tensor r = t.reshaped({1, 6, 1, 1});
  EXPECT_EQ(r.to_vector(), t.to_vector());
  EXPECT_THROW(t.reshaped({1, 5, 1, 1}), ShapeError);
}

TEST(Tensor, OffsetIsRowMajorNchw) {
  Tensor t({2, 3, 4, 5});
  EXPECT_EQ(t.offset(1, 2, 3, 4), t.size() - 1);
  EXPECT_EQ(t.offset(0, 1, 0, 0), 20u);
  EXPECT_EQ(t.offset(1, 0, 0, 0), 60u);
}

TEST(Matmul, HandExpandedProduct) {
  const Tensor a = make_tensor({2, 2, 1, 1}, {1, 2, 3, 4});
  const Tensor b = make_tensor({2, 1, 1, 1}, {5, 6});
  const Tensor c = matmul(a.as_matrix(), b.as_matrix());
  EXPECT_EQ(c.shape(), (Shape4{2, 1, 1, 1}));
  EXPECT_EQ(c[0], 17.0);
  EXPECT_EQ(c[1], 39.0);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  const Tensor a({2, 3, 1, 1});
  const Tensor b({4, 2, 1, 1});
  EXPECT_THROW(matmul(a.as_matrix(), b.as_matrix()), ShapeError);
}

TEST(Matmul, IdentityIsBitwiseNeutral) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(16), k = 1 + rng.uniform_index(16);
    const Tensor a = sample_normal(rng, {m, k, 1, 1}, 0.0, 3.0);
    Tensor il({m, m, 1, 1}), ir({k, k, 1, 1});
    for (std::size_t i = 0; i < m; ++i) il[i * m + i] = 1.0;
    for (std::size_t i = 0; i < k; ++i) ir[i * k + i] = 1.0;
    EXPECT_EQ(matmul(il.as_matrix(), a.as_matrix()), a);
    EXPECT_EQ(matmul(a.as_matrix(), ir.as_matrix()), a);
  }
}

TEST(Matmul, AgreesWithTripleLoopOnRandomShapes) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(16), k = 1 + rng.uniform_index(16),
                      p = 1 + rng.uniform_index(16);
    const Tensor a = sample_normal(rng, {m, k, 1, 1}, 0.0, 1.0);
    const Tensor b = sample_normal(rng, {k, p, 1, 1}, 0.0, 1.0);
    EXPECT_LT(max_rel(matmul(a.as_matrix(), b.as_matrix()), naive_matmul(a, b)), 1e-12)
        << m << "x" << k << "x" << p;
  }
}

// Error relative to sum_t |a_it| |b_tj|, the scale of the rounding bound for
// a length-k dot product; elementwise relative error is meaningless where the
// products cancel.
double max_scaled_error(const Tensor& got, const Tensor& a, const Tensor& b, double shift = 0.0) {
  const auto m = a.shape().n, k = a.shape().c, p = b.shape().c;
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double exact = shift, scale = std::abs(shift);
      for (std::size_t t = 0; t < k; ++t) {
        exact += a[i * k + t] * b[t * p + j];
        scale += std::abs(a[i * k + t] * b[t * p + j]);
      }
      worst = std::max(worst, std::abs(got[i * p + j] - exact) / std::max(scale, 1e-300));
    }
  }
  return worst;
}

TEST(Gemm, TransposedVariantsAndAccumulateAgreeWithOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(40), k = 1 + rng.uniform_index(200),
                      n = 1 + rng.uniform_index(600);
    const Tensor a = sample_normal(rng, {m, k, 1, 1}, 0.0, 1.0);
    const Tensor b = sample_normal(rng, {k, n, 1, 1}, 0.0, 1.0);
    Tensor c1({m, n, 1, 1});
    gemm_nn(a.as_matrix(), b.as_matrix(), c1.as_matrix());
    EXPECT_LT(max_scaled_error(c1, a, b), 1e-14);

    const Tensor bt = transpose(b);
    Tensor c2({m, n, 1, 1});
    gemm_nt(a.as_matrix(), bt.as_matrix(), c2.as_matrix());
    EXPECT_LT(max_scaled_error(c2, a, b), 1e-14);

    const Tensor at = transpose(a);
    Tensor c3({m, n, 1, 1}, 1.0);
    gemm_tn(at.as_matrix(), b.as_matrix(), c3.as_matrix(), true);
    EXPECT_LT(max_scaled_error(c3, a, b, 1.0), 1e-14);
  }
}

TEST(SampleNormal, ZeroStdevGivesConstant) {
  Rng rng(1);
  const Tensor t = sample_normal(rng, {2, 3, 4, 5}, 1.25, 0.0);
  for (double v : t.values()) EXPECT_EQ(v, 1.25);
}

TEST(SampleNormal, NegativeStdevThrows) {
  Rng rng(1);
  EXPECT_THROW(sample_normal(rng, {1, 1, 1, 1}, 0.0, -1.0), ParameterError);
}

TEST(SampleNormal, SameSeedIsBitIdentical) {
  Rng a(42), b(42);
  EXPECT_EQ(sample_normal(a, {3, 4, 5, 6}, 0.0, 1.0), sample_normal(b, {3, 4, 5, 6}, 0.0, 1.0));
}

TEST(SampleNormal, MomentsOfAMillionDraws) {
  Rng rng(123);
  const Tensor t = sample_normal(rng, {1000, 1000, 1, 1}, 0.0, 1.0);
  double mean = 0.0;
  for (double v : t.values()) mean += v;
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (double v : t.values()) var += (v - mean) * (v - mean);
  const double stdev = std::sqrt(var / static_cast<double>(t.size() - 1));
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(stdev, 1.0, 0.01);
}

TEST(Rng, UniformStaysInUnitInterval) {
  Rng rng(9);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  Rng rng(10);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(3);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  shuffle(std::span<int>(v), rng);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 100u);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(mix_seed(7, 0), mix_seed(7, 1));
  EXPECT_NE(mix_seed(7, 0), mix_seed(8, 0));
  Rng a(mix_seed(7, 0)), b(mix_seed(7, 1));
  EXPECT_NE(a.next_u64(), b.next_u64());
}

}  // namespace
}  // namespace transnet
