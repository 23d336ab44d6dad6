#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "attnlab/linalg.hpp"

using namespace attnlab;

namespace {

// Textbook triple loop over raw row-major storage.
std::vector<double> naive_product(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                                  std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * m + j];
      c[i * m + j] = s;
    }
  return c;
}

}  // namespace

TEST(Mat, ConstructionAndAccess) {
  const Mat m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.shape(), "2x3");
  EXPECT_EQ(m.transpose()(2, 1), 6.0);
  EXPECT_EQ(Mat::identity(3)(1, 1), 1.0);
  EXPECT_EQ(Mat::identity(3)(0, 1), 0.0);
  const Vec y{7.0, 8.0};
  const Mat b = Mat::broadcast_row(3, y);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b(i, 0), 7.0);
    EXPECT_EQ(b(i, 1), 8.0);
  }
}

TEST(Mat, RejectsBadInput) {
  EXPECT_THROW(Mat(0, 3), Error);
  EXPECT_THROW(Mat(2, 2, Vec{1.0, 2.0, 3.0}), Error);
  EXPECT_THROW(Mat(1, 1, std::numeric_limits<double>::quiet_NaN()), Error);
  EXPECT_THROW((Mat{{1.0, 2.0}, {3.0}}), Error);
  EXPECT_THROW((Mat{{1.0, std::numeric_limits<double>::infinity()}}), Error);
  Mat a = Mat::ones(2, 2);
  EXPECT_THROW(a += Mat::ones(2, 3), Error);
  EXPECT_THROW(a *= std::numeric_limits<double>::infinity(), Error);
}

TEST(MatMul, FrozenProduct) {
  const Mat c = mat_mul(Mat{{1, 2}, {3, 4}}, Mat{{5, 6}, {7, 8}});
  EXPECT_EQ(c, (Mat{{19, 22}, {43, 50}}));
}

TEST(MatMul, MatchesTripleLoopOracle) {
  for (std::uint64_t t = 0; t < 200; ++t) {
    RngStream rng(99, t);
    const std::size_t n = rng.uniform_int(1, 7), k = rng.uniform_int(1, 7), m = rng.uniform_int(1, 7);
    const Mat a = sample_uniform_matrix(n, k, 3.0, rng);
    const Mat b = sample_uniform_matrix(k, m, 3.0, rng);
    const Mat c = mat_mul(a, b);
    const auto oracle = naive_product({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, n, k, m);
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_EQ(c.data()[i], oracle[i]);
  }
}

TEST(MatMul, ShapeMismatchNamesShapes) {
  try {
    mat_mul(Mat::ones(2, 3), Mat::ones(2, 3));
    FAIL() << "expected throw";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("2x3 by 2x3"), std::string::npos);
  }
}

TEST(Norms, FrozenValues) {
  const Mat a{{1, -2}, {3, -4}};
  EXPECT_EQ(norm_inf(a), 4.0);
  EXPECT_EQ(norm_l1(a), 10.0);
  EXPECT_EQ(max_abs_diff(a, Mat::zeros(2, 2)), 4.0);
  EXPECT_EQ(norm_inf(Mat::zeros(3, 3)), 0.0);
}

TEST(Norms, L1IsSubmultiplicative) {
  for (std::uint64_t t = 0; t < 500; ++t) {
    RngStream rng(5, t);
    const std::size_t n = rng.uniform_int(1, 6), k = rng.uniform_int(1, 6), m = rng.uniform_int(1, 6);
    const Mat a = sample_uniform_matrix(n, k, 1.0, rng), b = sample_uniform_matrix(k, m, 1.0, rng);
    EXPECT_LE(norm_l1(mat_mul(a, b)), norm_l1(a) * norm_l1(b) * (1 + 1e-12));
  }
}

TEST(Norms, InfIsNotSubmultiplicative) {
  const Mat ones = Mat::ones(2, 2);
  EXPECT_EQ(norm_inf(mat_mul(ones, ones)), 2.0);
  EXPECT_EQ(norm_inf(ones) * norm_inf(ones), 1.0);
}

TEST(Rng, SplitMixFrozen) {
  // first output of the reference SplitMix64 generator with state 0
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  static_assert(splitmix64(1) != splitmix64(0));
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  RngStream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(x, d.next_u64());
  EXPECT_EQ(RngStream::algorithm, "mt19937_64+splitmix64");
}

TEST(Rng, RangesAndScalePairing) {
  RngStream r(1, 0), s1(7, 0), s2(7, 0);
  std::set<std::size_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const auto k = r.uniform_int(3, 5);
    EXPECT_GE(k, 3u);
    EXPECT_LE(k, 5u);
    seen.insert(k);
    EXPECT_EQ(s1.symmetric(2.0), 2.0 * s2.symmetric(1.0));
  }
  EXPECT_EQ(seen.size(), 3u);
  EXPECT_THROW(r.uniform_int(5, 3), Error);
}

TEST(Rng, SampledMatricesRespectScale) {
  RngStream r(1, 1);
  const Mat m = sample_uniform_matrix(20, 20, 0.25, r);
  EXPECT_LE(norm_inf(m), 0.25);
  EXPECT_GT(norm_inf(m), 0.2);
  EXPECT_EQ(norm_inf(sample_uniform_matrix(3, 3, 0.0, r)), 0.0);
  EXPECT_THROW(sample_uniform_matrix(2, 2, -1.0, r), Error);
}

TEST(FormatReal, ShortestRoundTrip) {
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(format_real(1.0), "1");
  EXPECT_EQ(format_real(-2.5e-10), "-2.5e-10");
  RngStream r(3, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = r.symmetric(1e6);
    EXPECT_EQ(std::stod(format_real(v)), v);
  }
}
