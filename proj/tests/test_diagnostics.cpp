#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "jensenkv/diagnostics.hpp"
#include "jensenkv/rng.hpp"

using namespace jensenkv;

TEST(AttentionMass, SpecExamples) {
  {
    std::vector<double> row(8, 0.125);
    const auto [ps, pr] = attention_mass(row, 4);
    EXPECT_NEAR(ps, 0.5, 1e-12);
    EXPECT_NEAR(pr, 0.5, 1e-12);
  }
  {
    std::vector<double> row{0.3, 0.7};
    const auto [ps, pr] = attention_mass(row, 0);
    EXPECT_EQ(ps, 0.0);
    EXPECT_NEAR(pr, 1.0, 1e-12);
  }
  {
    std::vector<double> row{0.7, 0.1, 0.2};
    const auto [ps, pr] = attention_mass(row, 2);
    EXPECT_NEAR(ps, 0.8, 1e-12);
    EXPECT_NEAR(pr, 0.2, 1e-12);
  }
}

TEST(AttentionMass, RejectsUnnormalizedRows) {
  std::vector<double> row{0.5, 0.6};
  EXPECT_THROW(attention_mass(row, 1), std::invalid_argument);
  std::vector<double> ok{0.5, 0.500001};
  EXPECT_NO_THROW(attention_mass(ok, 1));
}

TEST(AttentionMassShift, BasicsAndAntisymmetry) {
  MatrixD ref(2, 4), test(2, 4);
  const double refs[2][4] = {{0.25, 0.25, 0.25, 0.25}, {0.4, 0.1, 0.3, 0.2}};
  const double tests[2][4] = {{0.3, 0.3, 0.2, 0.2}, {0.4, 0.1, 0.3, 0.2}};
  for (int m = 0; m < 2; ++m)
    for (int i = 0; i < 4; ++i) {
      ref.at(m, i) = refs[m][i];
      test.at(m, i) = tests[m][i];
    }
  const auto shift = attention_mass_shift(ref, test, 2);
  EXPECT_NEAR(shift[0], 0.1, 1e-12);
  EXPECT_NEAR(shift[1], 0.0, 1e-12);
  const auto back = attention_mass_shift(test, ref, 2);
  EXPECT_NEAR(back[0], -shift[0], 1e-12);

  MatrixD bad(1, 4);
  EXPECT_THROW(attention_mass_shift(ref, bad, 2), std::invalid_argument);
}

TEST(Jsd, PinnedValues) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_EQ(jensen_shannon_divergence(p, p), 0.0);

  const std::vector<double> a{1.0, 0.0};
  const std::vector<double> b{0.0, 1.0};
  EXPECT_NEAR(jensen_shannon_divergence(a, b), 1.0, 1e-12);

  // Frozen from independent evaluation.
  EXPECT_NEAR(jensen_shannon_divergence(p, a), 0.311278124459132863909695792039, 1e-14);
}

TEST(Jsd, SymmetricBoundedAndRejectsNegatives) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 16);
    std::vector<double> p(static_cast<std::size_t>(n)), q(static_cast<std::size_t>(n));
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      p[static_cast<std::size_t>(i)] = rng.uniform01() + 1e-12;
      q[static_cast<std::size_t>(i)] = rng.uniform01() + 1e-12;
      sp += p[static_cast<std::size_t>(i)];
      sq += q[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < n; ++i) {
      p[static_cast<std::size_t>(i)] /= sp;
      q[static_cast<std::size_t>(i)] /= sq;
    }
    const double j1 = jensen_shannon_divergence(p, q);
    const double j2 = jensen_shannon_divergence(q, p);
    EXPECT_NEAR(j1, j2, 1e-13);
    EXPECT_GE(j1, 0.0);
    EXPECT_LE(j1, 1.0);
  }
  const std::vector<double> neg{-0.1, 1.1};
  const std::vector<double> ok{0.5, 0.5};
  EXPECT_THROW(jensen_shannon_divergence(neg, ok), std::invalid_argument);
}

TEST(OutputMse, MatchesBruteForce) {
  EXPECT_EQ(attention_output_mse(MatrixF(2, 3, 1.0f), MatrixF(2, 3, 1.0f)), 0.0);
  EXPECT_DOUBLE_EQ(attention_output_mse(MatrixF(2, 3, 1.0f), MatrixF(2, 3, 3.0f)), 4.0);

  Rng rng(6);
  MatrixF a(5, 7), b(5, 7);
  for (auto& v : a.data) v = static_cast<float>(rng.normal());
  for (auto& v : b.data) v = static_cast<float>(rng.normal());
  double brute = 0.0;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 7; ++c) {
      const double diff = static_cast<double>(a.at(r, c)) - static_cast<double>(b.at(r, c));
      brute += diff * diff;
    }
  brute /= 35.0;
  EXPECT_NEAR(attention_output_mse(a, b), brute, 1e-12);
  EXPECT_THROW(attention_output_mse(a, MatrixF(5, 6)), std::invalid_argument);
}

TEST(Summarize, PercentileConvention) {
  {
    const std::vector<double> v{3.0, 1.0, 2.0};
    const auto s = summarize(v);
    EXPECT_EQ(s.median, 2.0);
    EXPECT_NEAR(s.mean, 2.0, 1e-12);
  }
  {
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
    const auto s = summarize(v);
    EXPECT_EQ(s.p95, 95.0);
    EXPECT_EQ(s.p5, 5.0);
    EXPECT_EQ(s.median, 50.0);
  }
  {
    const std::vector<double> v(7, 4.25);
    const auto s = summarize(v);
    EXPECT_EQ(s.p5, 4.25);
    EXPECT_EQ(s.p95, 4.25);
    EXPECT_EQ(s.median, 4.25);
    std::uint64_t total = 0;
    for (auto c : s.hist_counts) total += c;
    EXPECT_EQ(total, 7u);
  }
  EXPECT_THROW(summarize(std::vector<double>{}), std::invalid_argument);
}

TEST(Summarize, HistogramCoversRange) {
  Rng rng(8);
  std::vector<double> v(1000);
  for (auto& x : v) x = rng.normal();
  const auto s = summarize(v, 16);
  ASSERT_EQ(s.hist_edges.size(), 17u);
  ASSERT_EQ(s.hist_counts.size(), 16u);
  std::uint64_t total = 0;
  for (auto c : s.hist_counts) total += c;
  EXPECT_EQ(total, 1000u);
  EXPECT_EQ(s.hist_edges.front(), s.min);
  EXPECT_NEAR(s.hist_edges.back(), s.max, 1e-9);
}
