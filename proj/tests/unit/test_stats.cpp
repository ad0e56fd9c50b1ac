#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "efuf/error.hpp"
#include "efuf/rng.hpp"
#include "efuf/stats.hpp"
#include "oracles.hpp"

namespace {

TEST(Welch, IdenticalSamples) {
  const std::vector<double> a{1, 2, 3}, b{3, 1, 2};
  const auto r = efuf::welch_ttest(a, b);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_DOUBLE_EQ(r.p, 1.0);
}

TEST(Welch, MatchesGslOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    efuf::Rng r(seed, "welch");
    const std::size_t na = 5 + r.below(40), nb = 5 + r.below(40);
    std::vector<double> a(na), b(nb);
    for (auto& x : a) x = r.normal(10.0, 2.0);
    for (auto& x : b) x = r.normal(10.0 + 0.3 * static_cast<double>(seed), 1.0 + 0.2 * static_cast<double>(seed));
    const auto got = efuf::welch_ttest(a, b);
    const auto ref = oracle::gsl_welch(a, b);
    EXPECT_NEAR(got.t, ref.t, 1e-8);
    EXPECT_NEAR(got.df, ref.df, 1e-8);
    EXPECT_NEAR(got.p, ref.p, 1e-8);
  }
}

TEST(Welch, SymmetricUpToSign) {
  const std::vector<double> a{1, 4, 2, 8}, b{3, 3.5, 9, 7, 6};
  const auto ab = efuf::welch_ttest(a, b);
  const auto ba = efuf::welch_ttest(b, a);
  EXPECT_DOUBLE_EQ(ab.t, -ba.t);
  EXPECT_DOUBLE_EQ(ab.p, ba.p);
}

TEST(Welch, DegenerateInputs) {
  EXPECT_THROW(efuf::welch_ttest(std::vector<double>{2, 2}, std::vector<double>{2, 2, 2}), efuf::DomainError);
  EXPECT_THROW(efuf::welch_ttest(std::vector<double>{1}, std::vector<double>{2, 3}), efuf::DomainError);
}

TEST(Purity, Examples) {
  const std::vector<efuf::LabeledScore> s{{35, 1}, {35, 0}, {20, 0}, {20, 1}};
  EXPECT_DOUBLE_EQ(*efuf::threshold_purity(s, 32).hallucinated_above, 0.5);
  EXPECT_DOUBLE_EQ(*efuf::threshold_purity(s, 23).clean_below, 0.5);
  const std::vector<efuf::LabeledScore> sep{{40, 0}, {41, 0}, {10, 1}};
  EXPECT_EQ(*efuf::threshold_purity(sep, 32).hallucinated_above, 0.0);
  EXPECT_FALSE(efuf::threshold_purity(sep, 50).hallucinated_above.has_value());
  EXPECT_FALSE(efuf::threshold_purity(sep, 5).clean_below.has_value());
}

TEST(Purity, MatchesRecount) {
  efuf::Rng r(3);
  std::vector<efuf::LabeledScore> s;
  for (int i = 0; i < 1000; ++i) {
    const int h = r.uniform() < 0.3 ? 1 : 0;
    s.push_back({h ? r.normal(22, 5) : r.normal(34, 5), h});
  }
  for (double t : {23.0, 27.5, 32.0}) {
    const auto got = efuf::threshold_purity(s, t);
    const auto ref = oracle::recount_purity(s, t);
    EXPECT_EQ(*got.hallucinated_above, ref.hallucinated_above);
    EXPECT_EQ(*got.clean_below, ref.clean_below);
  }
}

TEST(Histogram, Examples) {
  const auto one = efuf::histogram(std::vector<double>{1, 1, 1}, 2);
  EXPECT_EQ(one[0].count + one[1].count, 3u);
  EXPECT_TRUE(one[0].count == 3 || one[1].count == 3);
  std::vector<double> grid(100);
  for (int i = 0; i < 100; ++i) grid[static_cast<std::size_t>(i)] = i + 0.5;
  for (const auto& b : efuf::histogram(grid, 10)) EXPECT_EQ(b.count, 10u);
  EXPECT_THROW(efuf::histogram(std::vector<double>{}, 3), efuf::DomainError);
  EXPECT_THROW(efuf::histogram(grid, 1), efuf::DomainError);
}

TEST(Histogram, MatchesRecountAndDensityIntegrates) {
  efuf::Rng r(8);
  std::vector<double> xs(2000);
  for (auto& x : xs) x = r.normal(28, 3);
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const auto bins = efuf::histogram(xs, 25);
  const auto ref = oracle::recount_bins(xs, 25, *lo, *hi);
  std::size_t total = 0;
  double mass = 0.0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    EXPECT_EQ(bins[i].count, ref[i]) << "bin " << i;
    total += bins[i].count;
    mass += bins[i].density * (bins[i].hi - bins[i].lo);
  }
  EXPECT_EQ(total, xs.size());
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(Histogram, CsvHeaderAndProvenance) {
  const auto csv = efuf::histogram_csv(efuf::histogram(std::vector<double>{1, 2, 3, 4}, 2), {{"seed", "7"}});
  EXPECT_EQ(csv.rfind("# seed=7\nbin_lo,bin_hi,count,density\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Moments, MeanAndStd) {
  const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(efuf::mean(x), 5.0);
  EXPECT_NEAR(efuf::sample_stddev(x), std::sqrt(32.0 / 7.0), 1e-12);
}

}  // namespace
