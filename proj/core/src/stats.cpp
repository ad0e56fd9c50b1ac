#include "efuf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/distributions/students_t.hpp>

#include "efuf/error.hpp"

namespace efuf {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) throw DomainError("standard deviation needs at least two values");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

TTestResult welch_ttest(std::span<const double> sample0, std::span<const double> sample1) {
  if (sample0.size() < 2 || sample1.size() < 2) throw DomainError("t-test needs at least two values per sample");
  const double n0 = static_cast<double>(sample0.size());
  const double n1 = static_cast<double>(sample1.size());
  const double m0 = mean(sample0);
  const double m1 = mean(sample1);
  const double s0 = sample_stddev(sample0);
  const double s1 = sample_stddev(sample1);
  const double a = s0 * s0 / n0;
  const double b = s1 * s1 / n1;
  if (a + b == 0.0) throw DomainError("t-test with zero variance in both samples");
  TTestResult r;
  r.t = (m0 - m1) / std::sqrt(a + b);
  r.df = (a + b) * (a + b) / (a * a / (n0 - 1.0) + b * b / (n1 - 1.0));
  const boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.p = std::min(r.p, 1.0);
  return r;
}

Purity threshold_purity(std::span<const LabeledScore> scores, double threshold) {
  Purity p;
  std::size_t hall_above = 0;
  std::size_t clean_below = 0;
  for (const auto& s : scores) {
    if (s.score > threshold) {
      ++p.n_above;
      if (s.hallucinated == 1) ++hall_above;
    } else if (s.score < threshold) {
      ++p.n_below;
      if (s.hallucinated == 0) ++clean_below;
    }
  }
  if (p.n_above > 0) p.hallucinated_above = static_cast<double>(hall_above) / static_cast<double>(p.n_above);
  if (p.n_below > 0) p.clean_below = static_cast<double>(clean_below) / static_cast<double>(p.n_below);
  return p;
}

std::vector<HistogramBin> histogram(std::span<const double> scores, int bins) {
  if (scores.empty()) throw DomainError("histogram of an empty sample");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return histogram(scores, bins, lo, hi);
}

std::vector<HistogramBin> histogram(std::span<const double> scores, int bins, double lo, double hi) {
  if (scores.empty()) throw DomainError("histogram of an empty sample");
  if (bins < 2) throw DomainError("histogram needs at least two bins");
  if (!(hi > lo)) throw DomainError("histogram range must be nonempty");
  const double width = (hi - lo) / bins;
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  for (int i = 0; i < bins; ++i) {
    out[static_cast<std::size_t>(i)].lo = lo + width * i;
    out[static_cast<std::size_t>(i)].hi = i + 1 == bins ? hi : lo + width * (i + 1);
  }
  for (double s : scores) {
    auto idx = static_cast<long>(std::floor((s - lo) / width));
    idx = std::clamp(idx, 0L, static_cast<long>(bins - 1));
    ++out[static_cast<std::size_t>(idx)].count;
  }
  const double n = static_cast<double>(scores.size());
  for (auto& b : out) b.density = static_cast<double>(b.count) / (n * width);
  return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& bins,
                          const std::vector<std::pair<std::string, std::string>>& provenance) {
  std::string out;
  for (const auto& [k, v] : provenance) out += "# " + k + "=" + v + "\n";
  out += "bin_lo,bin_hi,count,density\n";
  char buf[128];
  for (const auto& b : bins) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%zu,%.17g\n", b.lo, b.hi, b.count, b.density);
    out += buf;
  }
  return out;
}

}  // namespace efuf
