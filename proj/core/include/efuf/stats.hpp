#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace efuf {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator).
double sample_stddev(std::span<const double> xs);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

/// Welch's unequal-variance t-test; t is positive when mean(sample0) is larger.
/// DomainError for samples smaller than 2 or zero combined variance.
TTestResult welch_ttest(std::span<const double> sample0, std::span<const double> sample1);

struct LabeledScore {
  double score = 0.0;
  int hallucinated = 0;
};

struct Purity {
  /// Share of hallucinated objects among scores above T; unset if none above.
  std::optional<double> hallucinated_above;
  /// Share of non-hallucinated objects among scores below T; unset if none below.
  std::optional<double> clean_below;
  std::size_t n_above = 0;
  std::size_t n_below = 0;
};

Purity threshold_purity(std::span<const LabeledScore> scores, double threshold);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double density = 0.0;  // count / (n * width)
};

/// Equal-width histogram over [min, max]; the last bin is closed. A zero
/// range is widened to [v - 0.5, v + 0.5]. DomainError on empty input or
/// fewer than 2 bins.
std::vector<HistogramBin> histogram(std::span<const double> scores, int bins);
/// Same over a fixed [lo, hi]; values outside are clamped into the end bins.
std::vector<HistogramBin> histogram(std::span<const double> scores, int bins, double lo, double hi);

/// Header `bin_lo,bin_hi,count,density`, preceded by `# key=value` comment
/// lines for each provenance entry.
std::string histogram_csv(const std::vector<HistogramBin>& bins,
                          const std::vector<std::pair<std::string, std::string>>& provenance = {});

}  // namespace efuf
