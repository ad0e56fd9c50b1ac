#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace efuf {

/// Derives an independent seed for a named consumer of the run seed.
std::uint64_t substream_seed(std::uint64_t run_seed, std::string_view name);

/// Seeded generator whose draws are identical on every platform: only the
/// raw mt19937_64 bit stream is used, never the library distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t run_seed, std::string_view stream)
      : engine_(substream_seed(run_seed, stream)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Unit vector drawn from an isotropic Gaussian.
std::vector<double> random_unit_vector(Rng& rng, std::size_t dim);

}  // namespace efuf
