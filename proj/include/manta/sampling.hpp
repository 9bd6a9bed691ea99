#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace manta {

/// Sobol low-discrepancy points in [0,1)^dim, starting at the origin of the
/// unshifted sequence. A nonzero `shift_seed` applies a random digital shift
/// (XOR scrambling of the 64-bit integer coordinates), which preserves the
/// dyadic stratification of every prefix of length 2^k.
class SobolSequence {
 public:
  explicit SobolSequence(std::size_t dim, std::uint64_t shift_seed = 0);

  std::size_t dim() const noexcept { return dim_; }

  /// Next point; the first call returns the (shifted) origin.
  std::vector<double> next();

  /// The first `n` points as rows.
  static std::vector<std::vector<double>> generate(std::size_t dim, std::size_t n,
                                                   std::uint64_t shift_seed = 0);

 private:
  std::size_t dim_;
  std::vector<std::uint64_t> shift_;
  std::uint64_t index_ = 0;
  struct Engine;
  std::vector<std::uint64_t> buffer_;
  std::shared_ptr<Engine> engine_;
};

/// Base-2 radical inverse (van der Corput) of `i`.
double radical_inverse_base2(std::uint64_t i);

/// Map unit-cube points to the box [lower, upper] in place.
void scale_to_box(std::vector<std::vector<double>>& points, const std::vector<double>& lower,
                  const std::vector<double>& upper);

}  // namespace manta
