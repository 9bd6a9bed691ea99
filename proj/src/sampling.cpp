#include "manta/sampling.hpp"

#include <boost/random/sobol.hpp>

#include <random>
#include <stdexcept>

namespace manta {

struct SobolSequence::Engine {
  explicit Engine(std::size_t dim) : gen(dim) {}
  boost::random::sobol gen;
};

SobolSequence::SobolSequence(std::size_t dim, std::uint64_t shift_seed)
    : dim_(dim), shift_(dim, 0), engine_(std::make_shared<Engine>(dim)) {
  if (dim == 0) throw std::invalid_argument("SobolSequence: dim must be positive");
  if (shift_seed != 0) {
    std::mt19937_64 rng(shift_seed);
    for (auto& s : shift_) s = rng();
  }
}

std::vector<double> SobolSequence::next() {
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  std::vector<double> point(dim_);
  for (std::size_t d = 0; d < dim_; ++d) {
    // boost's engine omits the leading zero point of the standard sequence.
    const std::uint64_t raw = index_ == 0 ? 0 : static_cast<std::uint64_t>(engine_->gen());
    point[d] = static_cast<double>((raw ^ shift_[d]) >> 11) * kScale;
  }
  ++index_;
  return point;
}

std::vector<std::vector<double>> SobolSequence::generate(std::size_t dim, std::size_t n,
                                                         std::uint64_t shift_seed) {
  SobolSequence seq(dim, shift_seed);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(seq.next());
  return out;
}

double radical_inverse_base2(std::uint64_t i) {
  double result = 0.0;
  double f = 0.5;
  while (i != 0) {
    if (i & 1U) result += f;
    i >>= 1U;
    f *= 0.5;
  }
  return result;
}

void scale_to_box(std::vector<std::vector<double>>& points, const std::vector<double>& lower,
                  const std::vector<double>& upper) {
  for (auto& p : points) {
    if (p.size() != lower.size() || p.size() != upper.size())
      throw std::invalid_argument("scale_to_box: dimension mismatch");
    for (std::size_t d = 0; d < p.size(); ++d) p[d] = lower[d] + (upper[d] - lower[d]) * p[d];
  }
}

}  // namespace manta
