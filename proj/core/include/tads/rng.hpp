#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace tads {

// Mixes a label into a seed. Used to derive independent, named streams from
// one master seed: derive_seed(master, "fdo/bernoulli").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

// A labelled pseudo-random stream. The engine is mt19937_64, whose output is
// fixed by the standard; every conversion to floating point is done here
// rather than through <random> distributions, whose algorithms are
// implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  // Child stream whose seed depends on this stream's seed, label and `label`,
  // but not on how many draws have been taken from this stream.
  RngStream derive(std::string_view label) const;

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tads
