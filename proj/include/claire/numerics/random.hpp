#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "claire/numerics/matrix.hpp"

namespace claire {

// Seeded generator. Substreams for independent components are derived with
// derive_seed so that adding a consumer never perturbs another one's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::size_t categorical(std::span<const double> probabilities);
  std::size_t index(std::size_t n);
  Matrix normal_matrix(std::size_t rows, std::size_t cols);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// splitmix64 mix of (seed, stream)
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace claire
