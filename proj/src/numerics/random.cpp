#include "claire/numerics/random.hpp"

#include "claire/error.hpp"

namespace claire {

std::size_t Rng::categorical(std::span<const double> probabilities) {
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    if (u < acc) return i;
  }
  if (probabilities.empty()) throw ConfigError("categorical draw from empty distribution");
  return probabilities.size() - 1;
}

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> d(0, n - 1);
  return d(engine_);
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = normal();
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace claire
