#pragma once

#include <cstddef>
#include <vector>

#include "claire/numerics/autodiff.hpp"
#include "claire/numerics/matrix.hpp"
#include "claire/numerics/random.hpp"

namespace claire {

enum class OutputActivation { identity, sigmoid, softmax };

struct MlpConfig {
  std::size_t input = 1;
  std::size_t hidden = 32;
  std::size_t output = 1;
  OutputActivation output_activation = OutputActivation::identity;
  double negative_slope = 0.01;
};

// Two fully connected layers with a LeakyReLU between them.
// Weights are stored [fan_in x fan_out] so a batch is X * W + b.
class Mlp {
 public:
  struct Layer {
    ad::Parameter weight;
    ad::Parameter bias;
  };

  Mlp() = default;
  Mlp(const MlpConfig& config, Rng& rng);
  // Restores a network from explicit layers; validates the dimension chain.
  Mlp(const MlpConfig& config, std::vector<Layer> layers);

  Matrix forward(const Matrix& x) const;
  // Output before the output activation.
  Matrix logits(const Matrix& x) const;

  ad::Var forward(ad::Tape& tape, ad::Var x);
  ad::Var logits(ad::Tape& tape, ad::Var x);

  // Pointers are invalidated if the Mlp is moved or copied.
  std::vector<ad::Parameter*> parameters();
  const std::vector<Layer>& layers() const { return layers_; }
  const MlpConfig& config() const { return config_; }
  std::size_t input_dim() const { return config_.input; }
  std::size_t output_dim() const { return config_.output; }

 private:
  void check_input(std::size_t cols) const;
  MlpConfig config_;
  std::vector<Layer> layers_;
};

double leaky_relu(double v, double slope);
ad::Var apply_output_activation(ad::Var logits, OutputActivation act);
Matrix apply_output_activation(const Matrix& logits, OutputActivation act);

}  // namespace claire
