#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "claire/numerics/autodiff.hpp"
#include "claire/numerics/mlp.hpp"
#include "claire/scm/dataset.hpp"

namespace claire::augment {

struct VaeConfig {
  std::size_t features = 1;
  std::size_t num_sensitive = 2;
  std::size_t latent_dim = 10;
  std::size_t hidden = 32;
  Task task = Task::regression;
  double negative_slope = 0.01;
};

// Encoder (x, y) -> (mean, log variance) of H; decoder (H, one-hot s) -> (x, y).
// The sensitive value never reaches the encoder.
class Vae {
 public:
  Vae(const VaeConfig& config, Rng& rng);
  Vae(const VaeConfig& config, Mlp encoder, Mlp decoder);

  struct Posterior {
    Matrix mean;
    Matrix log_var;
  };
  Posterior encode(const Matrix& x, std::span<const double> y) const;
  // Columns [x | y]; y is a probability for classification.
  Matrix decode(const Matrix& h, std::span<const std::size_t> s) const;
  Matrix decode(const Matrix& h, std::size_t s) const;

  // Taped versions. encode returns [mean | log_var]; decode_logits returns
  // the decoder output before the target's link.
  ad::Var encode(ad::Tape& tape, const Matrix& xy);
  ad::Var decode_logits(ad::Tape& tape, ad::Var h, std::span<const std::size_t> s);

  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }
  const VaeConfig& config() const { return config_; }
  std::vector<ad::Parameter*> parameters();

  nlohmann::json to_json() const;
  static Vae from_json(const nlohmann::json& j);

 private:
  VaeConfig config_;
  Mlp encoder_;
  Mlp decoder_;
};

Matrix join_xy(const Matrix& x, std::span<const double> y);
Matrix one_hot(std::span<const std::size_t> s, std::size_t k);

// Mean over rows of the negative log-likelihood of (x, y) given H and s plus
// the KL divergence of the diagonal posterior from N(0, I). The unit-variance
// Gaussian likelihood keeps its log-normaliser; a binary target uses
// cross-entropy. eps [n x latent] is the reparameterisation noise.
ad::Var elbo_loss(ad::Tape& tape, Vae& vae, const Matrix& x, std::span<const double> y,
                  std::span<const std::size_t> s, const Matrix& eps);

// Same loss, also returning the taped posterior mean for the penalties.
struct ElboParts {
  ad::Var loss;
  ad::Var mean;
  ad::Var reconstruction;
  ad::Var kl;
};
ElboParts elbo_parts(ad::Tape& tape, Vae& vae, const Matrix& x, std::span<const double> y,
                     std::span<const std::size_t> s, const Matrix& eps);

// (1/N_p) * sum over unordered group pairs of RBF MMD between the rows of
// `embedding` belonging to each group.
ad::Var group_mmd_penalty(ad::Var embedding, const std::vector<std::vector<std::size_t>>& groups,
                          double bandwidth);

// (1/|S|) * sum_s mean over group s of log P(h = s), from discriminator logits.
ad::Var adversarial_term(ad::Var discriminator_logits, std::span<const std::size_t> s,
                         const std::vector<std::vector<std::size_t>>& groups);

enum class Mode {
  plain,       // ELBO only
  mmd,         // CLAIRE-M
  adversarial  // CLAIRE-A
};

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct TrainConfig {
  Mode mode = Mode::mmd;
  double alpha = 2.0;        // MMD weight
  double alpha_prime = 1.0;  // adversarial weight
  std::size_t epochs = 500;
  double lr = 1e-3;
  std::size_t latent_dim = 10;
  std::size_t hidden = 32;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> loss;         // total objective per epoch (generator side)
  std::vector<double> penalty;      // fairness term per epoch (unweighted)
};

struct Trained {
  Vae vae;
  TrainTrace trace;
};

Trained train(const Dataset& data, const TrainConfig& config);
inline Trained train_claire_m(const Dataset& data, TrainConfig config) {
  config.mode = Mode::mmd;
  return train(data, config);
}
inline Trained train_claire_a(const Dataset& data, TrainConfig config) {
  config.mode = Mode::adversarial;
  return train(data, config);
}

// The fairness penalty of the posterior means for the given mode (MMD with
// the median-heuristic bandwidth, or nothing for the others).
double embedding_mmd(const Vae& vae, const Dataset& data);

// Counterfactuals for every instance and every sensitive value, each the
// mean of K decodes of posterior draws.
struct AugmentedSet {
  std::vector<Matrix> x;               // x[s'] is n x d
  std::vector<std::vector<double>> y;  // y[s'] has length n

  std::size_t num_sensitive() const { return x.size(); }
  std::size_t size() const { return x.empty() ? 0 : x.front().rows(); }
};

// Elementwise mean of equally shaped decodes.
Matrix aggregate_mean(std::span<const Matrix> draws);

AugmentedSet generate_counterfactuals(const Vae& vae, const Dataset& data, std::size_t k,
                                      std::uint64_t seed);

// Columns: id, s_prime, feature names..., y.
void write_counterfactual_csv(std::ostream& out, const AugmentedSet& set,
                              std::span<const std::string> feature_names);

}  // namespace claire::augment
