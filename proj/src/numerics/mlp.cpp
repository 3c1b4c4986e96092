#include "claire/numerics/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "claire/error.hpp"

namespace claire {

double leaky_relu(double v, double slope) { return v > 0.0 ? v : slope * v; }

namespace {

Mlp::Layer make_layer(std::size_t fan_in, std::size_t fan_out, Rng& rng, const char* tag) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix w(fan_in, fan_out);
  for (auto& v : w.data()) v = bound * (2.0 * rng.uniform() - 1.0);
  Matrix b(1, fan_out);
  for (auto& v : b.data()) v = bound * (2.0 * rng.uniform() - 1.0);
  return {ad::Parameter(std::move(w), std::string(tag) + ".weight"),
          ad::Parameter(std::move(b), std::string(tag) + ".bias")};
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row_span(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

}  // namespace

Mlp::Mlp(const MlpConfig& config, Rng& rng) : config_(config) {
  if (!(config.negative_slope > 0.0 && config.negative_slope < 1.0)) {
    throw ConfigError("LeakyReLU negative slope must lie in (0, 1)");
  }
  if (config.input == 0 || config.hidden == 0 || config.output == 0) {
    throw ConfigError("Mlp dimensions must be positive");
  }
  layers_.push_back(make_layer(config.input, config.hidden, rng, "fc1"));
  layers_.push_back(make_layer(config.hidden, config.output, rng, "fc2"));
}

Mlp::Mlp(const MlpConfig& config, std::vector<Layer> layers)
    : config_(config), layers_(std::move(layers)) {
  if (layers_.size() != 2) throw ShapeError("Mlp expects exactly two layers");
  const std::size_t dims[3] = {config.input, config.hidden, config.output};
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& w = layers_[i].weight.value;
    const auto& b = layers_[i].bias.value;
    if (w.rows() != dims[i] || w.cols() != dims[i + 1] || b.rows() != 1 || b.cols() != dims[i + 1]) {
      throw ShapeError("Mlp layer " + std::to_string(i) + " does not chain: weight " +
                       w.shape_string() + ", bias " + b.shape_string());
    }
    layers_[i].weight.grad = Matrix(w.rows(), w.cols());
    layers_[i].bias.grad = Matrix(b.rows(), b.cols());
  }
}

void Mlp::check_input(std::size_t cols) const {
  if (cols != config_.input) {
    throw ShapeError("Mlp expects " + std::to_string(config_.input) + " input columns, got " +
                     std::to_string(cols));
  }
}

Matrix Mlp::logits(const Matrix& x) const {
  check_input(x.cols());
  Matrix h = matmul(x, layers_[0].weight.value);
  add_row_bias(h, layers_[0].bias.value);
  for (auto& v : h.data()) v = leaky_relu(v, config_.negative_slope);
  Matrix out = matmul(h, layers_[1].weight.value);
  add_row_bias(out, layers_[1].bias.value);
  return out;
}

Matrix Mlp::forward(const Matrix& x) const {
  return apply_output_activation(logits(x), config_.output_activation);
}

ad::Var Mlp::logits(ad::Tape& tape, ad::Var x) {
  check_input(x.cols());
  ad::Var h = ad::add_bias(ad::matmul(x, tape.parameter(layers_[0].weight)),
                           tape.parameter(layers_[0].bias));
  h = ad::leaky_relu(h, config_.negative_slope);
  return ad::add_bias(ad::matmul(h, tape.parameter(layers_[1].weight)),
                      tape.parameter(layers_[1].bias));
}

ad::Var Mlp::forward(ad::Tape& tape, ad::Var x) {
  return apply_output_activation(logits(tape, x), config_.output_activation);
}

std::vector<ad::Parameter*> Mlp::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

ad::Var apply_output_activation(ad::Var logits, OutputActivation act) {
  switch (act) {
    case OutputActivation::identity:
      return logits;
    case OutputActivation::sigmoid:
      return ad::sigmoid(logits);
    case OutputActivation::softmax:
      return ad::softmax_rows(logits);
  }
  return logits;
}

Matrix apply_output_activation(const Matrix& logits, OutputActivation act) {
  if (act == OutputActivation::identity) return logits;
  Matrix out = logits;
  if (act == OutputActivation::sigmoid) {
    for (auto& v : out.data()) {
      v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return out;
  }
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (auto& v : row) v /= z;
  }
  return out;
}

}  // namespace claire
