#include "claire/numerics/mlp_io.hpp"

#include "claire/error.hpp"

namespace claire {

namespace {

std::string activation_name(OutputActivation a) {
  switch (a) {
    case OutputActivation::identity:
      return "identity";
    case OutputActivation::sigmoid:
      return "sigmoid";
    case OutputActivation::softmax:
      return "softmax";
  }
  return "identity";
}

OutputActivation activation_from(const std::string& s) {
  if (s == "identity") return OutputActivation::identity;
  if (s == "sigmoid") return OutputActivation::sigmoid;
  if (s == "softmax") return OutputActivation::softmax;
  throw ConfigError("unknown output activation '" + s + "'");
}

}  // namespace

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  try {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed matrix: ") + e.what());
  }
}

nlohmann::json mlp_to_json(const Mlp& net) {
  const auto& c = net.config();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"weight", matrix_to_json(l.weight.value)}, {"bias", matrix_to_json(l.bias.value)}});
  }
  return {{"input", c.input},
          {"hidden", c.hidden},
          {"output", c.output},
          {"output_activation", activation_name(c.output_activation)},
          {"negative_slope", c.negative_slope},
          {"layers", layers}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    MlpConfig c;
    c.input = j.at("input").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.output = j.at("output").get<std::size_t>();
    c.output_activation = activation_from(j.at("output_activation").get<std::string>());
    c.negative_slope = j.at("negative_slope").get<double>();
    std::vector<Mlp::Layer> layers;
    for (const auto& l : j.at("layers")) {
      layers.push_back({ad::Parameter(matrix_from_json(l.at("weight"))), ad::Parameter(matrix_from_json(l.at("bias")))});
    }
    return Mlp(c, std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network: ") + e.what());
  }
}

}  // namespace claire
