#pragma once

#include "json.hpp"
#include "claire/numerics/matrix.hpp"
#include "claire/numerics/mlp.hpp"

namespace claire {

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

// {"input","hidden","output","output_activation","negative_slope","layers":[{weight,bias}...]}
nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace claire
