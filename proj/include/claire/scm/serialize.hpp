#pragma once

#include <string>

#include "json.hpp"
#include "claire/scm/graph.hpp"
#include "claire/scm/scm.hpp"

namespace claire::scm {

// {"nodes":[{"name","role"}], "edges":[[from,to]]}
nlohmann::json graph_to_json(const CausalGraph& g);
CausalGraph graph_from_json(const nlohmann::json& j);

// Graph fields plus "mechanisms": {node: {"kind", ...}} with coefficients
// keyed by parent name.
nlohmann::json scm_to_json(const Scm& scm);
Scm scm_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace claire::scm
