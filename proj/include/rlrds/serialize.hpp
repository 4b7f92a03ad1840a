#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "rlrds/branching.hpp"
#include "rlrds/network.hpp"

namespace rlrds {

using Json = nlohmann::json;

Json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j);
/// Row-major nested arrays.
Json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const Json& j);

Json to_json(const ActionSpaceSpec& s);
ActionSpaceSpec spec_from_json(const Json& j);

Json to_json(const NetworkParams& p);
/// Missing keys fall back to the named setting ("setting": "type" | "value" | "count", default type).
NetworkParams network_params_from_json(const Json& j);

/// Tagged with "model_family"; covariances stored as full matrices.
Json to_json(const BranchingParams& b);
BranchingParams branching_from_json(const Json& j);

/// node,x1..xp
void write_nodes_csv(std::ostream& os, const Population& pop);
/// i,j with i < j
void write_edges_csv(std::ostream& os, const Population& pop);
Population read_population_csv(std::istream& nodes, std::istream& edges);

}  // namespace rlrds
