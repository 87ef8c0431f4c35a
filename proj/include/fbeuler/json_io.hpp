#pragma once

#include <string>

#include "fbeuler/state.hpp"

namespace fbeuler {

// Single-document state serialization:
// {grid:{n_radial,n_angular}, t_nodes:[...], fields:{x:[...],v:[...],h:[...]}}
// with row-major node ordering (radius outer, angle inner) and components
// innermost for x and v.  Floats are written as 64-bit decimal text.
std::string state_to_json(const LagrangianState& state);
LagrangianState state_from_json(const std::string& text);

void save_state(const LagrangianState& state, const std::string& path);
LagrangianState load_state(const std::string& path);

}  // namespace fbeuler
