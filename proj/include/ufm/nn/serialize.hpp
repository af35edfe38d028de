#pragma once

#include "json.hpp"
#include "ufm/nn/tensor.hpp"

namespace ufm::nn {

// {"<name>":{"shape":[...],"data":[...]}, ...} in name order.
nlohmann::json params_to_json(const ParamStore& store);

// Copies values from `j` into an already-shaped store. Every parameter in
// the store must be present with an identical shape and no unknown names may
// appear; violations throw ValidationError naming the parameter.
void load_params(ParamStore& store, const nlohmann::json& j);

}  // namespace ufm::nn
