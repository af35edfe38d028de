#include "ufm/nn/serialize.hpp"

#include "ufm/error.hpp"

namespace ufm::nn {

nlohmann::json params_to_json(const ParamStore& store) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, t] : store.params()) {
    out[name] = {{"shape", t.shape()},
                 {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  return out;
}

void load_params(ParamStore& store, const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("checkpoint params must be an object");
  for (const auto& [name, _] : j.items()) {
    if (!store.contains(name)) throw ValidationError("checkpoint has unexpected parameter " + name);
  }
  for (auto& [name, t] : store.params()) {
    if (!j.contains(name)) throw ValidationError("checkpoint is missing parameter " + name);
    const auto& entry = j.at(name);
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != t.shape()) {
      throw ValidationError("parameter " + name + " has shape " + shape_string(shape) +
                            " in checkpoint but config implies " + shape_string(t.shape()));
    }
    auto data = entry.at("data").get<std::vector<double>>();
    t = Tensor(std::move(shape), std::move(data));
  }
}

}  // namespace ufm::nn
