#include "ufm/nn/adam.hpp"

#include <cmath>

#include "ufm/error.hpp"

namespace ufm::nn {

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (const auto& [name, t] : store.params()) {
    if (!t.has_grad() || t.grad().size() != t.size()) {
      throw ValidationError("adam_step: parameter " + name + " has no gradient");
    }
  }
  const std::int64_t step = store.step() + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (auto& [name, t] : store.params()) {
    auto& mom = store.moments(name);
    auto w = t.data();
    auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.first[i] = cfg.beta1 * mom.first[i] + (1.0 - cfg.beta1) * g[i];
      mom.second[i] = cfg.beta2 * mom.second[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = mom.first[i] / c1;
      const double v_hat = mom.second[i] / c2;
      w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    t.zero_grad();
  }
  store.set_step(step);
}

}  // namespace ufm::nn
