#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ufm/events.hpp"
#include "ufm/nn/tape.hpp"
#include "ufm/nn/tensor.hpp"

namespace oracle {

// Enumerates every order-preserving same-mark matching and returns the
// cheapest total cost.
inline double otd_brute_force(const ufm::EventSequence& pred, const ufm::EventSequence& truth,
                              double delete_cost) {
  const auto a = pred.arrival_times();
  const auto b = truth.arrival_times();
  const auto pm = pred.marks();
  const auto tm = truth.marks();
  const std::size_t n = a.size(), m = b.size();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double, std::size_t)> rec =
      [&](std::size_t i, std::size_t next_j, double cost, std::size_t pairs) {
        if (i == n) {
          best = std::min(best, cost + delete_cost * static_cast<double>(n + m - 2 * pairs));
          return;
        }
        rec(i + 1, next_j, cost, pairs);
        for (std::size_t j = next_j; j < m; ++j) {
          if (pm[i] == tm[j]) rec(i + 1, j + 1, cost + std::abs(a[i] - b[j]), pairs + 1);
        }
      };
  rec(0, 0, 0.0, 0);
  return best;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_distance(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
  }
  return d;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Compares the tape gradient of `loss` with central differences for every
// entry of every parameter (or every `stride`-th entry). The relative error
// uses max(|analytic|, |numeric|, 1e-6) as the denominator.
inline GradCheck check_gradients(ufm::nn::ParamStore& store,
                                 const std::function<ufm::nn::Var(ufm::nn::Tape&)>& loss,
                                 double step = 1e-5, std::size_t stride = 1) {
  store.zero_grad();
  {
    ufm::nn::Tape tape(store);
    tape.backward(loss(tape));
  }
  auto value = [&] {
    ufm::nn::Tape tape(static_cast<const ufm::nn::ParamStore&>(store));
    return loss(tape).item();
  };
  GradCheck out;
  for (auto& [name, t] : store.params()) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.size(); i += stride) {
      const double orig = t[i];
      t[i] = orig + step;
      const double up = value();
      t[i] = orig - step;
      const double down = value();
      t[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace oracle
