#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "ufm/events.hpp"
#include "ufm/model.hpp"
#include "ufm/rng.hpp"

namespace ufm {

struct SamplerConfig {
  int steps = 8;            // S; step size h = 1 / S
  double eps_time = 1e-6;   // positivity floor for gaps
  double eps_prob = 1e-5;   // probability clamp
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

// Invariant checks made inside the sampling loop. A clean run has zero
// violations.
struct SamplerStats {
  std::size_t positivity_violations = 0;  // some gap < eps_time
  std::size_t simplex_violations = 0;     // |sum p_new - 1| >= 1e-12 or p_new < 0
  std::size_t mark_violations = 0;        // mark outside [0, M)
  std::size_t flow_time_violations = 0;   // final t differs from 1 by >= 1e-12
  std::size_t field_evaluations = 0;

  std::size_t violations() const {
    return positivity_violations + simplex_violations + mark_violations + flow_time_violations;
  }
  SamplerStats& operator+=(const SamplerStats& o);
};

struct Forecast {
  std::vector<double> inter_times;
  std::vector<int> marks;
};

// x ~ Exp(rate)^L, y ~ Categorical(mark_probs)^L.
Forecast init_noise(const BasePrior& prior, std::size_t length, Pcg32& rng);

// Midpoint update given the velocity v0 already evaluated at (x, y, t):
//   x_mid  = max(x + h/2 v0, eps)
//   x_next = max(x + h v(x_mid, y, t + h/2), eps)
// Throws NumericalError when the field returns a non-finite velocity.
std::vector<double> step_time_from(const FlowField& field, std::span<const double> x,
                                   std::span<const int> y, double t, double h,
                                   const Condition& cond, std::span<const double> v0,
                                   double eps_time, SamplerStats* stats = nullptr);
// Same, evaluating v0 itself.
std::vector<double> step_time(const FlowField& field, std::span<const double> x,
                              std::span<const int> y, double t, double h, const Condition& cond,
                              double eps_time, SamplerStats* stats = nullptr);

// Simplex update for a single event given its logits at (x, y, t):
//   p = softmax(logits), u = (p - onehot(y)) / (1 - t),
//   p_new = max(onehot(y) + h u, eps) renormalised.
// For t >= 1 - 1e-9 the softmax itself is used.
std::vector<double> mark_transition(std::span<const double> logits, int y, double t, double h,
                                    double eps_prob);

// Draws the next marks for all events from their transition distributions.
std::vector<int> step_mark_from(std::span<const double> logits, std::span<const int> y, double t,
                                double h, double eps_prob, Pcg32& rng,
                                SamplerStats* stats = nullptr);
std::vector<int> step_mark(const FlowField& field, std::span<const double> x,
                           std::span<const int> y, double t, double h, const Condition& cond,
                           double eps_prob, Pcg32& rng, SamplerStats* stats = nullptr);

// Runs S joint steps from noise for one window. Per step the field is
// evaluated at (x, y, t), the gaps take a midpoint step and the marks are
// updated from the logits at (x, y, t).
Forecast sample_window(const FlowField& field, const Condition& cond, std::size_t length,
                       const SamplerConfig& cfg, Pcg32& rng, SamplerStats* stats = nullptr);

struct GenerateResult {
  std::vector<Forecast> forecasts;  // aligned with the input windows
  SamplerStats stats;
};

// Window i uses the stream Pcg32(derive_seed(seed, 0x5a), i), so the result
// does not depend on the thread count.
GenerateResult generate(const FlowModel& model, std::span<const ForecastWindow> windows,
                        const SamplerConfig& cfg);

}  // namespace ufm
