#pragma once

#include <cstdint>
#include <vector>

#include "ufm/events.hpp"

namespace ufm::synth {

// Multivariate linear Hawkes process with a shared exponential decay:
//   lambda_k(t) = mu_k + sum_{t_j < t} excite[k][m_j] * exp(-decay * (t - t_j))
// excite[k][j] is the jump in the intensity of mark k caused by an event of
// mark j.
class HawkesSpec {
 public:
  // Throws ValidationError on non-positive rates/decay, negative or
  // non-square excitation, or spectral radius of excite/decay >= 1.
  HawkesSpec(std::vector<double> base_rates, std::vector<std::vector<double>> excite, double decay);

  int vocab_size() const { return static_cast<int>(base_rates_.size()); }
  const std::vector<double>& base_rates() const { return base_rates_; }
  const std::vector<std::vector<double>>& excite() const { return excite_; }
  double decay() const { return decay_; }
  // Spectral radius of excite / decay (the branching ratio).
  double branching_ratio() const { return branching_ratio_; }
  // Stationary per-mark rates (I - excite/decay)^{-1} mu.
  std::vector<double> stationary_rates() const;

 private:
  std::vector<double> base_rates_;
  std::vector<std::vector<double>> excite_;
  double decay_;
  double branching_ratio_;
};

// Bookkeeping from a thinning run.
struct ThinningStats {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  double min_acceptance = 1.0;  // smallest lambda(t)/bound seen
  double max_acceptance = 0.0;
};

// i.i.d. Exponential(rate) gaps with i.i.d. Categorical(mark_probs) marks.
EventSequence simulate_poisson(double rate, const std::vector<double>& mark_probs,
                               std::size_t length, std::uint64_t seed, std::uint64_t stream = 0);

// Ogata thinning. The proposal bound is the total intensity at the current
// time, which dominates the intensity until the next event because the
// kernels only decay. Rejected proposals still advance time. The accepted
// mark is drawn proportionally to the per-mark intensities.
EventSequence simulate_hawkes(const HawkesSpec& spec, std::size_t length, std::uint64_t seed,
                              std::uint64_t stream = 0, ThinningStats* stats = nullptr);

}  // namespace ufm::synth
