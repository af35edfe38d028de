#include "ufm/synthgen.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "ufm/error.hpp"
#include "ufm/rng.hpp"

namespace ufm::synth {

namespace {

void check_simplex(const std::vector<double>& p) {
  if (p.empty()) throw ValidationError("mark_probs must not be empty");
  double s = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("mark_probs entries must be >= 0");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "mark_probs must sum to 1 (within 1e-9), got " << s;
    throw ValidationError(os.str());
  }
}

}  // namespace

HawkesSpec::HawkesSpec(std::vector<double> base_rates, std::vector<std::vector<double>> excite,
                       double decay)
    : base_rates_(std::move(base_rates)), excite_(std::move(excite)), decay_(decay) {
  const std::size_t m = base_rates_.size();
  if (m == 0) throw ValidationError("hawkes: base_rates must not be empty");
  for (double mu : base_rates_) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("hawkes: base rates must be > 0");
  }
  if (!(decay_ > 0.0) || !std::isfinite(decay_)) throw ValidationError("hawkes: decay must be > 0");
  if (excite_.size() != m) throw ValidationError("hawkes: excite must be M x M");
  Eigen::MatrixXd a(m, m);
  for (std::size_t k = 0; k < m; ++k) {
    if (excite_[k].size() != m) throw ValidationError("hawkes: excite must be M x M");
    for (std::size_t j = 0; j < m; ++j) {
      if (!(excite_[k][j] >= 0.0) || !std::isfinite(excite_[k][j])) {
        throw ValidationError("hawkes: excitation entries must be >= 0");
      }
      a(k, j) = excite_[k][j] / decay_;
    }
  }
  branching_ratio_ = a.eigenvalues().cwiseAbs().maxCoeff();
  if (!(branching_ratio_ < 1.0)) {
    std::ostringstream os;
    os << "hawkes: unstable process, spectral radius of excite/decay is " << branching_ratio_
       << " (must be < 1)";
    throw ValidationError(os.str());
  }
}

std::vector<double> HawkesSpec::stationary_rates() const {
  const auto m = static_cast<Eigen::Index>(base_rates_.size());
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd mu(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    mu(k) = base_rates_[k];
    for (Eigen::Index j = 0; j < m; ++j) a(k, j) = excite_[k][j] / decay_;
  }
  const Eigen::VectorXd r = (Eigen::MatrixXd::Identity(m, m) - a).partialPivLu().solve(mu);
  return {r.data(), r.data() + m};
}

EventSequence simulate_poisson(double rate, const std::vector<double>& mark_probs,
                               std::size_t length, std::uint64_t seed, std::uint64_t stream) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ValidationError("poisson: rate must be > 0");
  check_simplex(mark_probs);
  Pcg32 rng(seed, stream);
  std::vector<double> dts(length);
  std::vector<int> marks(length);
  for (std::size_t i = 0; i < length; ++i) {
    dts[i] = rng.exponential(rate);
    marks[i] = rng.categorical(mark_probs);
  }
  return {std::move(dts), std::move(marks), static_cast<int>(mark_probs.size())};
}

EventSequence simulate_hawkes(const HawkesSpec& spec, std::size_t length, std::uint64_t seed,
                              std::uint64_t stream, ThinningStats* stats) {
  const std::size_t m = spec.base_rates().size();
  const auto& mu = spec.base_rates();
  const auto& alpha = spec.excite();
  const double beta = spec.decay();

  Pcg32 rng(seed, stream);
  std::vector<double> excitation(m, 0.0);  // kernel sum per mark at current time
  std::vector<double> intensity(m, 0.0);
  std::vector<double> dts;
  std::vector<int> marks;
  dts.reserve(length);
  marks.reserve(length);
  ThinningStats local;

  double since_last = 0.0;
  while (dts.size() < length) {
    double bound = 0.0;
    for (std::size_t k = 0; k < m; ++k) bound += mu[k] + excitation[k];
    const double w = rng.exponential(bound);
    since_last += w;
    const double decay = std::exp(-beta * w);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      excitation[k] *= decay;
      intensity[k] = mu[k] + excitation[k];
      total += intensity[k];
    }
    const double accept = total / bound;
    ++local.proposals;
    local.min_acceptance = std::min(local.min_acceptance, accept);
    local.max_acceptance = std::max(local.max_acceptance, accept);
    if (rng.uniform() * bound >= total) continue;

    const int k = rng.categorical(intensity);
    for (std::size_t j = 0; j < m; ++j) excitation[j] += alpha[j][static_cast<std::size_t>(k)];
    dts.push_back(since_last);
    marks.push_back(k);
    since_last = 0.0;
    ++local.accepted;
  }
  if (stats) *stats = local;
  return {std::move(dts), std::move(marks), static_cast<int>(m)};
}

}  // namespace ufm::synth
