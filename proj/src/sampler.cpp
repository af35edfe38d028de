#include "ufm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "ufm/error.hpp"

namespace ufm {

using nlohmann::json;

void SamplerConfig::validate() const {
  if (steps < 1) throw ValidationError("sampler config: steps must be >= 1");
  if (!(eps_time > 0.0)) throw ValidationError("sampler config: eps_time must be > 0");
  if (!(eps_prob > 0.0)) throw ValidationError("sampler config: eps_prob must be > 0");
}

void to_json(json& j, const SamplerConfig& c) {
  j = json{{"steps", c.steps}, {"eps_time", c.eps_time}, {"eps_prob", c.eps_prob}, {"seed", c.seed}};
}

void from_json(const json& j, SamplerConfig& c) {
  try {
    c.steps = j.value("steps", c.steps);
    c.eps_time = j.value("eps_time", c.eps_time);
    c.eps_prob = j.value("eps_prob", c.eps_prob);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("sampler config: ") + e.what());
  }
  c.validate();
}

SamplerStats& SamplerStats::operator+=(const SamplerStats& o) {
  positivity_violations += o.positivity_violations;
  simplex_violations += o.simplex_violations;
  mark_violations += o.mark_violations;
  flow_time_violations += o.flow_time_violations;
  field_evaluations += o.field_evaluations;
  return *this;
}

Forecast init_noise(const BasePrior& prior, std::size_t length, Pcg32& rng) {
  Forecast f;
  f.inter_times.resize(length);
  f.marks.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    f.inter_times[i] = rng.exponential(prior.rate);
    f.marks[i] = rng.categorical(prior.mark_probs);
  }
  return f;
}

namespace {

void check_velocity(std::span<const double> v, double t) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      std::ostringstream os;
      os << "non-finite velocity at flow time " << t;
      throw NumericalError(os.str());
    }
  }
}

void count_positivity(std::span<const double> x, double eps, SamplerStats* stats) {
  if (!stats) return;
  for (double v : x) {
    if (!(v >= eps)) ++stats->positivity_violations;
  }
}

}  // namespace

std::vector<double> step_time_from(const FlowField& field, std::span<const double> x,
                                   std::span<const int> y, double t, double h,
                                   const Condition& cond, std::span<const double> v0,
                                   double eps_time, SamplerStats* stats) {
  check_velocity(v0, t);
  const std::size_t n = x.size();
  std::vector<double> mid(n);
  for (std::size_t i = 0; i < n; ++i) mid[i] = std::max(x[i] + 0.5 * h * v0[i], eps_time);
  count_positivity(mid, eps_time, stats);

  std::vector<double> v_mid(n);
  std::vector<double> unused(n * static_cast<std::size_t>(field.vocab_size()));
  field.evaluate(mid, y, t + 0.5 * h, cond, v_mid, unused);
  if (stats) ++stats->field_evaluations;
  check_velocity(v_mid, t + 0.5 * h);

  std::vector<double> next(n);
  for (std::size_t i = 0; i < n; ++i) next[i] = std::max(x[i] + h * v_mid[i], eps_time);
  count_positivity(next, eps_time, stats);
  return next;
}

std::vector<double> step_time(const FlowField& field, std::span<const double> x,
                              std::span<const int> y, double t, double h, const Condition& cond,
                              double eps_time, SamplerStats* stats) {
  std::vector<double> v0(x.size());
  std::vector<double> logits(x.size() * static_cast<std::size_t>(field.vocab_size()));
  field.evaluate(x, y, t, cond, v0, logits);
  if (stats) ++stats->field_evaluations;
  return step_time_from(field, x, y, t, h, cond, v0, eps_time, stats);
}

std::vector<double> mark_transition(std::span<const double> logits, int y, double t, double h,
                                    double eps_prob) {
  const std::size_t m = logits.size();
  std::vector<double> p(m);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    p[k] = std::exp(logits[k] - mx);
    z += p[k];
  }
  for (double& v : p) v /= z;
  if (t >= 1.0 - 1e-9) return p;

  std::vector<double> next(m);
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double onehot = static_cast<int>(k) == y ? 1.0 : 0.0;
    const double u = (p[k] - onehot) / (1.0 - t);
    next[k] = std::max(onehot + h * u, eps_prob);
    total += next[k];
  }
  for (double& v : next) v /= total;
  return next;
}

std::vector<int> step_mark_from(std::span<const double> logits, std::span<const int> y, double t,
                                double h, double eps_prob, Pcg32& rng, SamplerStats* stats) {
  const std::size_t n = y.size();
  const std::size_t m = logits.size() / std::max<std::size_t>(n, 1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = mark_transition(logits.subspan(i * m, m), y[i], t, h, eps_prob);
    if (stats) {
      double s = 0.0;
      bool negative = false;
      for (double v : p) {
        s += v;
        negative = negative || v < 0.0;
      }
      if (negative || !(std::abs(s - 1.0) < 1e-12)) ++stats->simplex_violations;
    }
    out[i] = rng.categorical(p);
    if (stats && (out[i] < 0 || static_cast<std::size_t>(out[i]) >= m)) ++stats->mark_violations;
  }
  return out;
}

std::vector<int> step_mark(const FlowField& field, std::span<const double> x,
                           std::span<const int> y, double t, double h, const Condition& cond,
                           double eps_prob, Pcg32& rng, SamplerStats* stats) {
  std::vector<double> v(x.size());
  std::vector<double> logits(x.size() * static_cast<std::size_t>(field.vocab_size()));
  field.evaluate(x, y, t, cond, v, logits);
  if (stats) ++stats->field_evaluations;
  return step_mark_from(logits, y, t, h, eps_prob, rng, stats);
}

Forecast sample_window(const FlowField& field, const Condition& cond, std::size_t length,
                       const SamplerConfig& cfg, Pcg32& rng, SamplerStats* stats) {
  cfg.validate();
  const auto m = static_cast<std::size_t>(field.vocab_size());
  const double h = 1.0 / static_cast<double>(cfg.steps);
  Forecast state = init_noise(cond.prior, length, rng);
  std::vector<double> v0(length);
  std::vector<double> logits0(length * m);
  double t = 0.0;
  for (int s = 0; s < cfg.steps; ++s) {
    t = static_cast<double>(s) * h;
    field.evaluate(state.inter_times, state.marks, t, cond, v0, logits0);
    if (stats) ++stats->field_evaluations;
    auto x_next = step_time_from(field, state.inter_times, state.marks, t, h, cond, v0,
                                 cfg.eps_time, stats);
    auto y_next = step_mark_from(logits0, state.marks, t, h, cfg.eps_prob, rng, stats);
    state.inter_times = std::move(x_next);
    state.marks = std::move(y_next);
  }
  t = static_cast<double>(cfg.steps) * h;
  if (stats && !(std::abs(t - 1.0) < 1e-12)) ++stats->flow_time_violations;
  return state;
}

GenerateResult generate(const FlowModel& model, std::span<const ForecastWindow> windows,
                        const SamplerConfig& cfg) {
  cfg.validate();
  const auto length = static_cast<std::size_t>(model.config().horizon);
  for (const auto& w : windows) {
    if (w.context.vocab_size() != model.vocab_size()) {
      throw ValidationError("generate: window vocab_size " + std::to_string(w.context.vocab_size()) +
                            " does not match checkpoint " + std::to_string(model.vocab_size()));
    }
  }
  GenerateResult result;
  result.forecasts.resize(windows.size());
  std::vector<SamplerStats> per_window(windows.size());
  const std::uint64_t base = derive_seed(cfg.seed, 0x5a);

  auto work = [&](std::size_t i) {
    Pcg32 rng(base, i);
    const Condition cond = model.condition(windows[i].context);
    result.forecasts[i] = sample_window(model, cond, length, cfg, rng, &per_window[i]);
  };

  std::size_t threads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(windows.size(), 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < windows.size(); ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          for (std::size_t i = k; i < windows.size(); i += threads) work(i);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (const auto& s : per_window) result.stats += s;
  return result;
}

}  // namespace ufm
