#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ufm/error.hpp"
#include "ufm/sampler.hpp"

using namespace ufm;

namespace {

// Constant velocity and fixed logits, independent of the state.
class StubField : public FlowField {
 public:
  StubField(int vocab, double velocity, std::vector<double> logits = {})
      : vocab_(vocab), velocity_(velocity), logits_(std::move(logits)) {
    if (logits_.empty()) logits_.assign(static_cast<std::size_t>(vocab), 0.0);
  }
  int vocab_size() const override { return vocab_; }
  void evaluate(std::span<const double> x, std::span<const int>, double, const Condition&,
                std::span<double> velocity, std::span<double> logits) const override {
    ++calls;
    for (std::size_t i = 0; i < x.size(); ++i) {
      velocity[i] = velocity_;
      std::copy(logits_.begin(), logits_.end(), logits.begin() + static_cast<std::ptrdiff_t>(i * logits_.size()));
    }
  }
  mutable int calls = 0;

 private:
  int vocab_;
  double velocity_;
  std::vector<double> logits_;
};

// Velocity equal to the state, so the midpoint evaluation is observable.
class LinearField : public FlowField {
 public:
  int vocab_size() const override { return 2; }
  void evaluate(std::span<const double> x, std::span<const int>, double, const Condition&,
                std::span<double> velocity, std::span<double> logits) const override {
    for (std::size_t i = 0; i < x.size(); ++i) velocity[i] = x[i];
    std::fill(logits.begin(), logits.end(), 0.0);
  }
};

Condition make_cond(int vocab, double rate = 1.0) {
  Condition c;
  c.prior.rate = rate;
  c.prior.mark_probs.assign(static_cast<std::size_t>(vocab), 1.0 / vocab);
  return c;
}

}  // namespace

TEST_CASE("init_noise draws exponential gaps and prior marks") {
  Pcg32 rng(1);
  BasePrior prior{2.0, {1.0, 0.0, 0.0}};
  const auto f = init_noise(prior, 10000, rng);
  const double mean = std::accumulate(f.inter_times.begin(), f.inter_times.end(), 0.0) / 10000;
  CHECK(mean >= 0.485);
  CHECK(mean <= 0.515);
  for (int k : f.marks) CHECK(k == 0);
  Pcg32 a(5), b(5);
  const auto fa = init_noise(prior, 50, a), fb = init_noise(prior, 50, b);
  CHECK(fa.inter_times == fb.inter_times);
  CHECK(fa.marks == fb.marks);
}

TEST_CASE("step_time with a zero field keeps the state") {
  StubField f(2, 0.0);
  const std::vector<double> x{0.3, 2.0, 1e-3};
  const std::vector<int> y{0, 1, 0};
  CHECK(step_time(f, x, y, 0.25, 0.125, make_cond(2), 1e-6) == x);
}

TEST_CASE("step_time clamps to the positivity floor") {
  StubField f(2, -10.0);
  const std::vector<double> x{0.1};
  const std::vector<int> y{0};
  SamplerStats stats;
  const auto next = step_time(f, x, y, 0.0, 0.5, make_cond(2), 1e-6, &stats);
  CHECK(next[0] == 1e-6);
  CHECK(stats.positivity_violations == 0);
}

TEST_CASE("step_time evaluates the field at the midpoint") {
  LinearField f;
  const std::vector<double> x{1.0};
  const std::vector<int> y{0};
  // v(x) = x: x_mid = 1 + h/2, x_next = 1 + h (1 + h/2).
  const auto next = step_time(f, x, y, 0.0, 0.5, make_cond(2), 1e-6);
  CHECK(next[0] == doctest::Approx(1.0 + 0.5 * 1.25));
}

TEST_CASE("constant fields are integrated exactly") {
  for (double c : {0.0, 0.7, 3.25, -0.2}) {
    for (int steps : {1, 2, 8, 10}) {
      StubField f(3, c);
      SamplerConfig cfg;
      cfg.steps = steps;
      Pcg32 rng(7), noise_rng(7);
      const auto cond = make_cond(3);
      const auto x0 = init_noise(cond.prior, 200, noise_rng).inter_times;
      const auto out = sample_window(f, cond, 200, cfg, rng);
      for (std::size_t i = 0; i < x0.size(); ++i) {
        if (x0[i] + c > 0.5) CHECK(out.inter_times[i] == doctest::Approx(x0[i] + c).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("mark transition fixed point at a one-hot prediction") {
  const double eps = 1e-5;
  const std::vector<double> logits{-200.0, 200.0, -200.0, -200.0};
  for (double t : {0.0, 0.3, 0.8}) {
    const auto p = mark_transition(logits, 1, t, 0.125, eps);
    CHECK(p[1] >= 1.0 - 3 * eps);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("mark transition hand trace with M = 2") {
  const auto p = mark_transition(std::vector<double>{0.0, 0.0}, 0, 0.0, 1.0, 1e-5);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));
  Pcg32 rng(3);
  int ones = 0;
  const std::vector<int> y(10000, 0);
  for (int k : step_mark_from(std::vector<double>(20000, 0.0), y, 0.0, 1.0, 1e-5, rng)) ones += k;
  CHECK(std::abs(ones / 10000.0 - 0.5) < 0.02);
}

TEST_CASE("final mark step reproduces the predicted distribution") {
  for (int s : {2, 4, 8, 10}) {
    const double h = 1.0 / s;
    const double t = (s - 1) * h;
    const std::vector<double> logits{0.3, -1.2, 2.0};
    const auto p = mark_transition(logits, 2, t, h, 1e-9);
    const double z = std::exp(0.3) + std::exp(-1.2) + std::exp(2.0);
    CHECK(p[0] == doctest::Approx(std::exp(0.3) / z).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(std::exp(-1.2) / z).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  }
  const auto direct = mark_transition(std::vector<double>{0.0, 1.0}, 0, 1.0, 0.1, 1e-5);
  CHECK(direct[1] == doctest::Approx(std::exp(1.0) / (1 + std::exp(1.0))));
}

TEST_CASE("mark transition always returns a distribution") {
  Pcg32 rng(4);
  for (int trial = 0; trial < 2000; ++trial) {
    const int m = 2 + static_cast<int>(rng.below(5));
    std::vector<double> logits(static_cast<std::size_t>(m));
    for (double& v : logits) v = 20.0 * (rng.uniform() - 0.5);
    const int steps = 1 + static_cast<int>(rng.below(12));
    const double h = 1.0 / steps;
    const double t = static_cast<int>(rng.below(static_cast<std::uint32_t>(steps))) * h;
    const auto p = mark_transition(logits, static_cast<int>(rng.below(static_cast<std::uint32_t>(m))), t, h, 1e-5);
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("single step with a stub keeps gaps and resamples marks") {
  StubField f(3, 0.0);
  SamplerConfig cfg;
  cfg.steps = 1;
  const auto cond = make_cond(3);
  Pcg32 rng(9), noise_rng(9);
  const auto x0 = init_noise(cond.prior, 3000, noise_rng);
  SamplerStats stats;
  const auto out = sample_window(f, cond, 3000, cfg, rng, &stats);
  CHECK(out.inter_times == x0.inter_times);
  std::vector<int> counts(3, 0);
  for (int k : out.marks) ++counts[static_cast<std::size_t>(k)];
  for (int c : counts) CHECK(std::abs(c / 3000.0 - 1.0 / 3) < 0.04);
  CHECK(stats.violations() == 0);
  CHECK(stats.field_evaluations == 2);
}

TEST_CASE("sampling is deterministic and satisfies the invariants") {
  ModelConfig mc;
  mc.vocab_size = 3;
  mc.horizon = 6;
  mc.hidden = 8;
  mc.vfield_hidden = {16};
  mc.logits_hidden = {16};
  FlowModel model(mc, 21);
  Pcg32 rng(21);
  std::vector<ForecastWindow> windows;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> dts;
    std::vector<int> marks;
    for (int j = 0; j < 4 + i % 3; ++j) {
      dts.push_back(rng.exponential(2.0));
      marks.push_back(static_cast<int>(rng.below(3)));
    }
    windows.push_back({EventSequence(dts, marks, 3), EventSequence(std::vector<double>(6, 1.0), std::vector<int>(6, 0), 3)});
  }
  SamplerConfig cfg;
  cfg.seed = 4;
  cfg.threads = 1;
  const auto a = generate(model, windows, cfg);
  cfg.threads = 4;
  const auto b = generate(model, windows, cfg);
  REQUIRE(a.forecasts.size() == windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK(a.forecasts[i].inter_times == b.forecasts[i].inter_times);
    CHECK(a.forecasts[i].marks == b.forecasts[i].marks);
    CHECK(a.forecasts[i].inter_times.size() == 6);
    CHECK(a.forecasts[i].marks.size() == 6);
    for (double x : a.forecasts[i].inter_times) CHECK(x >= cfg.eps_time);
    for (int k : a.forecasts[i].marks) CHECK((k >= 0 && k < 3));
  }
  CHECK(a.stats.violations() == 0);
  CHECK(a.stats.field_evaluations == windows.size() * 2 * 8);

  cfg.seed = 5;
  const auto c = generate(model, windows, cfg);
  CHECK(c.forecasts[0].inter_times != a.forecasts[0].inter_times);

  std::vector<ForecastWindow> wrong{{EventSequence({1.0}, {0}, 4), EventSequence({1.0}, {0}, 4)}};
  CHECK_THROWS_AS(generate(model, wrong, cfg), ValidationError);
}

TEST_CASE("non-finite velocity aborts with the flow time") {
  StubField f(2, std::nan(""));
  const std::vector<double> x{1.0};
  const std::vector<int> y{0};
  try {
    step_time(f, x, y, 0.375, 0.125, make_cond(2), 1e-6);
    FAIL("expected a NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("0.375") != std::string::npos);
  }
}

TEST_CASE("sampler config validation") {
  SamplerConfig c;
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.steps = 4;
  c.eps_prob = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}
