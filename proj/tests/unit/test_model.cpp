#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "support/oracles.hpp"
#include "ufm/error.hpp"
#include "ufm/model.hpp"
#include "ufm/nn/adam.hpp"
#include "ufm/train.hpp"

using namespace ufm;
using nn::Tape;
using nn::Var;

namespace {

ModelConfig small_config(int vocab = 3) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.horizon = 4;
  c.hidden = 5;
  c.mark_embed = 3;
  c.time_embed = 3;
  c.flow_time_features = 4;
  c.vfield_hidden = {6, 6};
  c.logits_hidden = {6, 6};
  return c;
}

EventSequence random_seq(std::size_t n, int vocab, Pcg32& rng) {
  std::vector<double> dts(n);
  std::vector<int> marks(n);
  for (std::size_t i = 0; i < n; ++i) {
    dts[i] = rng.exponential(1.0);
    marks[i] = static_cast<int>(rng.below(static_cast<std::uint32_t>(vocab)));
  }
  return {dts, marks, vocab};
}

std::vector<ForecastWindow> random_windows(std::size_t count, std::size_t ctx, std::size_t horizon,
                                           int vocab, std::uint64_t seed) {
  Pcg32 rng(seed);
  std::vector<ForecastWindow> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({random_seq(ctx + (i % 3), vocab, rng), random_seq(horizon, vocab, rng)});
  }
  return out;
}

std::vector<double> grads_of(const nn::ParamStore& s) {
  std::vector<double> g;
  for (const auto& [_, t] : s.params()) g.insert(g.end(), t.grad().begin(), t.grad().end());
  return g;
}

}  // namespace

TEST_CASE("interpolate_time endpoints and midpoint") {
  CHECK(interpolate_time(2, 4, 0) == 2.0);
  CHECK(interpolate_time(2, 4, 1) == 4.0);
  CHECK(interpolate_time(2, 4, 0.5) == 3.0);
  Pcg32 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x0 = rng.exponential(0.01), x1 = rng.exponential(100.0);
    CHECK(interpolate_time(x0, x1, 0.0) == x0);
    CHECK(interpolate_time(x0, x1, 1.0) == x1);
  }
}

TEST_CASE("corrupt_mark at t = 1 always returns the data mark") {
  Pcg32 rng(2);
  const std::vector<double> prior{0.25, 0.25, 0.25, 0.25};
  for (int i = 0; i < 1000; ++i) CHECK(corrupt_mark(i % 4, 1.0, prior, rng) == i % 4);
}

TEST_CASE("corrupt_mark at t = 0 follows the prior (chi-square, p > 0.01)") {
  Pcg32 rng(3);
  const std::vector<double> prior{0.1, 0.2, 0.3, 0.4};
  std::vector<double> counts(4, 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(corrupt_mark(1, 0.0, prior, rng))] += 1;
  double chi2 = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double e = n * prior[k];
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  CHECK(chi2 < 11.3449);  // 0.99 quantile of chi-square with 3 dof
}

TEST_CASE("corrupt_mark mixture at t = 0.5") {
  Pcg32 rng(4);
  const std::vector<double> prior(4, 0.25);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += corrupt_mark(2, 0.5, prior, rng) == 2;
  CHECK(std::abs(hits / 10000.0 - 0.625) <= 0.02);
}

TEST_CASE("corrupt_mark marginal matches (1-t) prior + t delta within 3 sigma") {
  const std::vector<double> prior{0.5, 0.3, 0.2};
  for (double t : {0.1, 0.3, 0.7, 0.9}) {
    Pcg32 rng(static_cast<std::uint64_t>(t * 100));
    std::vector<double> counts(3, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(corrupt_mark(2, t, prior, rng))] += 1;
    for (std::size_t k = 0; k < 3; ++k) {
      const double p = (1 - t) * prior[k] + (k == 2 ? t : 0.0);
      const double sigma = std::sqrt(p * (1 - p) / n);
      CHECK(std::abs(counts[k] / n - p) <= 3 * sigma);
    }
  }
}

TEST_CASE("estimate_lambda examples") {
  CHECK(estimate_lambda(EventSequence({0.5, 1.5}, {0, 0}, 1), 1e-6) == 1.0);
  CHECK(estimate_lambda(EventSequence({2.0}, {0}, 1), 1e-6) == 0.5);
  CHECK(estimate_lambda(EventSequence({1e9}, {0}, 1), 1e-6) == 1e-6);
}

TEST_CASE("estimate_mark_prior uses one pseudo-count per mark") {
  const auto p = estimate_mark_prior(EventSequence({1, 1, 1}, {0, 0, 2}, 3));
  CHECK(p[0] == doctest::Approx(3.0 / 6));
  CHECK(p[1] == doctest::Approx(1.0 / 6));
  CHECK(p[2] == doctest::Approx(2.0 / 6));
}

TEST_CASE("context encoding is order sensitive") {
  FlowModel model(small_config(), 5);
  const EventSequence a({0.5, 2.0, 1.0}, {0, 1, 2}, 3);
  const EventSequence b({1.0, 2.0, 0.5}, {2, 1, 0}, 3);
  CHECK(model.encode_context(a).values != model.encode_context(b).values);
  CHECK(model.encode_context(a).values.size() == 5);
}

TEST_CASE("zero parameters give a zero context vector") {
  FlowModel model(small_config(), 6);
  for (auto& [_, t] : model.params().params()) {
    for (double& v : t.data()) v = 0.0;
  }
  for (double v : model.encode_context(EventSequence({0.3, 4.0}, {1, 2}, 3)).values) CHECK(v == 0.0);
}

TEST_CASE("context encoding rejects an empty context or a vocab mismatch") {
  FlowModel model(small_config(), 6);
  CHECK_THROWS_AS(model.encode_context(EventSequence({}, {}, 3)), ValidationError);
  CHECK_THROWS_AS(model.encode_context(EventSequence({1.0}, {3}, 4)), ValidationError);
}

TEST_CASE("batched encoding matches one-at-a-time encoding") {
  FlowModel model(small_config(), 7);
  Pcg32 rng(7);
  std::vector<EventSequence> ctx;
  for (std::size_t n : {1, 4, 2, 7}) ctx.push_back(random_seq(n, 3, rng));
  std::vector<const EventSequence*> ptrs;
  for (auto& c : ctx) ptrs.push_back(&c);
  Tape tape(static_cast<const nn::ParamStore&>(model.params()));
  Var h = model.encode_contexts(tape, ptrs);
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    const auto one = model.encode_context(ctx[i]).values;
    for (std::size_t j = 0; j < one.size(); ++j) {
      CHECK(h.value()[i * one.size() + j] == doctest::Approx(one[j]).epsilon(1e-14));
    }
  }
}

TEST_CASE("encoder gradients match finite differences") {
  for (int draw = 0; draw < 20; ++draw) {
    FlowModel model(small_config(), 100 + draw);
    Pcg32 rng(100 + draw);
    std::vector<EventSequence> ctx{random_seq(3, 3, rng), random_seq(1, 3, rng)};
    std::vector<const EventSequence*> ptrs{&ctx[0], &ctx[1]};
    std::vector<double> target(10);
    for (double& v : target) v = rng.uniform() - 0.5;
    const auto res = oracle::check_gradients(model.params(), [&](Tape& t) {
      return nn::mean_squared_error(model.encode_contexts(t, ptrs), target);
    });
    // Head parameters do not influence the encoder, so their gradients are 0
    // on both sides and only the encoder entries carry signal.
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst << " " << res.max_rel_error);
  }
}

TEST_CASE("forward is deterministic with M logits per row") {
  const auto cfg = small_config(4);
  FlowModel model(cfg, 8);
  const Condition cond = model.condition(EventSequence({0.5, 1.0}, {1, 3}, 4));
  const std::vector<double> x{0.2, 1.5, 3.0};
  const std::vector<int> y{0, 3, 2};
  std::vector<double> v1(3), v2(3), l1(12), l2(12);
  model.evaluate(x, y, 0.3, cond, v1, l1);
  model.evaluate(x, y, 0.3, cond, v2, l2);
  CHECK(v1 == v2);
  CHECK(l1 == l2);
  std::vector<double> bad(3 * 3);
  CHECK_THROWS_AS(model.evaluate(x, y, 0.3, cond, v1, bad), ValidationError);
  const std::vector<int> bad_mark{0, 4, 1};
  CHECK_THROWS_AS(model.evaluate(x, bad_mark, 0.3, cond, v1, l1), ValidationError);
}

TEST_CASE("gradient of squared velocity plus cross-entropy matches finite differences") {
  for (auto act : {nn::Activation::Tanh, nn::Activation::Silu}) {
    for (int draw = 0; draw < 20; ++draw) {
      auto cfg = small_config();
      cfg.activation = act;
      FlowModel model(cfg, 200 + draw);
      Pcg32 rng(200 + draw);
      std::vector<EventSequence> ctx{random_seq(2, 3, rng), random_seq(3, 3, rng)};
      std::vector<const EventSequence*> ptrs{&ctx[0], &ctx[1]};
      const std::vector<double> xt{rng.exponential(1.0), rng.exponential(1.0), rng.exponential(1.0)};
      const std::vector<int> yt{0, 2, 1}, y1{1, 2, 0}, rows{0, 1, 1};
      const std::vector<double> t{rng.uniform(), rng.uniform(), rng.uniform()};
      const std::vector<double> rate{0.7, 1.3, 1.3};
      const auto res = oracle::check_gradients(model.params(), [&](Tape& tp) {
        auto heads = model.forward(tp, xt, yt, t, rate, model.encode_contexts(tp, ptrs), rows);
        return nn::add(nn::sum(nn::mul(heads.velocity, heads.velocity)),
                       nn::cross_entropy(heads.logits, y1));
      });
      CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst << " " << res.max_rel_error);
    }
  }
}

TEST_CASE("gradient of the full training loss matches finite differences") {
  for (int draw = 0; draw < 20; ++draw) {
    FlowModel model(small_config(), 300 + draw);
    const auto windows = random_windows(3, 2, 4, 3, 300 + draw);
    std::vector<const ForecastWindow*> ptrs;
    for (auto& w : windows) ptrs.push_back(&w);
    Pcg32 rng(draw);
    const FlowBatch batch = draw_flow_batch(model, ptrs, rng);
    const auto res = oracle::check_gradients(model.params(), [&](Tape& tp) {
      return flow_losses(tp, model, batch).total;
    });
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst << " " << res.max_rel_error);
  }
}

TEST_CASE("value-level losses on stub heads") {
  std::vector<FlowSample> s(1);
  s[0].x0 = 1.0;
  s[0].x1 = 3.0;
  s[0].y1 = 2;
  CHECK(loss_time(std::vector<double>{2.0}, s) == 0.0);
  CHECK(loss_time(std::vector<double>{0.0}, s) == 4.0);

  std::vector<double> saturated{0.0, 0.0, 50.0, 0.0};
  CHECK(loss_mark(saturated, 4, s) < 1e-8);
  CHECK(loss_mark(std::vector<double>(4, 0.3), 4, s) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  CHECK(loss_total(2.0, 3.0, 1.0) == 5.0);
  CHECK(loss_total(2.0, 3.0, 0.0) == 2.0);
  CHECK_THROWS_AS(loss_time(std::vector<double>{}, std::vector<FlowSample>{}), ValidationError);
}

TEST_CASE("tape losses agree with value-level losses and alpha = 0 gives loss_time") {
  auto cfg = small_config();
  cfg.alpha = 0.0;
  FlowModel model(cfg, 9);
  const auto windows = random_windows(4, 3, 4, 3, 9);
  std::vector<const ForecastWindow*> ptrs;
  for (auto& w : windows) ptrs.push_back(&w);
  Pcg32 rng(9);
  const FlowBatch batch = draw_flow_batch(model, ptrs, rng);
  Tape tape(static_cast<const nn::ParamStore&>(model.params()));
  const auto l = flow_losses(tape, model, batch);
  CHECK(l.total.item() == l.time.item());
  CHECK(l.total.item() >= 0.0);
  CHECK(l.mark.item() >= 0.0);
}

TEST_CASE("gradient of the total is the weighted sum of component gradients") {
  auto cfg = small_config();
  cfg.alpha = 0.7;
  FlowModel model(cfg, 10);
  const auto windows = random_windows(4, 3, 4, 3, 10);
  std::vector<const ForecastWindow*> ptrs;
  for (auto& w : windows) ptrs.push_back(&w);
  Pcg32 rng(10);
  const FlowBatch batch = draw_flow_batch(model, ptrs, rng);
  auto grad_for = [&](int which) {
    model.params().zero_grad();
    Tape tape(model.params());
    const auto l = flow_losses(tape, model, batch);
    tape.backward(which == 0 ? l.total : which == 1 ? l.time : l.mark);
    return grads_of(model.params());
  };
  const auto gt = grad_for(0), g1 = grad_for(1), g2 = grad_for(2);
  REQUIRE(gt.size() == g1.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) worst = std::max(worst, std::abs(gt[i] - (g1[i] + 0.7 * g2[i])));
  CHECK(worst < 1e-10);
}

TEST_CASE("loss is invariant to the order of samples in a batch") {
  FlowModel model(small_config(), 11);
  const auto windows = random_windows(5, 3, 4, 3, 11);
  std::vector<const ForecastWindow*> ptrs;
  for (auto& w : windows) ptrs.push_back(&w);
  Pcg32 rng(11);
  const FlowBatch batch = draw_flow_batch(model, ptrs, rng);
  auto value = [&](const FlowBatch& b) {
    Tape tape(static_cast<const nn::ParamStore&>(model.params()));
    return flow_losses(tape, model, b).total.item();
  };
  const double base = value(batch);
  Pcg32 perm_rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> order(batch.samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[perm_rng.below(static_cast<std::uint32_t>(i))]);
    FlowBatch p = batch;
    for (std::size_t i = 0; i < order.size(); ++i) {
      p.samples[i] = batch.samples[order[i]];
      p.window_of[i] = batch.window_of[order[i]];
    }
    CHECK(std::abs(value(p) - base) <= 1e-12 * std::max(1.0, base));
  }
}

TEST_CASE("overfitting a fixed 8-sample batch") {
  ModelConfig cfg;
  cfg.vocab_size = 4;
  FlowModel model(cfg, 13);
  Pcg32 data_rng(13);
  const std::vector<ForecastWindow> windows{{random_seq(5, 4, data_rng), random_seq(8, 4, data_rng)}};
  const ForecastWindow* ptr[] = {&windows[0]};
  Pcg32 rng(14);
  const FlowBatch batch = draw_flow_batch(model, ptr, rng);
  REQUIRE(batch.samples.size() == 8);

  double initial = 0.0, last = 0.0;
  for (int step = 0; step <= 200; ++step) {
    model.params().zero_grad();
    Tape tape(model.params());
    const auto l = flow_losses(tape, model, batch);
    if (step == 0) initial = l.total.item();
    last = l.total.item();
    if (step == 200) break;
    tape.backward(l.total);
    nn::adam_step(model.params(), {});
  }
  MESSAGE("initial " << initial << " final " << last);
  CHECK(last < 0.01 * initial);

  Tape tape(static_cast<const nn::ParamStore&>(model.params()));
  const EventSequence* ctx[] = {&windows[0].context};
  std::vector<double> xt, t, rate(8, batch.rates[0]);
  std::vector<int> yt, rows(8, 0);
  for (const auto& s : batch.samples) {
    xt.push_back(s.xt);
    t.push_back(s.t);
    yt.push_back(s.yt);
  }
  const auto heads = model.forward(tape, xt, yt, t, rate, model.encode_contexts(tape, ctx), rows);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto row = heads.logits.value().subspan(i * 4, 4);
    CHECK(std::max_element(row.begin(), row.end()) - row.begin() == batch.samples[i].y1);
  }
}

TEST_CASE("training is deterministic given the seed") {
  const auto windows = random_windows(10, 3, 4, 3, 15);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.seed = 15;
  FlowModel a(small_config(), 15), b(small_config(), 15);
  const auto ra = train(a, windows, tc);
  const auto rb = train(b, windows, tc);
  CHECK(checkpoint_json(a, 15).dump() == checkpoint_json(b, 15).dump());
  REQUIRE(ra.trace.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) CHECK(ra.trace[e].loss_total == rb.trace[e].loss_total);
}

TEST_CASE("training without effective updates leaves parameters unchanged") {
  const auto windows = random_windows(6, 3, 4, 3, 16);
  const FlowModel fresh(small_config(), 16);
  TrainConfig tc;
  tc.epochs = 0;
  FlowModel a(small_config(), 16);
  train(a, windows, tc);
  CHECK(checkpoint_json(a, 0) == checkpoint_json(fresh, 0));

  tc.epochs = 1;
  tc.adam.lr = 0.0;
  FlowModel b(small_config(), 16);
  const auto r = train(b, windows, tc);
  CHECK(r.trace.size() == 1);
  for (const auto& [name, t] : b.params().params()) CHECK(t == fresh.params().at(name));
}

TEST_CASE("checkpoint round trip and shape validation") {
  const auto dir = std::filesystem::temp_directory_path();
  FlowModel model(small_config(), 17);
  save_checkpoint(dir / "ufm_model_ckpt.json", model, 17);
  const auto loaded = load_checkpoint(dir / "ufm_model_ckpt.json");
  CHECK(loaded.seed == 17);
  CHECK(checkpoint_json(loaded.model, 17) == checkpoint_json(model, 17));

  auto j = checkpoint_json(model, 17);
  j["config"]["hidden"] = 7;
  std::ofstream(dir / "ufm_model_bad.json") << j.dump();
  CHECK_THROWS_AS(load_checkpoint(dir / "ufm_model_bad.json"), ValidationError);
}

TEST_CASE("model config JSON round trip and validation") {
  auto c = small_config();
  c.activation = nn::Activation::Silu;
  c.prior_mode = MarkPriorMode::Context;
  c.rate_mode = RateMode::Manual;
  c.manual_rate = 2.5;
  const nlohmann::json j = c;
  const auto back = j.get<ModelConfig>();
  CHECK(nlohmann::json(back) == j);
  c.alpha = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}
