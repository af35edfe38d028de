#include "ufm/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ufm/error.hpp"
#include "ufm/nn/serialize.hpp"

namespace ufm {

using nlohmann::json;
using nn::Tape;
using nn::Var;

namespace {

constexpr const char* kMarkEmbed = "encoder.mark_embed";
constexpr const char* kTimeW = "encoder.time_embed.w";
constexpr const char* kTimeB = "encoder.time_embed.b";
constexpr const char* kGru = "encoder.gru";
constexpr const char* kVfield = "vfield";
constexpr const char* kLogits = "logits";

std::vector<std::size_t> head_sizes(std::size_t in, const std::vector<std::size_t>& hidden,
                                    std::size_t out) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

std::string rate_mode_name(RateMode m) { return m == RateMode::Context ? "context" : "manual"; }
std::string prior_mode_name(MarkPriorMode m) {
  return m == MarkPriorMode::Uniform ? "uniform" : "context";
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("model config: " + what); };
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (horizon < 1) fail("horizon must be >= 1");
  if (hidden < 1 || mark_embed < 1 || time_embed < 1 || flow_time_features < 1) {
    fail("all dimensions must be >= 1");
  }
  for (auto w : vfield_hidden) {
    if (w < 1) fail("vfield widths must be >= 1");
  }
  for (auto w : logits_hidden) {
    if (w < 1) fail("logits widths must be >= 1");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
  if (!(manual_rate > 0.0)) fail("manual_rate must be > 0");
  if (!(rate_floor > 0.0)) fail("rate_floor must be > 0");
}

std::size_t ModelConfig::flow_input_dim() const {
  return 2 + static_cast<std::size_t>(vocab_size) + flow_time_features + hidden;
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"vocab_size", c.vocab_size},
           {"horizon", c.horizon},
           {"hidden", c.hidden},
           {"mark_embed", c.mark_embed},
           {"time_embed", c.time_embed},
           {"flow_time_features", c.flow_time_features},
           {"vfield_hidden", c.vfield_hidden},
           {"logits_hidden", c.logits_hidden},
           {"activation", nn::to_string(c.activation)},
           {"alpha", c.alpha},
           {"rate_mode", rate_mode_name(c.rate_mode)},
           {"manual_rate", c.manual_rate},
           {"rate_floor", c.rate_floor},
           {"prior_mode", prior_mode_name(c.prior_mode)}};
}

void from_json(const json& j, ModelConfig& c) {
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.horizon = j.value("horizon", c.horizon);
    c.hidden = j.value("hidden", c.hidden);
    c.mark_embed = j.value("mark_embed", c.mark_embed);
    c.time_embed = j.value("time_embed", c.time_embed);
    c.flow_time_features = j.value("flow_time_features", c.flow_time_features);
    c.vfield_hidden = j.value("vfield_hidden", c.vfield_hidden);
    c.logits_hidden = j.value("logits_hidden", c.logits_hidden);
    if (j.contains("activation")) c.activation = nn::parse_activation(j["activation"].get<std::string>());
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("rate_mode")) {
      const auto m = j["rate_mode"].get<std::string>();
      if (m == "context") c.rate_mode = RateMode::Context;
      else if (m == "manual") c.rate_mode = RateMode::Manual;
      else throw ValidationError("model config: rate_mode must be context or manual");
    }
    c.manual_rate = j.value("manual_rate", c.manual_rate);
    c.rate_floor = j.value("rate_floor", c.rate_floor);
    if (j.contains("prior_mode")) {
      const auto m = j["prior_mode"].get<std::string>();
      if (m == "uniform") c.prior_mode = MarkPriorMode::Uniform;
      else if (m == "context") c.prior_mode = MarkPriorMode::Context;
      else throw ValidationError("model config: prior_mode must be uniform or context");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
}

double interpolate_time(double x0, double x1, double t) { return (1.0 - t) * x0 + t * x1; }

int corrupt_mark(int y1, double t, std::span<const double> prior, Pcg32& rng, int* y0) {
  const int noise = rng.categorical(prior);
  if (y0) *y0 = noise;
  return rng.uniform() < t ? y1 : noise;
}

double estimate_lambda(const EventSequence& context, double floor) {
  double s = 0.0;
  for (double dt : context.inter_times()) s += dt;
  const double mean = s / static_cast<double>(context.size());
  return std::max(1.0 / mean, floor);
}

std::vector<double> estimate_mark_prior(const EventSequence& context) {
  const auto m = static_cast<std::size_t>(context.vocab_size());
  std::vector<double> p(m, 1.0);
  for (int k : context.marks()) p[static_cast<std::size_t>(k)] += 1.0;
  const double total = static_cast<double>(context.size() + m);
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> flow_time_features(double t, std::size_t count) {
  std::vector<double> f(count);
  const std::size_t freqs = (count + 1) / 2;
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t k = j / 2;
    const double frac = freqs > 1 ? static_cast<double>(k) / static_cast<double>(freqs - 1) : 0.0;
    const double omega = std::exp(frac * std::log(100.0));
    f[j] = (j % 2 == 0) ? std::sin(omega * t) : std::cos(omega * t);
  }
  return f;
}

FlowModel::FlowModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_shapes(params_, seed);
}

FlowModel::FlowModel(ModelConfig cfg, nn::ParamStore params) : cfg_(std::move(cfg)) {
  cfg_.validate();
  nn::ParamStore expected;
  build_shapes(expected, 0);
  nn::load_params(expected, nn::params_to_json(params));
  params_ = std::move(expected);
}

void FlowModel::build_shapes(nn::ParamStore& store, std::uint64_t seed) const {
  Pcg32 rng(derive_seed(seed, 0x1417), 0);
  const auto m = static_cast<std::size_t>(cfg_.vocab_size);
  nn::init_embedding(store, "encoder.mark_embed", m, cfg_.mark_embed, rng);
  {
    nn::Tensor w({1, cfg_.time_embed});
    for (double& v : w.data()) v = 2.0 * rng.uniform() - 1.0;
    store.add(kTimeW, std::move(w));
    store.add(kTimeB, nn::Tensor({1, cfg_.time_embed}));
  }
  nn::init_gru(store, kGru, cfg_.mark_embed + cfg_.time_embed, cfg_.hidden, rng);
  const auto in = cfg_.flow_input_dim();
  nn::init_mlp(store, kVfield, head_sizes(in, cfg_.vfield_hidden, 1), rng);
  nn::init_mlp(store, kLogits, head_sizes(in, cfg_.logits_hidden, m), rng);
}

Var FlowModel::encode_contexts(Tape& tape, std::span<const EventSequence* const> contexts) const {
  const std::size_t b = contexts.size();
  if (b == 0) throw ValidationError("encode_contexts: no contexts");
  std::size_t longest = 0;
  for (const auto* c : contexts) {
    if (c->empty()) throw ValidationError("encode_contexts: context must contain at least one event");
    if (c->vocab_size() != cfg_.vocab_size) {
      throw ValidationError("encode_contexts: context vocab_size " +
                            std::to_string(c->vocab_size()) + " does not match model " +
                            std::to_string(cfg_.vocab_size));
    }
    longest = std::max(longest, c->size());
  }
  Var h = tape.constant(b, cfg_.hidden, std::vector<double>(b * cfg_.hidden, 0.0));
  std::vector<int> marks(b);
  std::vector<double> log_gap(b);
  std::vector<double> active(b);
  for (std::size_t s = 0; s < longest; ++s) {
    bool all_active = true;
    for (std::size_t i = 0; i < b; ++i) {
      const bool on = s < contexts[i]->size();
      all_active = all_active && on;
      active[i] = on ? 1.0 : 0.0;
      marks[i] = on ? contexts[i]->marks()[s] : 0;
      log_gap[i] = on ? std::log1p(contexts[i]->inter_times()[s]) : 0.0;
    }
    Var mark_part = nn::embed(tape, "encoder.mark_embed", marks);
    Var time_part = nn::add_bias(nn::matmul(tape.constant(b, 1, log_gap), tape.param(kTimeW)),
                                 tape.param(kTimeB));
    const Var parts[] = {mark_part, time_part};
    Var next = nn::gru_step(tape, kGru, nn::concat_cols(parts), h);
    h = all_active ? next : nn::add(h, nn::scale_rows(nn::sub(next, h), active));
  }
  return h;
}

ContextVector FlowModel::encode_context(const EventSequence& context) const {
  Tape tape(params_);
  const EventSequence* one[] = {&context};
  Var h = encode_contexts(tape, one);
  return {std::vector<double>(h.value().begin(), h.value().end())};
}

BasePrior FlowModel::base_prior(const EventSequence& context) const {
  BasePrior p;
  p.rate = cfg_.rate_mode == RateMode::Manual ? cfg_.manual_rate
                                              : estimate_lambda(context, cfg_.rate_floor);
  if (cfg_.prior_mode == MarkPriorMode::Context) {
    p.mark_probs = estimate_mark_prior(context);
  } else {
    p.mark_probs.assign(static_cast<std::size_t>(cfg_.vocab_size),
                        1.0 / static_cast<double>(cfg_.vocab_size));
  }
  return p;
}

Condition FlowModel::condition(const EventSequence& context) const {
  return {encode_context(context), base_prior(context)};
}

FlowModel::Heads FlowModel::forward(Tape& tape, std::span<const double> xt,
                                    std::span<const int> yt, std::span<const double> t,
                                    std::span<const double> rate, Var contexts,
                                    std::span<const int> context_row) const {
  const std::size_t n = xt.size();
  if (yt.size() != n || t.size() != n || rate.size() != n || context_row.size() != n) {
    throw ValidationError("forward: per-row inputs have inconsistent lengths");
  }
  if (contexts.cols() != cfg_.hidden) {
    throw ValidationError("forward: context width " + std::to_string(contexts.cols()) +
                          " does not match hidden size " + std::to_string(cfg_.hidden));
  }
  const auto m = static_cast<std::size_t>(cfg_.vocab_size);
  const std::size_t tf = cfg_.flow_time_features;
  const std::size_t w = 2 + m + tf;
  std::vector<double> feats(n * w, 0.0);
  std::vector<double> inv_rate(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (yt[i] < 0 || static_cast<std::size_t>(yt[i]) >= m) {
      throw ValidationError("forward: mark " + std::to_string(yt[i]) + " outside [0, " +
                            std::to_string(m) + ")");
    }
    double* row = feats.data() + i * w;
    const double scaled = rate[i] * xt[i];
    row[0] = scaled;
    row[1] = std::log1p(std::max(scaled, 0.0));
    row[2 + static_cast<std::size_t>(yt[i])] = 1.0;
    const auto tfeat = flow_time_features(t[i], tf);
    std::copy(tfeat.begin(), tfeat.end(), row + 2 + m);
    inv_rate[i] = 1.0 / rate[i];
  }
  const Var parts[] = {tape.constant(n, w, std::move(feats)), nn::gather_rows(contexts, context_row)};
  Var input = nn::concat_cols(parts);
  const auto in = cfg_.flow_input_dim();
  const auto vs = head_sizes(in, cfg_.vfield_hidden, 1);
  const auto ls = head_sizes(in, cfg_.logits_hidden, m);
  Var v = nn::scale_rows(nn::mlp_forward(tape, kVfield, input, vs, cfg_.activation), inv_rate);
  Var logits = nn::mlp_forward(tape, kLogits, input, ls, cfg_.activation);
  return {v, logits};
}

void FlowModel::evaluate(std::span<const double> x, std::span<const int> y, double t,
                         const Condition& cond, std::span<double> velocity,
                         std::span<double> logits) const {
  const std::size_t n = x.size();
  const auto m = static_cast<std::size_t>(cfg_.vocab_size);
  if (velocity.size() != n || logits.size() != n * m) {
    throw ValidationError("evaluate: output buffers have the wrong size");
  }
  Tape tape(params_);
  Var ctx = tape.constant(1, cfg_.hidden, cond.context.values);
  const std::vector<double> ts(n, t);
  const std::vector<double> rates(n, cond.prior.rate);
  const std::vector<int> rows(n, 0);
  auto heads = forward(tape, x, y, ts, rates, ctx, rows);
  std::copy(heads.velocity.value().begin(), heads.velocity.value().end(), velocity.begin());
  std::copy(heads.logits.value().begin(), heads.logits.value().end(), logits.begin());
}

FlowBatch draw_flow_batch(const FlowModel& model, std::span<const ForecastWindow* const> windows,
                          Pcg32& rng) {
  FlowBatch batch;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = *windows[w];
    const BasePrior prior = model.base_prior(win.context);
    batch.contexts.push_back(&win.context);
    batch.rates.push_back(prior.rate);
    for (std::size_t j = 0; j < win.target.size(); ++j) {
      FlowSample s;
      s.t = rng.uniform();
      s.x0 = rng.exponential(prior.rate);
      s.x1 = win.target.inter_times()[j];
      s.xt = interpolate_time(s.x0, s.x1, s.t);
      s.y1 = win.target.marks()[j];
      s.yt = corrupt_mark(s.y1, s.t, prior.mark_probs, rng, &s.y0);
      batch.samples.push_back(s);
      batch.window_of.push_back(static_cast<int>(w));
    }
  }
  return batch;
}

LossVars flow_losses(Tape& tape, const FlowModel& model, const FlowBatch& batch) {
  const std::size_t n = batch.samples.size();
  if (n == 0) throw ValidationError("flow_losses: empty batch");
  std::vector<double> xt(n), t(n), rate(n), target(n);
  std::vector<int> yt(n), y1(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = batch.samples[i];
    xt[i] = s.xt;
    t[i] = s.t;
    yt[i] = s.yt;
    y1[i] = s.y1;
    rate[i] = batch.rates[static_cast<std::size_t>(batch.window_of[i])];
    target[i] = s.x1 - s.x0;
  }
  Var ctx = model.encode_contexts(tape, batch.contexts);
  auto heads = model.forward(tape, xt, yt, t, rate, ctx, batch.window_of);
  LossVars out;
  out.time = nn::mean_squared_error(heads.velocity, target);
  out.mark = nn::cross_entropy(heads.logits, y1);
  out.total = nn::add(out.time, nn::affine(out.mark, model.config().alpha, 0.0));
  return out;
}

double loss_time(std::span<const double> velocity, std::span<const FlowSample> samples) {
  if (samples.empty() || velocity.size() != samples.size()) {
    throw ValidationError("loss_time: need one velocity per sample and a nonempty batch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = velocity[i] - (samples[i].x1 - samples[i].x0);
    s += d * d;
  }
  return s / static_cast<double>(samples.size());
}

double loss_mark(std::span<const double> logits, int vocab_size, std::span<const FlowSample> samples) {
  const auto m = static_cast<std::size_t>(vocab_size);
  if (samples.empty() || logits.size() != samples.size() * m) {
    throw ValidationError("loss_mark: need M logits per sample and a nonempty batch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double* row = logits.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double se = 0.0;
    for (std::size_t j = 0; j < m; ++j) se += std::exp(row[j] - mx);
    s += mx + std::log(se) - row[samples[i].y1];
  }
  return s / static_cast<double>(samples.size());
}

double loss_total(double time_loss, double mark_loss, double alpha) {
  return time_loss + alpha * mark_loss;
}

json checkpoint_json(const FlowModel& model, std::uint64_t seed) {
  return json{{"version", 1},
              {"seed", seed},
              {"config", model.config()},
              {"params", nn::params_to_json(model.params())}};
}

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << checkpoint_json(model, seed).dump() << '\n';
  if (!out) throw ValidationError("write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed checkpoint: " + e.what());
  }
  if (j.value("version", 0) != 1) throw ValidationError(path.string() + ": unsupported checkpoint version");
  ModelConfig cfg = j.at("config").get<ModelConfig>();
  cfg.validate();
  FlowModel model(cfg, 0);
  nn::load_params(model.params(), j.at("params"));
  return {std::move(model), j.value("seed", std::uint64_t{0})};
}

}  // namespace ufm
