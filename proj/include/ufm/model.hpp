#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ufm/events.hpp"
#include "ufm/nn/layers.hpp"
#include "ufm/nn/tape.hpp"
#include "ufm/nn/tensor.hpp"
#include "ufm/rng.hpp"

namespace ufm {

enum class RateMode { Context, Manual };
enum class MarkPriorMode { Uniform, Context };

struct ModelConfig {
  int vocab_size = 0;  // M
  int horizon = 20;    // L
  std::size_t hidden = 64;            // encoder state width d
  std::size_t mark_embed = 16;
  std::size_t time_embed = 16;
  std::size_t flow_time_features = 16;  // sinusoidal features of the flow time t
  std::vector<std::size_t> vfield_hidden{128, 128};
  std::vector<std::size_t> logits_hidden{128, 128};
  nn::Activation activation = nn::Activation::Tanh;
  double alpha = 1.0;  // weight of the mark loss
  RateMode rate_mode = RateMode::Context;
  double manual_rate = 1.0;
  double rate_floor = 1e-6;
  MarkPriorMode prior_mode = MarkPriorMode::Uniform;

  // Throws ValidationError when a field is out of range.
  void validate() const;
  // Width of the rows fed to both flow heads.
  std::size_t flow_input_dim() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& c);

// Encoded history h_c.
struct ContextVector {
  std::vector<double> values;
};

// Noise distributions for one window: Exp(rate) for gaps, Categorical(mark_probs)
// for marks.
struct BasePrior {
  double rate = 1.0;
  std::vector<double> mark_probs;
};

// Everything the flow heads need besides the current state.
struct Condition {
  ContextVector context;
  BasePrior prior;
};

// One training tuple on the probability path.
struct FlowSample {
  double x0 = 1.0;  // noise gap
  double x1 = 1.0;  // data gap
  double xt = 1.0;  // (1 - t) x0 + t x1
  int y0 = 0;
  int y1 = 0;
  int yt = 0;       // corrupted mark fed to the heads
  double t = 0.0;
};

// x_t = (1 - t) x0 + t x1.
double interpolate_time(double x0, double x1, double t);

// Draws y0 ~ prior, then returns y1 with probability t and y0 otherwise, so
// y_t ~ (1 - t) prior + t delta_{y1}. Consumes exactly one categorical and
// one uniform draw.
int corrupt_mark(int y1, double t, std::span<const double> prior, Pcg32& rng, int* y0 = nullptr);

// 1 / mean(inter_times), floored at `floor`.
double estimate_lambda(const EventSequence& context, double floor);

// Mark frequencies in the context with one pseudo-count per mark.
std::vector<double> estimate_mark_prior(const EventSequence& context);

// Sinusoidal features of the flow time (sin/cos pairs at geometrically spaced
// frequencies from 1 to 100).
std::vector<double> flow_time_features(double t, std::size_t count);

// Velocity and mark logits for a batch of states from one window.
class FlowField {
 public:
  virtual ~FlowField() = default;
  virtual int vocab_size() const = 0;
  // velocity.size() == x.size(); logits is row-major (x.size() x M).
  virtual void evaluate(std::span<const double> x, std::span<const int> y, double t,
                        const Condition& cond, std::span<double> velocity,
                        std::span<double> logits) const = 0;
};

// Context encoder (mark embedding + log1p time embedding + GRU), velocity head
// v and logit head u over a shared ParamStore.
//
// Both heads read [lambda*x_t, log1p(lambda*x_t), onehot(y_t), sin/cos(t), h_c]
// where lambda is the window's base rate, and the velocity head's output is
// divided by lambda, so a network trained at one time scale transfers to
// another.
class FlowModel : public FlowField {
 public:
  // Fresh parameters initialised from `seed`.
  FlowModel(ModelConfig cfg, std::uint64_t seed);
  // Adopts existing parameters after checking names and shapes.
  FlowModel(ModelConfig cfg, nn::ParamStore params);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Final GRU states for a batch of contexts, (B x d). Contexts of different
  // length are processed together; a finished context keeps its state.
  nn::Var encode_contexts(nn::Tape& tape, std::span<const EventSequence* const> contexts) const;
  ContextVector encode_context(const EventSequence& context) const;

  BasePrior base_prior(const EventSequence& context) const;
  Condition condition(const EventSequence& context) const;

  struct Heads {
    nn::Var velocity;  // (N x 1)
    nn::Var logits;    // (N x M)
  };
  // Row i uses context row `context_row[i]` of `contexts` and rate `rate[i]`.
  Heads forward(nn::Tape& tape, std::span<const double> xt, std::span<const int> yt,
                std::span<const double> t, std::span<const double> rate, nn::Var contexts,
                std::span<const int> context_row) const;

  int vocab_size() const override { return cfg_.vocab_size; }
  void evaluate(std::span<const double> x, std::span<const int> y, double t, const Condition& cond,
                std::span<double> velocity, std::span<double> logits) const override;

 private:
  void build_shapes(nn::ParamStore& store, std::uint64_t seed) const;

  ModelConfig cfg_;
  nn::ParamStore params_;
};

// A minibatch of windows with one FlowSample per target event.
struct FlowBatch {
  std::vector<const EventSequence*> contexts;
  std::vector<double> rates;         // per window
  std::vector<FlowSample> samples;
  std::vector<int> window_of;        // per sample
};

// For every target event: t ~ U[0,1), x0 ~ Exp(rate), y_t by corrupt_mark.
FlowBatch draw_flow_batch(const FlowModel& model, std::span<const ForecastWindow* const> windows,
                          Pcg32& rng);

struct LossVars {
  nn::Var time;
  nn::Var mark;
  nn::Var total;
};
// Mean squared velocity error, mean cross-entropy, and time + alpha * mark.
LossVars flow_losses(nn::Tape& tape, const FlowModel& model, const FlowBatch& batch);

// Value-level versions of the same objectives, used with arbitrary heads.
double loss_time(std::span<const double> velocity, std::span<const FlowSample> samples);
// logits is row-major (samples.size() x vocab_size).
double loss_mark(std::span<const double> logits, int vocab_size, std::span<const FlowSample> samples);
double loss_total(double time_loss, double mark_loss, double alpha);

// Checkpoint: {"version":1,"seed":s,"config":{...},"params":{...}}.
nlohmann::json checkpoint_json(const FlowModel& model, std::uint64_t seed);
void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, std::uint64_t seed);
struct LoadedCheckpoint {
  FlowModel model;
  std::uint64_t seed = 0;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ufm
