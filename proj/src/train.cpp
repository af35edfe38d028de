#include "ufm/train.hpp"

#include <numeric>
#include <sstream>

#include "ufm/error.hpp"
#include "ufm/nn/tape.hpp"

namespace ufm {

using nlohmann::json;

void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"lr", c.adam.lr},
           {"beta1", c.adam.beta1},      {"beta2", c.adam.beta2},      {"eps", c.adam.eps},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  if (c.batch_size == 0) throw ValidationError("train config: batch_size must be >= 1");
  if (!(c.adam.lr > 0.0)) throw ValidationError("train config: lr must be > 0");
}

TrainResult train(FlowModel& model, std::span<const ForecastWindow> windows,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (windows.empty()) throw ValidationError("train: no training windows");
  if (cfg.batch_size == 0) throw ValidationError("train: batch_size must be >= 1");
  for (const auto& w : windows) {
    if (w.context.vocab_size() != model.config().vocab_size) {
      throw ValidationError("train: window vocab_size does not match the model");
    }
  }

  Pcg32 rng(derive_seed(cfg.seed, 0x7a1), 1);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.below(static_cast<std::uint32_t>(i));
      std::swap(order[i - 1], order[j]);
    }
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const ForecastWindow*> chunk;
      for (std::size_t k = start; k < stop; ++k) chunk.push_back(&windows[order[k]]);
      const FlowBatch batch = draw_flow_batch(model, chunk, rng);

      auto diagnostic = [&](const std::string& what) {
        std::ostringstream os;
        os << "training aborted at epoch " << epoch << ", batch " << batches << ": " << what
           << " (parameter norm " << model.params().value_norm() << ", gradient norm "
           << model.params().grad_norm() << ")";
        return os.str();
      };
      try {
        nn::Tape tape(model.params());
        const LossVars loss = flow_losses(tape, model, batch);
        model.params().zero_grad();
        tape.backward(loss.total);
        stats.loss_total += loss.total.item();
        stats.loss_time += loss.time.item();
        stats.loss_mark += loss.mark.item();
      } catch (const NumericalError& e) {
        throw NumericalError(diagnostic(e.what()));
      }
      nn::adam_step(model.params(), cfg.adam);
      ++batches;
    }
    const double n = static_cast<double>(batches);
    stats.loss_total /= n;
    stats.loss_time /= n;
    stats.loss_mark /= n;
    result.trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

}  // namespace ufm
