#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "ufm/events.hpp"
#include "ufm/model.hpp"
#include "ufm/nn/adam.hpp"

namespace ufm {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;  // windows per minibatch
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Minibatch means averaged over one epoch.
struct EpochStats {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_time = 0.0;
  double loss_mark = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> trace;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Each epoch shuffles the windows, and for every minibatch draws fresh flow
// samples, back-propagates the total loss and takes one Adam step. The run
// is a pure function of (initial parameters, windows, config). A non-finite
// loss or gradient throws NumericalError with epoch, batch and parameter
// norms in the message.
TrainResult train(FlowModel& model, std::span<const ForecastWindow> windows,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace ufm
