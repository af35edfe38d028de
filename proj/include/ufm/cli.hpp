#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ufm/metrics.hpp"
#include "ufm/model.hpp"
#include "ufm/sampler.hpp"
#include "ufm/train.hpp"

namespace ufm::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kNumericalAbort = 2;

// Everything a pipeline run needs. JSON layout:
//   {"seed":0,"horizon":20,"model":{...},"train":{...},"sampler":{...},
//    "metrics":{"delete_cost":1.0,"rmse_y":"counts"}}
struct RunConfig {
  std::uint64_t seed = 0;
  int horizon = 20;
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  metrics::EvaluateOptions eval;
};

RunConfig load_run_config(const std::optional<std::filesystem::path>& path);
nlohmann::json run_config_json(const RunConfig& cfg);

// Writes a synthetic dataset. `spec` is
//   {"kind":"poisson","rate":1.0,"mark_probs":[...], ...} or
//   {"kind":"hawkes","base_rates":[...],"excite":[[...]],"decay":1.0, ...}
// plus "num_sequences", "length" (optional "max_length" for a uniform
// length range) and "seed". Sequence i uses stream i of the seed.
void cmd_simulate(const nlohmann::json& spec, const std::filesystem::path& out,
                  std::optional<std::uint64_t> seed = std::nullopt);

// Trains a fresh model on windows cut from `data` (horizon from cfg) and
// writes the checkpoint plus a CSV with one row per epoch.
TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& data,
                      const std::filesystem::path& checkpoint, const std::filesystem::path& trace);

// Samples one forecast per window of `data`; windows use the checkpoint's
// horizon. Optionally writes the true targets in the same format.
struct SampleSummary {
  std::size_t windows = 0;
  SamplerStats stats;
};
SampleSummary cmd_sample(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                         const SamplerConfig& cfg, const std::filesystem::path& out,
                         const std::optional<std::filesystem::path>& truth_out = std::nullopt);

// Scores aligned records of two JSONL files and writes report.json.
metrics::MetricReport cmd_evaluate(const std::filesystem::path& pred,
                                   const std::filesystem::path& truth,
                                   const metrics::EvaluateOptions& opts,
                                   const std::filesystem::path& out);

// For every input writes <stem>_time_hist.csv and <stem>_mark_freq.csv into
// out_dir. Bin edges come from `reference` (default: the first input).
void cmd_hist(const std::vector<std::filesystem::path>& inputs,
              const std::optional<std::filesystem::path>& reference,
              const std::filesystem::path& out_dir, std::size_t bins = 50);

// Repeats train + sample + evaluate for seeds seed, seed+1, ... and writes
// per-seed artifacts under out_dir/seed_<s>/ and an aggregate report.json
// holding the mean and s.d. of the per-seed means.
metrics::MetricReport cmd_run(const RunConfig& cfg, const std::filesystem::path& train_data,
                              const std::filesystem::path& test_data, std::size_t seeds,
                              const std::filesystem::path& out_dir);

// Entry point of the ufm_tpp binary. Returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace ufm::cli
