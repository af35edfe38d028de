#include "ufm/cli.hpp"

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ufm/error.hpp"
#include "ufm/events.hpp"
#include "ufm/synthgen.hpp"

namespace ufm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError("write failed for " + path.string());
}

std::vector<EventSequence> records_of(const fs::path& path) {
  auto ds = load_jsonl(path);
  if (!ds.rejected.empty()) {
    const auto& r = ds.rejected.front();
    throw ValidationError(path.string() + " line " + std::to_string(r.line) + ": " + r.message);
  }
  return std::move(ds.sequences);
}

}  // namespace

RunConfig load_run_config(const std::optional<fs::path>& path) {
  RunConfig cfg;
  if (!path) return cfg;
  const json j = read_json(*path);
  try {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("model")) j["model"].get_to(cfg.model);
    cfg.horizon = j.value("horizon", cfg.model.horizon);
    if (j.contains("train")) j["train"].get_to(cfg.train);
    if (j.contains("sampler")) j["sampler"].get_to(cfg.sampler);
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      cfg.eval.otd.delete_cost = m.value("delete_cost", cfg.eval.otd.delete_cost);
      if (m.contains("rmse_y")) cfg.eval.rmse_y_mode = metrics::parse_rmse_y_mode(m["rmse_y"]);
    }
  } catch (const json::exception& e) {
    throw ValidationError(path->string() + ": " + e.what());
  }
  if (!(cfg.eval.otd.delete_cost > 0.0)) throw ValidationError("metrics.delete_cost must be > 0");
  return cfg;
}

json run_config_json(const RunConfig& cfg) {
  json m = cfg.model;
  m["horizon"] = cfg.horizon;
  return json{{"seed", cfg.seed},
              {"horizon", cfg.horizon},
              {"model", m},
              {"train", cfg.train},
              {"sampler", cfg.sampler},
              {"metrics",
               {{"delete_cost", cfg.eval.otd.delete_cost},
                {"rmse_y", cfg.eval.rmse_y_mode == metrics::RmseYMode::Counts ? "counts"
                                                                               : "positions"}}}};
}

void cmd_simulate(const json& spec, const fs::path& out, std::optional<std::uint64_t> seed_override) {
  try {
    const std::string kind = spec.at("kind").get<std::string>();
    const auto count = spec.at("num_sequences").get<std::size_t>();
    const auto length = spec.at("length").get<std::size_t>();
    const auto max_length = spec.value("max_length", length);
    if (length == 0 || max_length < length) {
      throw ValidationError("simulate: need 1 <= length <= max_length");
    }
    const std::uint64_t seed = seed_override.value_or(spec.value("seed", std::uint64_t{0}));
    Pcg32 lengths(derive_seed(seed, 0x1e9), 0);

    std::vector<EventSequence> seqs;
    seqs.reserve(count);
    int vocab = 0;
    if (kind == "poisson") {
      const double rate = spec.at("rate").get<double>();
      const auto probs = spec.at("mark_probs").get<std::vector<double>>();
      vocab = static_cast<int>(probs.size());
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t n = length + lengths.below(static_cast<std::uint32_t>(max_length - length + 1));
        seqs.push_back(synth::simulate_poisson(rate, probs, n, seed, i));
      }
    } else if (kind == "hawkes") {
      const synth::HawkesSpec hs(spec.at("base_rates").get<std::vector<double>>(),
                                 spec.at("excite").get<std::vector<std::vector<double>>>(),
                                 spec.at("decay").get<double>());
      vocab = hs.vocab_size();
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t n = length + lengths.below(static_cast<std::uint32_t>(max_length - length + 1));
        seqs.push_back(synth::simulate_hawkes(hs, n, seed, i));
      }
    } else {
      throw ValidationError("simulate: unknown kind '" + kind + "' (expected poisson or hawkes)");
    }
    DatasetMeta meta;
    meta.vocab_size = vocab;
    meta.seed = seed;
    write_jsonl(out, meta, seqs);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("simulate spec: ") + e.what());
  }
}

TrainResult cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& checkpoint,
                      const fs::path& trace) {
  const Dataset ds = load_jsonl(data);
  for (const auto& r : ds.rejected) {
    std::clog << "warning: " << data.string() << " line " << r.line << " rejected: " << r.message << "\n";
  }
  ModelConfig mc = cfg.model;
  if (mc.vocab_size != 0 && mc.vocab_size != ds.meta.vocab_size) {
    throw ValidationError("config vocab_size " + std::to_string(mc.vocab_size) +
                          " does not match dataset " + std::to_string(ds.meta.vocab_size));
  }
  mc.vocab_size = ds.meta.vocab_size;
  mc.horizon = cfg.horizon;
  const auto windows = make_windows(ds.sequences, static_cast<std::size_t>(cfg.horizon));
  if (windows.empty()) throw ValidationError("train: no sequence in " + data.string() + " is longer than the horizon");

  FlowModel model(mc, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const TrainResult result = train(model, windows, tc);

  save_checkpoint(checkpoint, model, cfg.seed);
  std::ofstream csv(trace);
  if (!csv) throw ValidationError("cannot write " + trace.string());
  csv.precision(17);
  csv << "epoch,loss_total,loss_time,loss_mark\n";
  for (const auto& e : result.trace) {
    csv << e.epoch << ',' << e.loss_total << ',' << e.loss_time << ',' << e.loss_mark << '\n';
  }
  return result;
}

SampleSummary cmd_sample(const fs::path& checkpoint, const fs::path& data, const SamplerConfig& cfg,
                         const fs::path& out, const std::optional<fs::path>& truth_out) {
  const auto loaded = load_checkpoint(checkpoint);
  const auto& model = loaded.model;
  const Dataset ds = load_jsonl(data);
  for (const auto& r : ds.rejected) {
    std::clog << "warning: " << data.string() << " line " << r.line << " rejected: " << r.message << "\n";
  }
  if (ds.meta.vocab_size != model.vocab_size()) {
    throw ValidationError("checkpoint vocab_size " + std::to_string(model.vocab_size()) +
                          " does not match dataset " + std::to_string(ds.meta.vocab_size));
  }
  const auto horizon = static_cast<std::size_t>(model.config().horizon);
  const auto windows = make_windows(ds.sequences, horizon);
  const GenerateResult gen = generate(model, windows, cfg);

  std::vector<EventSequence> preds;
  preds.reserve(gen.forecasts.size());
  for (const auto& f : gen.forecasts) preds.emplace_back(f.inter_times, f.marks, model.vocab_size());
  DatasetMeta meta;
  meta.vocab_size = model.vocab_size();
  meta.seed = cfg.seed;
  meta.horizon = static_cast<int>(horizon);
  write_jsonl(out, meta, preds);
  if (truth_out) {
    std::vector<EventSequence> targets;
    for (const auto& w : windows) targets.push_back(w.target);
    write_jsonl(*truth_out, meta, targets);
  }
  return {windows.size(), gen.stats};
}

metrics::MetricReport cmd_evaluate(const fs::path& pred, const fs::path& truth,
                                   const metrics::EvaluateOptions& opts, const fs::path& out) {
  const Dataset p = load_jsonl(pred);
  const Dataset t = load_jsonl(truth);
  if (p.meta.vocab_size != t.meta.vocab_size) {
    throw ValidationError("prediction vocab_size " + std::to_string(p.meta.vocab_size) +
                          " does not match truth " + std::to_string(t.meta.vocab_size));
  }
  for (const auto* ds : {&p, &t}) {
    if (!ds->rejected.empty()) {
      throw ValidationError("line " + std::to_string(ds->rejected.front().line) + ": " +
                            ds->rejected.front().message);
    }
  }
  auto report = metrics::evaluate(p.sequences, t.sequences, opts);
  json j = metrics::report_json(report);
  j["version"] = 1;
  j["seed"] = p.meta.seed ? json(*p.meta.seed) : json(nullptr);
  j["config"] = {{"delete_cost", opts.otd.delete_cost},
                 {"rmse_y", opts.rmse_y_mode == metrics::RmseYMode::Counts ? "counts" : "positions"},
                 {"pred", pred.filename().string()},
                 {"truth", truth.filename().string()}};
  write_json(out, j);
  return report;
}

void cmd_hist(const std::vector<fs::path>& inputs, const std::optional<fs::path>& reference,
              const fs::path& out_dir, std::size_t bins) {
  if (inputs.empty()) throw ValidationError("hist: no input files");
  fs::create_directories(out_dir);
  const auto ref = records_of(reference.value_or(inputs.front()));
  for (const auto& in : inputs) {
    const auto seqs = records_of(in);
    const auto summary = metrics::distribution_summary(seqs, ref, bins);
    const std::string stem = in.stem().string();
    metrics::write_histogram_csv(out_dir / (stem + "_time_hist.csv"), summary.gaps);
    metrics::write_mark_csv(out_dir / (stem + "_mark_freq.csv"), summary.mark_freq);
  }
}

metrics::MetricReport cmd_run(const RunConfig& cfg, const fs::path& train_data,
                              const fs::path& test_data, std::size_t seeds, const fs::path& out_dir) {
  if (seeds == 0) throw ValidationError("run: --seeds must be >= 1");
  fs::create_directories(out_dir);
  metrics::MetricReport agg;
  agg.seeds = seeds;
  json per_seed = json::array();
  for (std::size_t k = 0; k < seeds; ++k) {
    RunConfig rc = cfg;
    rc.seed = cfg.seed + k;
    rc.sampler.seed = rc.seed;
    const fs::path dir = out_dir / ("seed_" + std::to_string(rc.seed));
    fs::create_directories(dir);
    cmd_train(rc, train_data, dir / "model.json", dir / "loss.csv");
    cmd_sample(dir / "model.json", test_data, rc.sampler, dir / "pred.jsonl", dir / "truth.jsonl");
    const auto r = cmd_evaluate(dir / "pred.jsonl", dir / "truth.jsonl", rc.eval, dir / "report.json");
    agg.otd.push_back(r.otd_summary().mean);
    agg.rmse_x.push_back(r.rmse_x_summary().mean);
    agg.rmse_y.push_back(r.rmse_y_summary().mean);
    agg.smape.push_back(r.smape_summary().mean);
    per_seed.push_back(rc.seed);
  }
  json j = metrics::report_json(agg);
  j.erase("windows");
  j["version"] = 1;
  j["seed"] = cfg.seed;
  j["seed_list"] = per_seed;
  j["config"] = run_config_json(cfg);
  write_json(out_dir / "report.json", j);
  return agg;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Flow-matching forecaster for marked event sequences"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon;
  std::optional<int> steps;
  std::string out;

  auto common = [&](CLI::App* sub, bool with_horizon, bool with_steps) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", seed, "Seed for every random stream");
    if (with_horizon) sub->add_option("--horizon", horizon, "Number of future events L");
    if (with_steps) sub->add_option("--steps", steps, "Flow steps S for sampling");
  };

  auto* simulate = app.add_subcommand("simulate", "Write a synthetic Poisson or Hawkes dataset");
  common(simulate, false, false);
  simulate->add_option("--out", out, "Output JSONL")->required();

  std::string data;
  std::string trace;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  common(train_cmd, true, false);
  train_cmd->add_option("--data", data, "Training dataset JSONL")->required();
  train_cmd->add_option("--out", out, "Checkpoint path")->required();
  train_cmd->add_option("--trace", trace, "Loss trace CSV (default: <out stem>.loss.csv)");

  std::string checkpoint;
  std::string truth_out;
  auto* sample = app.add_subcommand("sample", "Generate forecasts for every window of a dataset");
  common(sample, false, true);
  sample->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  sample->add_option("--data", data, "Dataset JSONL whose sequences are split into windows")->required();
  sample->add_option("--out", out, "Predictions JSONL")->required();
  sample->add_option("--truth-out", truth_out, "Also write the true targets here");

  std::string pred;
  std::string truth;
  std::optional<double> delete_cost;
  std::optional<std::string> rmse_y_mode;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against true targets");
  common(evaluate, false, false);
  evaluate->add_option("--pred", pred, "Predictions JSONL")->required();
  evaluate->add_option("--truth", truth, "True targets JSONL, same record order")->required();
  evaluate->add_option("--out", out, "Report JSON")->required();
  evaluate->add_option("--delete-cost", delete_cost, "OTD cost of an unmatched event");
  evaluate->add_option("--rmse-y", rmse_y_mode, "counts (default) or positions");

  std::vector<std::string> inputs;
  std::optional<std::string> reference;
  std::size_t bins = 50;
  auto* hist = app.add_subcommand("hist", "Gap histograms and mark frequencies as CSV");
  common(hist, false, false);
  hist->add_option("--input", inputs, "JSONL files to summarise")->required();
  hist->add_option("--reference", reference, "File whose 99th percentile sets the bin range");
  hist->add_option("--bins", bins, "Number of regular bins");
  hist->add_option("--out", out, "Output directory")->required();

  std::string train_data;
  std::string test_data;
  std::size_t seeds = 1;
  auto* run = app.add_subcommand("run", "Train, sample and evaluate over several seeds");
  common(run, true, true);
  run->add_option("--train", train_data, "Training dataset JSONL")->required();
  run->add_option("--test", test_data, "Test dataset JSONL")->required();
  run->add_option("--seeds", seeds, "Number of consecutive seeds");
  run->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    auto load = [&] {
      RunConfig cfg = load_run_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt);
      if (seed) cfg.seed = *seed;
      if (horizon) cfg.horizon = *horizon;
      if (steps) cfg.sampler.steps = *steps;
      cfg.sampler.seed = cfg.seed;
      if (delete_cost) cfg.eval.otd.delete_cost = *delete_cost;
      if (rmse_y_mode) cfg.eval.rmse_y_mode = metrics::parse_rmse_y_mode(*rmse_y_mode);
      if (cfg.horizon < 1) throw ValidationError("--horizon must be >= 1");
      cfg.sampler.validate();
      return cfg;
    };

    if (*simulate) {
      if (!config_path) throw ValidationError("simulate: --config <spec.json> is required");
      cmd_simulate(read_json(*config_path), out, seed);
    } else if (*train_cmd) {
      const RunConfig cfg = load();
      fs::path trace_path = trace.empty() ? fs::path(out).replace_extension(".loss.csv") : fs::path(trace);
      const auto r = cmd_train(cfg, data, out, trace_path);
      if (!r.trace.empty()) {
        std::cout << "final epoch loss_total " << r.trace.back().loss_total << "\n";
      }
    } else if (*sample) {
      const RunConfig cfg = load();
      const auto s = cmd_sample(checkpoint, data, cfg.sampler, out,
                                truth_out.empty() ? std::nullopt : std::optional<fs::path>(truth_out));
      std::cout << "sampled " << s.windows << " windows\n";
      if (s.stats.violations() != 0) {
        throw NumericalError("sampler invariant violations: " + std::to_string(s.stats.violations()));
      }
    } else if (*evaluate) {
      const RunConfig cfg = load();
      const auto r = cmd_evaluate(pred, truth, cfg.eval, out);
      std::cout << "otd " << r.otd_summary().mean << " rmse_x " << r.rmse_x_summary().mean
                << " rmse_y " << r.rmse_y_summary().mean << " smape " << r.smape_summary().mean << "\n";
    } else if (*hist) {
      std::vector<fs::path> paths(inputs.begin(), inputs.end());
      cmd_hist(paths, reference ? std::optional<fs::path>(*reference) : std::nullopt, out, bins);
    } else if (*run) {
      const RunConfig cfg = load();
      const auto r = cmd_run(cfg, train_data, test_data, seeds, out);
      auto show = [](const char* name, const metrics::Summary& s) {
        std::cout << name << " " << s.mean << " +- " << s.sd << "\n";
      };
      show("otd", r.otd_summary());
      show("rmse_x", r.rmse_x_summary());
      show("rmse_y", r.rmse_y_summary());
      show("smape", r.smape_summary());
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalAbort;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  }
  return kOk;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ufm::cli
