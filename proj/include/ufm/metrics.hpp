#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ufm/events.hpp"

namespace ufm::metrics {

struct OtdConfig {
  double delete_cost = 1.0;  // cost of leaving one event unmatched, in time units
};

// Minimum-cost order-preserving alignment of two event streams. Only events
// with equal marks may be paired, a pair costs the absolute difference of
// their arrival times (cumulative gaps from the window start), and every
// unpaired event costs delete_cost. O(n m) dynamic program.
double otd(const EventSequence& pred, const EventSequence& truth, const OtdConfig& cfg = {});

// sqrt(mean_i (pred_i - truth_i)^2) over the gaps. Throws ValidationError on a
// length mismatch.
double rmse_x(const EventSequence& pred, const EventSequence& truth);

enum class RmseYMode { Counts, Positions };
RmseYMode parse_rmse_y_mode(const std::string& s);

// Counts: sqrt(mean over marks k of (count_pred(k) - count_truth(k))^2).
// Positions: sqrt(mean_i [pred mark_i != truth mark_i]), requires equal lengths.
double rmse_y(const EventSequence& pred, const EventSequence& truth,
              RmseYMode mode = RmseYMode::Counts);

// (100 / L) sum_i 2 |p_i - t_i| / (|p_i| + |t_i|), in [0, 200].
double smape(const EventSequence& pred, const EventSequence& truth);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (0 for a single value)
};
Summary summarize(std::span<const double> values);

struct MetricReport {
  std::vector<double> otd, rmse_x, rmse_y, smape;  // per window (or per seed)
  std::size_t seeds = 1;

  Summary otd_summary() const { return summarize(otd); }
  Summary rmse_x_summary() const { return summarize(rmse_x); }
  Summary rmse_y_summary() const { return summarize(rmse_y); }
  Summary smape_summary() const { return summarize(smape); }
};

struct EvaluateOptions {
  OtdConfig otd;
  RmseYMode rmse_y_mode = RmseYMode::Counts;
};

// Scores aligned pairs (pred[i], truth[i]). Throws ValidationError when the
// counts differ or the list is empty.
MetricReport evaluate(std::span<const EventSequence> pred, std::span<const EventSequence> truth,
                      const EvaluateOptions& opts = {});

// {"windows":N,"seeds":k,"otd":{"mean","sd","values"},...}
nlohmann::json report_json(const MetricReport& r);

// Histogram of gaps with `bins` equal bins on [0, upper) plus one overflow bin.
struct Histogram {
  double upper = 0.0;
  std::vector<double> edges;        // bins + 1 edges
  std::vector<std::size_t> counts;  // bins + 1 entries, the last is overflow
  std::size_t total = 0;
  std::vector<double> fractions() const;
};

struct DistributionSummary {
  Histogram gaps;
  std::vector<double> mark_freq;  // relative frequency per mark
};

// Upper edge used by distribution summaries: the 99th percentile of all gaps.
double gap_percentile(std::span<const EventSequence> seqs, double q);
Histogram gap_histogram(std::span<const EventSequence> seqs, double upper, std::size_t bins = 50);
// Bins over [0, 99th percentile of `reference`) so several files share edges.
DistributionSummary distribution_summary(std::span<const EventSequence> seqs,
                                         std::span<const EventSequence> reference,
                                         std::size_t bins = 50);
DistributionSummary distribution_summary(std::span<const EventSequence> seqs, std::size_t bins = 50);

// Half the L1 distance between two histograms with identical edges.
double total_variation(const Histogram& a, const Histogram& b);

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);
void write_mark_csv(const std::filesystem::path& path, std::span<const double> freq);

}  // namespace ufm::metrics
