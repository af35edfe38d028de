#include "ufm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ufm/error.hpp"

namespace ufm::metrics {

using nlohmann::json;

namespace {

void same_length(const char* what, const EventSequence& a, const EventSequence& b) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ValidationError(std::string(what) + ": empty sequences");
}

}  // namespace

double otd(const EventSequence& pred, const EventSequence& truth, const OtdConfig& cfg) {
  if (!(cfg.delete_cost > 0.0)) throw ValidationError("otd: delete_cost must be > 0");
  const auto a = pred.arrival_times();
  const auto b = truth.arrival_times();
  const auto pm = pred.marks();
  const auto tm = truth.marks();
  const std::size_t n = a.size(), m = b.size();
  const double c = cfg.delete_cost;
  // Row-by-row over the (n+1) x (m+1) grid.
  std::vector<double> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<double>(j) * c;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<double>(i) * c;
    for (std::size_t j = 1; j <= m; ++j) {
      double best = std::min(prev[j], cur[j - 1]) + c;
      if (pm[i - 1] == tm[j - 1]) best = std::min(best, prev[j - 1] + std::abs(a[i - 1] - b[j - 1]));
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double rmse_x(const EventSequence& pred, const EventSequence& truth) {
  same_length("rmse_x", pred, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.inter_times()[i] - truth.inter_times()[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

RmseYMode parse_rmse_y_mode(const std::string& s) {
  if (s == "counts" || s == "count") return RmseYMode::Counts;
  if (s == "positions" || s == "position") return RmseYMode::Positions;
  throw ValidationError("unknown rmse_y mode '" + s + "' (expected counts or positions)");
}

double rmse_y(const EventSequence& pred, const EventSequence& truth, RmseYMode mode) {
  if (pred.vocab_size() != truth.vocab_size()) {
    throw ValidationError("rmse_y: vocab sizes differ");
  }
  if (mode == RmseYMode::Positions) {
    same_length("rmse_y", pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += pred.marks()[i] != truth.marks()[i] ? 1.0 : 0.0;
    return std::sqrt(s / static_cast<double>(pred.size()));
  }
  const auto m = static_cast<std::size_t>(pred.vocab_size());
  std::vector<double> diff(m, 0.0);
  for (int k : pred.marks()) diff[static_cast<std::size_t>(k)] += 1.0;
  for (int k : truth.marks()) diff[static_cast<std::size_t>(k)] -= 1.0;
  double s = 0.0;
  for (double d : diff) s += d * d;
  return std::sqrt(s / static_cast<double>(m));
}

double smape(const EventSequence& pred, const EventSequence& truth) {
  same_length("smape", pred, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred.inter_times()[i], t = truth.inter_times()[i];
    const double denom = std::abs(p) + std::abs(t);
    if (denom > 0.0) s += 2.0 * std::abs(p - t) / denom;
  }
  return 100.0 * s / static_cast<double>(pred.size());
}

Summary summarize(std::span<const double> values) {
  Summary out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

MetricReport evaluate(std::span<const EventSequence> pred, std::span<const EventSequence> truth,
                      const EvaluateOptions& opts) {
  if (pred.size() != truth.size()) {
    throw ValidationError("evaluate: " + std::to_string(pred.size()) + " predicted windows vs " +
                          std::to_string(truth.size()) + " truth windows");
  }
  if (pred.empty()) throw ValidationError("evaluate: no windows");
  MetricReport r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size()) {
      throw ValidationError("evaluate: window " + std::to_string(i) + " has " +
                            std::to_string(pred[i].size()) + " predicted events vs " +
                            std::to_string(truth[i].size()) + " true events");
    }
    r.otd.push_back(otd(pred[i], truth[i], opts.otd));
    r.rmse_x.push_back(rmse_x(pred[i], truth[i]));
    r.rmse_y.push_back(rmse_y(pred[i], truth[i], opts.rmse_y_mode));
    r.smape.push_back(smape(pred[i], truth[i]));
  }
  return r;
}

json report_json(const MetricReport& r) {
  auto block = [](const std::vector<double>& v) {
    const Summary s = summarize(v);
    return json{{"mean", s.mean}, {"sd", s.sd}, {"values", v}};
  };
  return json{{"windows", r.otd.size()}, {"seeds", r.seeds},     {"otd", block(r.otd)},
              {"rmse_x", block(r.rmse_x)}, {"rmse_y", block(r.rmse_y)}, {"smape", block(r.smape)}};
}

std::vector<double> Histogram::fractions() const {
  std::vector<double> f(counts.size(), 0.0);
  if (total == 0) return f;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    f[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  return f;
}

double gap_percentile(std::span<const EventSequence> seqs, double q) {
  std::vector<double> all;
  for (const auto& s : seqs) all.insert(all.end(), s.inter_times().begin(), s.inter_times().end());
  if (all.empty()) throw ValidationError("distribution summary: no events");
  std::sort(all.begin(), all.end());
  // Linear interpolation between closest ranks.
  const double pos = q * static_cast<double>(all.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, all.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return all[lo] + frac * (all[hi] - all[lo]);
}

Histogram gap_histogram(std::span<const EventSequence> seqs, double upper, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram: bins must be >= 1");
  if (!(upper > 0.0)) throw ValidationError("histogram: upper edge must be > 0");
  Histogram h;
  h.upper = upper;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges[i] = upper * static_cast<double>(i) / static_cast<double>(bins);
  }
  h.counts.assign(bins + 1, 0);
  for (const auto& s : seqs) {
    for (double x : s.inter_times()) {
      std::size_t k = bins;
      if (x < upper) k = std::min(static_cast<std::size_t>(x / upper * static_cast<double>(bins)), bins - 1);
      h.counts[k] += 1;
      ++h.total;
    }
  }
  return h;
}

namespace {

std::vector<double> mark_frequencies(std::span<const EventSequence> seqs) {
  if (seqs.empty()) throw ValidationError("distribution summary: no sequences");
  std::vector<double> freq(static_cast<std::size_t>(seqs.front().vocab_size()), 0.0);
  double total = 0.0;
  for (const auto& s : seqs) {
    for (int k : s.marks()) {
      if (static_cast<std::size_t>(k) >= freq.size()) freq.resize(static_cast<std::size_t>(k) + 1, 0.0);
      freq[static_cast<std::size_t>(k)] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (double& f : freq) f /= total;
  }
  return freq;
}

}  // namespace

DistributionSummary distribution_summary(std::span<const EventSequence> seqs,
                                         std::span<const EventSequence> reference,
                                         std::size_t bins) {
  double upper = gap_percentile(reference, 0.99);
  // A degenerate reference (all gaps equal) still needs a nonempty range.
  if (!(upper > 0.0)) upper = 1.0;
  upper = std::nextafter(upper, INFINITY);
  return {gap_histogram(seqs, upper, bins), mark_frequencies(seqs)};
}

DistributionSummary distribution_summary(std::span<const EventSequence> seqs, std::size_t bins) {
  return distribution_summary(seqs, seqs, bins);
}

double total_variation(const Histogram& a, const Histogram& b) {
  if (a.edges != b.edges) throw ValidationError("total_variation: histograms have different edges");
  const auto fa = a.fractions(), fb = b.fractions();
  double s = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) s += std::abs(fa[i] - fb[i]);
  return 0.5 * s;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(17);
  out << "bin,lower,upper,count,fraction\n";
  const auto f = h.fractions();
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const bool overflow = i + 1 == h.counts.size();
    out << i << ',' << h.edges[i] << ',';
    if (overflow) {
      out << "inf";
    } else {
      out << h.edges[i + 1];
    }
    out << ',' << h.counts[i] << ',' << f[i] << '\n';
  }
}

void write_mark_csv(const std::filesystem::path& path, std::span<const double> freq) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(17);
  out << "mark,frequency\n";
  for (std::size_t k = 0; k < freq.size(); ++k) out << k << ',' << freq[k] << '\n';
}

}  // namespace ufm::metrics
