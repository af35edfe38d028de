#include "ufm/events.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "ufm/error.hpp"

namespace ufm {

using json = nlohmann::json;

EventSequence::EventSequence(std::vector<double> inter_times, std::vector<int> marks,
                             int vocab_size)
    : inter_times_(std::move(inter_times)), marks_(std::move(marks)), vocab_size_(vocab_size) {
  if (vocab_size_ < 1) {
    throw ValidationError("vocab_size must be positive, got " + std::to_string(vocab_size_));
  }
  if (inter_times_.size() != marks_.size()) {
    throw ValidationError("inter_times has " + std::to_string(inter_times_.size()) +
                          " entries but marks has " + std::to_string(marks_.size()));
  }
  for (std::size_t i = 0; i < inter_times_.size(); ++i) {
    const double dt = inter_times_[i];
    if (!std::isfinite(dt) || dt <= 0.0) {
      std::ostringstream os;
      os << "inter-event time at index " << i << " must be finite and > 0, got " << dt;
      throw ValidationError(os.str());
    }
    if (marks_[i] < 0 || marks_[i] >= vocab_size_) {
      throw ValidationError("mark " + std::to_string(marks_[i]) + " at index " + std::to_string(i) +
                            " outside [0, " + std::to_string(vocab_size_) + ")");
    }
  }
}

std::vector<double> EventSequence::arrival_times() const {
  std::vector<double> out(inter_times_.size());
  double t = 0.0;
  for (std::size_t i = 0; i < inter_times_.size(); ++i) {
    t += inter_times_[i];
    out[i] = t;
  }
  return out;
}

EventSequence EventSequence::slice(std::size_t first, std::size_t count) const {
  EventSequence out;
  out.vocab_size_ = vocab_size_;
  out.inter_times_.assign(inter_times_.begin() + static_cast<std::ptrdiff_t>(first),
                          inter_times_.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.marks_.assign(marks_.begin() + static_cast<std::ptrdiff_t>(first),
                    marks_.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

std::vector<double> to_inter_event(std::span<const double> timestamps) {
  std::vector<double> out(timestamps.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (!(timestamps[i] > prev)) {
      std::ostringstream os;
      os << "timestamps must be strictly increasing from 0; index " << i << " has " << timestamps[i]
         << " after " << prev;
      throw ValidationError(os.str());
    }
    out[i] = timestamps[i] - prev;
    prev = timestamps[i];
  }
  return out;
}

std::optional<ForecastWindow> split_window(const EventSequence& seq, std::size_t horizon) {
  if (seq.size() <= horizon) {
    std::clog << "warning: skipping sequence of length " << seq.size() << " (needs > " << horizon
              << " events for horizon " << horizon << ")\n";
    return std::nullopt;
  }
  const std::size_t c = seq.size() - horizon;
  return ForecastWindow{seq.slice(0, c), seq.slice(c, horizon)};
}

std::vector<ForecastWindow> make_windows(std::span<const EventSequence> seqs, std::size_t horizon) {
  std::vector<ForecastWindow> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    if (auto w = split_window(s, horizon)) out.push_back(std::move(*w));
  }
  return out;
}

namespace {

std::string at_line(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

DatasetMeta parse_meta(const json& j, std::size_t line) {
  if (!j.is_object() || !j.contains("meta") || !j["meta"].is_object()) {
    throw ValidationError(at_line(line, "expected header {\"meta\":{\"vocab_size\":M}}"));
  }
  const auto& m = j["meta"];
  if (!m.contains("vocab_size") || !m["vocab_size"].is_number_integer()) {
    throw ValidationError(at_line(line, "header is missing integer vocab_size"));
  }
  DatasetMeta meta;
  meta.vocab_size = m["vocab_size"].get<int>();
  if (meta.vocab_size < 1) throw ValidationError(at_line(line, "vocab_size must be positive"));
  if (m.contains("seed")) meta.seed = m["seed"].get<std::uint64_t>();
  if (m.contains("version")) meta.version = m["version"].get<int>();
  if (m.contains("horizon")) meta.horizon = m["horizon"].get<int>();
  return meta;
}

EventSequence parse_record(const json& j, int vocab_size) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  if (!j.contains("marks")) throw ValidationError("record has no \"marks\" field");
  auto marks = j["marks"].get<std::vector<int>>();
  std::vector<double> dts;
  if (j.contains("dts")) {
    dts = j["dts"].get<std::vector<double>>();
  } else if (j.contains("ts")) {
    dts = to_inter_event(j["ts"].get<std::vector<double>>());
  } else {
    throw ValidationError("record has neither \"dts\" nor \"ts\"");
  }
  return EventSequence(std::move(dts), std::move(marks), vocab_size);
}

}  // namespace

Dataset load_jsonl(const std::filesystem::path& path, std::optional<int> vocab_size) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  Dataset ds;
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError(at_line(line_no, std::string("malformed JSON: ") + e.what()));
    }
    if (!have_header) {
      ds.meta = parse_meta(j, line_no);
      if (vocab_size && *vocab_size != ds.meta.vocab_size) {
        throw ValidationError(at_line(line_no, "header vocab_size " +
                                                   std::to_string(ds.meta.vocab_size) +
                                                   " does not match expected " +
                                                   std::to_string(*vocab_size)));
      }
      have_header = true;
      continue;
    }
    try {
      ds.sequences.push_back(parse_record(j, ds.meta.vocab_size));
    } catch (const ValidationError& e) {
      ds.rejected.push_back({line_no, e.what()});
    } catch (const json::exception& e) {
      throw ValidationError(at_line(line_no, std::string("malformed record: ") + e.what()));
    }
  }
  if (!have_header && vocab_size) ds.meta.vocab_size = *vocab_size;
  return ds;
}

std::vector<EventSequence> load_sequences(const std::filesystem::path& path, int vocab_size) {
  auto ds = load_jsonl(path, vocab_size);
  for (const auto& r : ds.rejected) {
    std::clog << "warning: " << path.string() << " line " << r.line << " rejected: " << r.message
              << "\n";
  }
  return std::move(ds.sequences);
}

void write_jsonl(const std::filesystem::path& path, const DatasetMeta& meta,
                 std::span<const EventSequence> sequences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  json m;
  m["vocab_size"] = meta.vocab_size;
  m["version"] = meta.version;
  if (meta.seed) m["seed"] = *meta.seed;
  if (meta.horizon) m["horizon"] = *meta.horizon;
  out << json{{"meta", m}}.dump() << '\n';
  for (const auto& s : sequences) {
    json rec;
    rec["dts"] = std::vector<double>(s.inter_times().begin(), s.inter_times().end());
    rec["marks"] = std::vector<int>(s.marks().begin(), s.marks().end());
    out << rec.dump() << '\n';
  }
  if (!out) throw ValidationError("write failed for " + path.string());
}

}  // namespace ufm
