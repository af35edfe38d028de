#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ufm {

// A marked event sequence in inter-event form: inter_times[i] is the gap
// between event i and its predecessor (the first gap is measured from 0),
// marks[i] is the event type in [0, vocab_size).
class EventSequence {
 public:
  EventSequence() = default;
  // Throws ValidationError unless lengths match, every gap is finite and
  // strictly positive, and every mark lies in [0, vocab_size).
  EventSequence(std::vector<double> inter_times, std::vector<int> marks, int vocab_size);

  std::size_t size() const { return inter_times_.size(); }
  bool empty() const { return inter_times_.empty(); }
  int vocab_size() const { return vocab_size_; }
  std::span<const double> inter_times() const { return inter_times_; }
  std::span<const int> marks() const { return marks_; }

  // Arrival times measured from the start of the sequence.
  std::vector<double> arrival_times() const;
  // Events [first, first + count).
  EventSequence slice(std::size_t first, std::size_t count) const;

  friend bool operator==(const EventSequence&, const EventSequence&) = default;

 private:
  std::vector<double> inter_times_;
  std::vector<int> marks_;
  int vocab_size_ = 1;
};

// A history prefix and the fixed-length suffix to forecast.
struct ForecastWindow {
  EventSequence context;
  EventSequence target;
};

// Differences t[i] - t[i-1] with t[-1] = 0. Throws ValidationError naming the
// first index that does not strictly increase.
std::vector<double> to_inter_event(std::span<const double> timestamps);

// Last `horizon` events become the target, everything before is context.
// Returns nullopt (and logs a warning) when seq.size() <= horizon.
std::optional<ForecastWindow> split_window(const EventSequence& seq, std::size_t horizon);

// Applies split_window to every sequence, dropping the ones that are too short.
std::vector<ForecastWindow> make_windows(std::span<const EventSequence> seqs, std::size_t horizon);

// Header line of a dataset file.
struct DatasetMeta {
  int vocab_size = 0;
  std::optional<std::uint64_t> seed;
  int version = 1;
  std::optional<int> horizon;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<EventSequence> sequences;
  // Records that parsed but failed validation (e.g. a mark out of range).
  std::vector<LineError> rejected;
};

// Reads the JSONL dataset format:
//   {"meta":{"vocab_size":M,...}}
//   {"dts":[...],"marks":[...]}     or   {"ts":[...],"marks":[...]}
// Malformed JSON or a missing header throws ValidationError with the line
// number. Records that parse but fail validation are collected in `rejected`.
// An empty file yields an empty dataset. When `vocab_size` is given it must
// agree with the header.
Dataset load_jsonl(const std::filesystem::path& path, std::optional<int> vocab_size = std::nullopt);

// Convenience wrapper returning only the accepted sequences.
std::vector<EventSequence> load_sequences(const std::filesystem::path& path, int vocab_size);

// Writes the header followed by one {"dts","marks"} line per sequence.
void write_jsonl(const std::filesystem::path& path, const DatasetMeta& meta,
                 std::span<const EventSequence> sequences);

}  // namespace ufm
