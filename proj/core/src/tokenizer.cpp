#include "mdmer/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

#include <json.hpp>

#include "mdmer/errors.hpp"

namespace mdmer::symbolic {
namespace {

// Guards floor() against times sitting an ulp below a grid boundary.
constexpr double kGridEps = 1e-9;

int floor_bin(double t, double width) {
  return static_cast<int>(std::floor(t / width + kGridEps));
}

void check_sorted(const midi::NoteSequence& seq) {
  for (std::size_t i = 0; i + 1 < seq.notes.size(); ++i) {
    const auto& a = seq.notes[i];
    const auto& b = seq.notes[i + 1];
    if (std::tie(a.onset, a.pitch, a.offset, a.velocity) >
        std::tie(b.onset, b.pitch, b.offset, b.velocity)) {
      throw ValidationError("note sequence is not in canonical order");
    }
  }
}

void check_notes(const midi::NoteSequence& seq) {
  for (const auto& n : seq.notes) {
    if (n.offset <= n.onset || n.onset < 0.0) throw ValidationError("invalid note times");
    if (n.pitch < 0 || n.pitch > 127) throw ValidationError("pitch out of range");
    if (n.velocity < 1 || n.velocity > 127) throw ValidationError("velocity out of range");
  }
}

}  // namespace

int QuantConfig::abs_bins() const {
  return static_cast<int>(std::llround(max_abs_time / time_shift_bin));
}

int QuantConfig::time_shift_vocab() const {
  return static_cast<int>(std::llround(max_time_shift / time_shift_bin)) + 1;
}

void QuantConfig::validate() const {
  if (time_shift_bin <= 0.0) throw ConfigError("time_shift_bin must be positive");
  if (max_time_shift < time_shift_bin) throw ConfigError("max_time_shift below one bin");
  const double ratio = max_time_shift / time_shift_bin;
  if (std::abs(ratio - std::round(ratio)) > 1e-6) {
    throw ConfigError("max_time_shift must be a multiple of time_shift_bin");
  }
  if (velocity_bins <= 0 || 128 % velocity_bins != 0) {
    throw ConfigError("velocity_bins must evenly divide 128");
  }
  if (max_abs_time < time_shift_bin) throw ConfigError("max_abs_time below one bin");
}

std::vector<int> harmonic_counts(const midi::NoteSequence& seq) {
  check_sorted(seq);
  check_notes(seq);
  const auto& notes = seq.notes;
  std::vector<int> counts(notes.size(), 0);

  // Sweep over onset groups with a min-heap of offsets of already-started
  // notes. Everything still in the heap with offset > t is sounding at t.
  std::priority_queue<double, std::vector<double>, std::greater<>> active;
  std::size_t i = 0;
  while (i < notes.size()) {
    const double t = notes[i].onset;
    std::size_t j = i;
    while (j < notes.size() && notes[j].onset == t) ++j;
    while (!active.empty() && active.top() <= t) active.pop();
    const int count = static_cast<int>(active.size()) + static_cast<int>(j - i);
    for (std::size_t k = i; k < j; ++k) {
      counts[k] = count;
      active.push(notes[k].offset);
    }
    i = j;
  }
  return counts;
}

std::vector<SymbolicToken> tokenize(const midi::NoteSequence& seq, const QuantConfig& q) {
  q.validate();
  check_sorted(seq);
  check_notes(seq);

  const std::vector<int> harmonics = harmonic_counts(seq);
  const int onset_max = q.onset_vocab() - 1;
  const int offset_max = q.offset_vocab() - 1;
  const int ts_max = q.time_shift_vocab() - 1;
  const int vel_div = 128 / q.velocity_bins;

  std::vector<SymbolicToken> tokens;
  tokens.reserve(seq.notes.size());
  int prev_onset_bin = 0;
  for (std::size_t i = 0; i < seq.notes.size(); ++i) {
    const auto& n = seq.notes[i];
    SymbolicToken tok;
    tok.onset_bin = std::min(floor_bin(n.onset, q.time_shift_bin), onset_max);
    // Offsets occupy at least one grid cell past the onset.
    tok.offset_bin = std::clamp(floor_bin(n.offset, q.time_shift_bin), tok.onset_bin + 1,
                                offset_max);
    tok.harmonic = harmonics[i];
    tok.velocity_bin = n.velocity / vel_div;
    // Integer difference of onset bins keeps the round trip exact.
    tok.time_shift_bin = i == 0 ? 0 : std::min(tok.onset_bin - prev_onset_bin, ts_max);
    prev_onset_bin = tok.onset_bin;
    tokens.push_back(tok);
  }
  return tokens;
}

midi::NoteSequence detokenize(const std::vector<SymbolicToken>& tokens, const QuantConfig& q) {
  q.validate();
  const int vel_div = 128 / q.velocity_bins;
  midi::NoteSequence seq;
  seq.notes.reserve(tokens.size());
  for (const auto& tok : tokens) {
    if (tok.offset_bin <= tok.onset_bin) {
      throw ValidationError("inconsistent token: offset_bin <= onset_bin");
    }
    if (tok.onset_bin < 0 || tok.onset_bin >= q.onset_vocab() || tok.offset_bin >= q.offset_vocab() ||
        tok.velocity_bin < 0 || tok.velocity_bin >= q.velocity_bins || tok.harmonic < 1 ||
        tok.time_shift_bin < 0 || tok.time_shift_bin >= q.time_shift_vocab()) {
      throw ValidationError("token field out of vocabulary bounds");
    }
    midi::NoteEvent n;
    n.onset = (tok.onset_bin + 0.5) * q.time_shift_bin;
    n.offset = (tok.offset_bin + 0.5) * q.time_shift_bin;
    n.velocity = std::clamp(tok.velocity_bin * vel_div + vel_div / 2, 1, 127);
    n.pitch = 60;  // pitch is not part of the representation
    seq.notes.push_back(n);
  }
  midi::sort_notes(seq);
  return seq;
}

std::string tokens_to_json(const std::string& source_id, const QuantConfig& q,
                           const std::vector<SymbolicToken>& tokens) {
  nlohmann::json doc;
  doc["source_id"] = source_id;
  doc["quant_config"] = {{"time_shift_bin", q.time_shift_bin},
                         {"max_time_shift", q.max_time_shift},
                         {"velocity_bins", q.velocity_bins},
                         {"max_abs_time", q.max_abs_time}};
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tokens) {
    arr.push_back({t.onset_bin, t.harmonic, t.velocity_bin, t.time_shift_bin, t.offset_bin});
  }
  doc["tokens"] = std::move(arr);
  return doc.dump();
}

TokenFile tokens_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad token JSON: ") + e.what());
  }
  TokenFile file;
  try {
    file.source_id = doc.at("source_id").get<std::string>();
    const auto& qj = doc.at("quant_config");
    file.quant.time_shift_bin = qj.at("time_shift_bin").get<double>();
    file.quant.max_time_shift = qj.at("max_time_shift").get<double>();
    file.quant.velocity_bins = qj.at("velocity_bins").get<int>();
    file.quant.max_abs_time = qj.at("max_abs_time").get<double>();
    for (const auto& row : doc.at("tokens")) {
      if (!row.is_array() || row.size() != 5) throw FormatError("token row must have 5 fields");
      SymbolicToken t;
      t.onset_bin = row[0].get<std::int32_t>();
      t.harmonic = row[1].get<std::int32_t>();
      t.velocity_bin = row[2].get<std::int32_t>();
      t.time_shift_bin = row[3].get<std::int32_t>();
      t.offset_bin = row[4].get<std::int32_t>();
      file.tokens.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("incomplete token JSON: ") + e.what());
  }
  return file;
}

}  // namespace mdmer::symbolic
