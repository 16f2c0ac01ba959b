#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdmer/midi.hpp"

namespace mdmer::symbolic {

/// Quantization grid for the note-attribute tokens. Absolute onset/offset
/// times and relative time shifts share the same grid width.
struct QuantConfig {
  double time_shift_bin = 0.01;  // seconds
  double max_time_shift = 1.0;   // seconds; longer shifts clip to the last bin
  int velocity_bins = 32;        // must divide 128
  double max_abs_time = 600.0;   // absolute-time cap in seconds

  int abs_bins() const;          // number of grid cells up to max_abs_time
  int onset_vocab() const { return abs_bins(); }
  int offset_vocab() const { return abs_bins() + 1; }
  int time_shift_vocab() const;
  int velocity_vocab() const { return velocity_bins; }

  void validate() const;
};

/// One note of the refined MIDI-like representation: absolute onset bin,
/// number of notes sounding at the onset (self included), velocity bin,
/// time shift from the previous note's onset, and absolute offset bin.
struct SymbolicToken {
  std::int32_t onset_bin = 0;
  std::int32_t harmonic = 1;
  std::int32_t velocity_bin = 0;
  std::int32_t time_shift_bin = 0;
  std::int32_t offset_bin = 1;

  bool operator==(const SymbolicToken&) const = default;
};

/// For each note, the number of notes j (self included) with
/// onset_j <= onset_i < offset_j. The sequence must be in canonical order.
std::vector<int> harmonic_counts(const midi::NoteSequence& seq);

/// One token per note, in canonical order.
std::vector<SymbolicToken> tokenize(const midi::NoteSequence& seq, const QuantConfig& q);

/// Reconstruct notes at bin-center times and velocities. The harmonic
/// attribute is ignored; pitch is not represented and comes back as 60.
midi::NoteSequence detokenize(const std::vector<SymbolicToken>& tokens, const QuantConfig& q);

/// Token document as emitted by the `tokenize` CLI subcommand.
std::string tokens_to_json(const std::string& source_id, const QuantConfig& q,
                           const std::vector<SymbolicToken>& tokens);

struct TokenFile {
  std::string source_id;
  QuantConfig quant;
  std::vector<SymbolicToken> tokens;
};

TokenFile tokens_from_json(const std::string& text);

}  // namespace mdmer::symbolic
