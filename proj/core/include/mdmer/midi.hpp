#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mdmer::midi {

/// One sounding note, in seconds.
struct NoteEvent {
  double onset = 0.0;
  double offset = 0.0;
  int pitch = 0;     // 0..127
  int velocity = 0;  // 1..127
};

/// Notes of a clip, sorted by (onset, pitch, offset, velocity).
struct NoteSequence {
  std::vector<NoteEvent> notes;
  std::string source_id;

  bool empty() const { return notes.empty(); }
  std::size_t size() const { return notes.size(); }
};

struct SmfParseOptions {
  /// Extend note offsets to the next CC64 pedal release when the pedal is
  /// held at the note's offset.
  bool apply_sustain_pedal = false;
};

/// Parse a Standard MIDI File (format 0 or 1). All tracks are merged, the
/// tempo map is resolved to seconds, note-on with velocity 0 acts as
/// note-off, and unterminated notes close at end of track. Recoverable
/// oddities (e.g. dangling note-offs) are appended to `warnings`.
NoteSequence parse_smf(std::span<const std::uint8_t> bytes, const SmfParseOptions& opts = {},
                       std::vector<std::string>* warnings = nullptr,
                       std::string source_id = {});

NoteSequence load_smf_file(const std::string& path, const SmfParseOptions& opts = {},
                           std::vector<std::string>* warnings = nullptr);

/// Serialize a note sequence as a single-track format-0 SMF.
std::vector<std::uint8_t> write_smf(const NoteSequence& seq, int ticks_per_quarter = 480,
                                    int tempo_us_per_quarter = 500000);

/// Sort notes into the canonical (onset, pitch, offset, velocity) order.
void sort_notes(NoteSequence& seq);

}  // namespace mdmer::midi
