#include "mdmer/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <tuple>

#include "mdmer/errors.hpp"

namespace mdmer::midi {
namespace {

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  bool eof() const { return pos >= bytes.size(); }
  std::size_t remaining() const { return bytes.size() - pos; }

  std::uint8_t u8() {
    if (eof()) throw FormatError("unexpected end of MIDI data");
    return bytes[pos++];
  }
  std::uint16_t u16be() {
    std::uint16_t hi = u8(), lo = u8();
    return static_cast<std::uint16_t>((hi << 8) | lo);
  }
  std::uint32_t u32be() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint32_t varint() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7f);
      if ((b & 0x80) == 0) return v;
    }
    throw FormatError("variable-length quantity longer than 4 bytes");
  }
  void skip(std::size_t n) {
    if (remaining() < n) throw FormatError("unexpected end of MIDI data");
    pos += n;
  }
};

struct RawNoteEvent {
  std::uint64_t tick;
  int pitch;
  int velocity;  // 0 means note-off
  bool is_on;
  std::size_t order;  // tie-break: file order within the track
};

struct TempoMap {
  // (tick, seconds at that tick, microseconds per quarter from that tick on)
  struct Segment {
    std::uint64_t tick;
    double seconds;
    double us_per_quarter;
  };
  std::vector<Segment> segments;
  double tpqn;

  double to_seconds(std::uint64_t tick) const {
    const Segment* seg = &segments.front();
    for (const auto& s : segments) {
      if (s.tick > tick) break;
      seg = &s;
    }
    return seg->seconds +
           static_cast<double>(tick - seg->tick) * seg->us_per_quarter / (tpqn * 1e6);
  }
};

TempoMap build_tempo_map(std::vector<std::pair<std::uint64_t, std::uint32_t>> changes,
                         double tpqn) {
  std::stable_sort(changes.begin(), changes.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  TempoMap map;
  map.tpqn = tpqn;
  map.segments.push_back({0, 0.0, 500000.0});  // SMF default: 120 bpm
  for (const auto& [tick, us] : changes) {
    const auto& prev = map.segments.back();
    const double seconds =
        prev.seconds + static_cast<double>(tick - prev.tick) * prev.us_per_quarter / (tpqn * 1e6);
    if (tick == prev.tick) {
      map.segments.back() = {tick, prev.seconds, static_cast<double>(us)};
    } else {
      map.segments.push_back({tick, seconds, static_cast<double>(us)});
    }
  }
  return map;
}

void append_varint(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = static_cast<std::uint8_t>(v & 0x7f);
  v >>= 7;
  while (v != 0) {
    buf[n++] = static_cast<std::uint8_t>((v & 0x7f) | 0x80);
    v >>= 7;
  }
  for (int i = n - 1; i >= 0; --i) out.push_back(buf[i]);
}

void warn(std::vector<std::string>* warnings, std::string msg) {
  if (warnings != nullptr) warnings->push_back(std::move(msg));
}

}  // namespace

void sort_notes(NoteSequence& seq) {
  std::sort(seq.notes.begin(), seq.notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return std::tie(a.onset, a.pitch, a.offset, a.velocity) <
           std::tie(b.onset, b.pitch, b.offset, b.velocity);
  });
}

NoteSequence parse_smf(std::span<const std::uint8_t> bytes, const SmfParseOptions& opts,
                       std::vector<std::string>* warnings, std::string source_id) {
  Reader r{bytes};
  if (r.remaining() < 14) throw FormatError("MIDI data too short for a header chunk");
  if (std::memcmp(bytes.data(), "MThd", 4) != 0) throw FormatError("missing MThd header chunk");
  r.pos = 4;
  const std::uint32_t header_len = r.u32be();
  if (header_len < 6) throw FormatError("MThd chunk too short");
  const std::uint16_t format = r.u16be();
  const std::uint16_t ntracks = r.u16be();
  const std::uint16_t division = r.u16be();
  r.skip(header_len - 6);
  if (format > 1) throw FormatError("unsupported SMF format " + std::to_string(format));
  if (division & 0x8000) throw FormatError("SMPTE time division is not supported");
  if (division == 0) throw FormatError("zero ticks-per-quarter division");

  std::vector<std::pair<std::uint64_t, std::uint32_t>> tempo_changes;
  std::vector<std::pair<std::uint64_t, std::uint8_t>> pedal_events;  // (tick, value)
  struct TrackNotes {
    std::vector<RawNoteEvent> events;
    std::uint64_t end_tick = 0;
  };
  std::vector<TrackNotes> tracks;

  for (std::uint16_t t = 0; t < ntracks; ++t) {
    if (r.remaining() < 8) throw FormatError("missing MTrk chunk " + std::to_string(t));
    if (std::memcmp(bytes.data() + r.pos, "MTrk", 4) != 0) {
      // Skip alien chunks between tracks, as the SMF spec allows.
      r.pos += 4;
      const std::uint32_t len = r.u32be();
      r.skip(len);
      --t;
      continue;
    }
    r.pos += 4;
    const std::uint32_t track_len = r.u32be();
    const std::size_t track_end = r.pos + track_len;
    if (track_end > bytes.size()) throw FormatError("truncated MTrk chunk");

    TrackNotes track;
    std::uint64_t tick = 0;
    std::uint8_t running_status = 0;
    std::size_t order = 0;
    bool ended = false;

    while (r.pos < track_end && !ended) {
      tick += r.varint();
      std::uint8_t status = bytes[r.pos];
      if (status & 0x80) {
        r.pos++;
        if (status < 0xf0) running_status = status;
      } else {
        if (running_status == 0) throw FormatError("data byte without running status");
        status = running_status;
      }

      if (status == 0xff) {
        const std::uint8_t type = r.u8();
        const std::uint32_t len = r.varint();
        if (type == 0x51) {
          if (len != 3) throw FormatError("malformed set-tempo meta event");
          std::uint32_t us = (static_cast<std::uint32_t>(r.u8()) << 16);
          us |= (static_cast<std::uint32_t>(r.u8()) << 8);
          us |= r.u8();
          tempo_changes.emplace_back(tick, us);
        } else if (type == 0x2f) {
          r.skip(len);
          ended = true;
        } else {
          r.skip(len);
        }
        continue;
      }
      if (status == 0xf0 || status == 0xf7) {
        const std::uint32_t len = r.varint();
        r.skip(len);
        continue;
      }

      const std::uint8_t kind = status & 0xf0;
      switch (kind) {
        case 0x90: {
          const std::uint8_t pitch = r.u8();
          const std::uint8_t vel = r.u8();
          if (pitch > 127) throw FormatError("pitch out of range");
          track.events.push_back({tick, pitch, vel, vel > 0, order++});
          break;
        }
        case 0x80: {
          const std::uint8_t pitch = r.u8();
          r.u8();  // release velocity, unused
          track.events.push_back({tick, pitch, 0, false, order++});
          break;
        }
        case 0xb0: {
          const std::uint8_t controller = r.u8();
          const std::uint8_t value = r.u8();
          if (controller == 64) pedal_events.emplace_back(tick, value);
          break;
        }
        case 0xa0:
        case 0xe0:
          r.skip(2);
          break;
        case 0xc0:
        case 0xd0:
          r.skip(1);
          break;
        default:
          throw FormatError("unexpected status byte in track");
      }
    }
    track.end_tick = tick;
    r.pos = track_end;
    tracks.push_back(std::move(track));
  }

  const TempoMap tempo = build_tempo_map(std::move(tempo_changes), division);

  // Pedal-down intervals as [press_tick, release_tick).
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pedal_spans;
  if (opts.apply_sustain_pedal && !pedal_events.empty()) {
    std::stable_sort(pedal_events.begin(), pedal_events.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::uint64_t down_at = 0;
    bool down = false;
    std::uint64_t max_tick = 0;
    for (const auto& t : tracks) max_tick = std::max(max_tick, t.end_tick);
    for (const auto& [tick, value] : pedal_events) {
      if (value >= 64 && !down) {
        down = true;
        down_at = tick;
      } else if (value < 64 && down) {
        down = false;
        pedal_spans.emplace_back(down_at, tick);
      }
    }
    if (down) pedal_spans.emplace_back(down_at, max_tick);
  }

  struct TickNote {
    std::uint64_t on, off;
    int pitch, velocity;
  };
  std::vector<TickNote> tick_notes;

  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    auto& track = tracks[ti];
    // Offs before ons at equal ticks so same-tick retriggers pair correctly.
    std::stable_sort(track.events.begin(), track.events.end(),
                     [](const RawNoteEvent& a, const RawNoteEvent& b) {
                       if (a.tick != b.tick) return a.tick < b.tick;
                       if (a.is_on != b.is_on) return !a.is_on;
                       return a.order < b.order;
                     });
    // FIFO queue of open notes per pitch.
    std::map<int, std::vector<RawNoteEvent>> open;
    for (const RawNoteEvent& ev : track.events) {
      if (ev.is_on) {
        open[ev.pitch].push_back(ev);
        continue;
      }
      auto it = open.find(ev.pitch);
      if (it == open.end() || it->second.empty()) {
        warn(warnings, "track " + std::to_string(ti) + ": note-off without note-on (pitch " +
                           std::to_string(ev.pitch) + " at tick " + std::to_string(ev.tick) +
                           "), dropped");
        continue;
      }
      const RawNoteEvent on = it->second.front();
      it->second.erase(it->second.begin());
      if (ev.tick <= on.tick) {
        warn(warnings, "track " + std::to_string(ti) + ": zero-length note (pitch " +
                           std::to_string(ev.pitch) + " at tick " + std::to_string(on.tick) +
                           "), dropped");
        continue;
      }
      tick_notes.push_back({on.tick, ev.tick, on.pitch, on.velocity});
    }
    for (auto& [pitch, queue] : open) {
      for (const RawNoteEvent& on : queue) {
        if (track.end_tick > on.tick) {
          tick_notes.push_back({on.tick, track.end_tick, pitch, on.velocity});
        }
      }
    }
  }

  if (!pedal_spans.empty()) {
    for (auto& n : tick_notes) {
      for (const auto& [press, release] : pedal_spans) {
        if (n.off > press && n.off <= release) {
          n.off = std::max(n.off, release);
          break;
        }
      }
    }
  }

  NoteSequence seq;
  seq.source_id = std::move(source_id);
  seq.notes.reserve(tick_notes.size());
  for (const TickNote& n : tick_notes) {
    NoteEvent note;
    note.onset = tempo.to_seconds(n.on);
    note.offset = tempo.to_seconds(n.off);
    note.pitch = n.pitch;
    note.velocity = std::clamp(n.velocity, 1, 127);
    if (note.offset <= note.onset) continue;
    seq.notes.push_back(note);
  }
  sort_notes(seq);
  return seq;
}

NoteSequence load_smf_file(const std::string& path, const SmfParseOptions& opts,
                           std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_smf(bytes, opts, warnings, path);
}

std::vector<std::uint8_t> write_smf(const NoteSequence& seq, int ticks_per_quarter,
                                    int tempo_us_per_quarter) {
  const double ticks_per_second = 1e6 * ticks_per_quarter / static_cast<double>(tempo_us_per_quarter);

  struct Event {
    std::uint64_t tick;
    bool is_on;
    int pitch;
    int velocity;
  };
  std::vector<Event> events;
  events.reserve(seq.notes.size() * 2);
  for (const NoteEvent& n : seq.notes) {
    auto on = static_cast<std::uint64_t>(std::llround(n.onset * ticks_per_second));
    auto off = static_cast<std::uint64_t>(std::llround(n.offset * ticks_per_second));
    if (off <= on) off = on + 1;
    events.push_back({on, true, n.pitch, std::clamp(n.velocity, 1, 127)});
    events.push_back({off, false, n.pitch, 0});
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.is_on != b.is_on) return !a.is_on;
    return a.pitch < b.pitch;
  });

  std::vector<std::uint8_t> track;
  // Tempo meta at tick 0.
  append_varint(track, 0);
  track.insert(track.end(), {0xff, 0x51, 0x03});
  track.push_back(static_cast<std::uint8_t>((tempo_us_per_quarter >> 16) & 0xff));
  track.push_back(static_cast<std::uint8_t>((tempo_us_per_quarter >> 8) & 0xff));
  track.push_back(static_cast<std::uint8_t>(tempo_us_per_quarter & 0xff));

  std::uint64_t cursor = 0;
  for (const Event& ev : events) {
    append_varint(track, static_cast<std::uint32_t>(ev.tick - cursor));
    cursor = ev.tick;
    track.push_back(ev.is_on ? 0x90 : 0x80);
    track.push_back(static_cast<std::uint8_t>(ev.pitch));
    track.push_back(static_cast<std::uint8_t>(ev.is_on ? ev.velocity : 0x40));
  }
  append_varint(track, 0);
  track.insert(track.end(), {0xff, 0x2f, 0x00});

  std::vector<std::uint8_t> out;
  auto be16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  };
  auto be32 = [&](std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  be32(6);
  be16(0);  // format 0
  be16(1);  // one track
  be16(static_cast<std::uint16_t>(ticks_per_quarter));
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  be32(static_cast<std::uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

}  // namespace mdmer::midi
