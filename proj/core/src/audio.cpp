#include "mdmer/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mdmer/errors.hpp"

namespace mdmer::audio {
namespace {

std::uint16_t read_u16le(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t read_u32le(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

void append_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

const char* codec_name(std::uint16_t tag) {
  switch (tag) {
    case 0x0002: return "ADPCM";
    case 0x0006: return "A-law";
    case 0x0007: return "mu-law";
    case 0x0011: return "IMA ADPCM";
    case 0x0055: return "MP3";
    default: return "unknown";
  }
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE stream");
  }

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + off);
    std::uint32_t chunk_size = read_u32le(bytes, off + 4);
    std::size_t body = off + 8;
    if (body + chunk_size > bytes.size()) throw FormatError("truncated WAVE chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("fmt chunk too small");
      format_tag = read_u16le(bytes, body);
      channels = read_u16le(bytes, body + 2);
      sample_rate = read_u32le(bytes, body + 4);
      bits = read_u16le(bytes, body + 14);
      if (format_tag == 0xFFFE && chunk_size >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: the real tag leads the GUID.
        format_tag = read_u16le(bytes, body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.subspan(body, chunk_size);
      have_data = true;
    }
    off = body + chunk_size + (chunk_size & 1);  // chunks are word aligned
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (!have_data) throw FormatError("missing data chunk");
  if (data.empty()) throw FormatError("empty data chunk");
  if (channels < 1 || channels > 2) {
    throw FormatError("unsupported channel count: " + std::to_string(channels));
  }
  if (sample_rate == 0) throw FormatError("zero sample rate");

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.channels = channels;
  clip.source_id = std::move(source_id);

  if (format_tag == 0x0001 && bits == 16) {
    std::size_t n = data.size() / 2;
    if (n == 0) throw FormatError("empty data chunk");
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto v = static_cast<std::int16_t>(read_u16le(data, 2 * i));
      clip.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format_tag == 0x0003 && bits == 32) {
    std::size_t n = data.size() / 4;
    if (n == 0) throw FormatError("empty data chunk");
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = read_u32le(data, 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      if (!std::isfinite(f)) throw FormatError("non-finite sample in float data");
      clip.samples[i] = std::clamp(f, -1.0f, 1.0f);
    }
  } else if (format_tag == 0x0001) {
    throw UnsupportedCodecError("unsupported PCM bit depth: " + std::to_string(bits));
  } else {
    throw UnsupportedCodecError(std::string("unsupported codec tag 0x") +
                                [&] {
                                  char buf[8];
                                  std::snprintf(buf, sizeof buf, "%04x", format_tag);
                                  return std::string(buf);
                                }() +
                                " (" + codec_name(format_tag) + ")");
  }

  if (clip.samples.size() % channels != 0) clip.samples.resize(clip.samples.size() - 1);
  if (clip.samples.empty()) throw FormatError("empty data chunk");
  return clip;
}

AudioClip load_wav_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes, path);
}

std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  const std::uint16_t ch = static_cast<std::uint16_t>(clip.channels);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  append_u32le(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  append_u32le(out, 16);
  append_u16le(out, 1);  // PCM
  append_u16le(out, ch);
  append_u32le(out, clip.sample_rate);
  append_u32le(out, clip.sample_rate * ch * 2);
  append_u16le(out, static_cast<std::uint16_t>(ch * 2));
  append_u16le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  append_u32le(out, data_bytes);
  for (float s : clip.samples) {
    float c = std::clamp(s, -1.0f, 1.0f);
    auto q = static_cast<std::int16_t>(std::lrint(c * 32767.0f));
    append_u16le(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

AudioClip to_mono(const AudioClip& clip) {
  if (clip.channels == 1) return clip;
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.channels = 1;
  out.source_id = clip.source_id;
  std::size_t frames = clip.frame_count();
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    out.samples[i] = 0.5f * (clip.samples[2 * i] + clip.samples[2 * i + 1]);
  }
  return out;
}

AudioClip resample(const AudioClip& clip, unsigned target_sr) {
  if (target_sr == 0) throw ConfigError("target sample rate must be positive");
  if (clip.channels != 1) throw ValidationError("resample expects a mono clip");
  if (clip.sample_rate == target_sr) return clip;

  const std::size_t n = clip.samples.size();
  const double ratio = static_cast<double>(target_sr) / clip.sample_rate;
  const std::size_t out_len =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * ratio)));

  AudioClip out;
  out.sample_rate = target_sr;
  out.channels = 1;
  out.source_id = clip.source_id;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    double pos = i / ratio;
    auto i0 = static_cast<std::size_t>(pos);
    if (i0 >= n - 1) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    double frac = pos - static_cast<double>(i0);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[i0] +
                                        frac * clip.samples[i0 + 1]);
  }
  return out;
}

std::size_t frame_count(std::size_t len, std::size_t frame_len, std::size_t hop) {
  if (frame_len == 0 || hop == 0) throw ConfigError("frame_len and hop must be positive");
  if (len < frame_len) return 1;  // single zero-padded frame
  return 1 + (len - frame_len) / hop;
}

void copy_frame(std::span<const float> samples, std::size_t index, std::size_t frame_len,
                std::size_t hop, std::span<double> out) {
  std::size_t start = index * hop;
  for (std::size_t i = 0; i < frame_len; ++i) {
    std::size_t j = start + i;
    out[i] = j < samples.size() ? static_cast<double>(samples[j]) : 0.0;
  }
}

std::vector<std::vector<double>> frame_signal(std::span<const float> samples,
                                              std::size_t frame_len, std::size_t hop) {
  std::size_t count = frame_count(samples.size(), frame_len, hop);
  std::vector<std::vector<double>> frames(count, std::vector<double>(frame_len));
  for (std::size_t f = 0; f < count; ++f) copy_frame(samples, f, frame_len, hop, frames[f]);
  return frames;
}

}  // namespace mdmer::audio
