#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mdmer::audio {

/// A decoded audio clip. `samples` are amplitudes in [-1, 1]; for
/// `channels == 2` they are interleaved L,R frames.
struct AudioClip {
  std::vector<float> samples;
  unsigned sample_rate = 0;
  unsigned channels = 1;
  std::string source_id;

  std::size_t frame_count() const { return channels ? samples.size() / channels : 0; }
};

/// Decode a RIFF/WAVE byte stream (PCM 16-bit or IEEE float 32-bit, 1-2
/// channels). Throws FormatError / UnsupportedCodecError.
AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id = {});

/// Read a .wav file from disk and decode it.
AudioClip load_wav_file(const std::string& path);

/// Encode a mono/stereo clip as 16-bit PCM RIFF/WAVE bytes (amplitudes
/// clamped to [-1, 1] and quantized by 32767).
std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip);

/// Average stereo frames to one channel; mono clips are returned unchanged.
AudioClip to_mono(const AudioClip& clip);

/// Linear-interpolation resample of a mono clip to `target_sr`. Output length
/// is round(len * target_sr / sample_rate).
AudioClip resample(const AudioClip& clip, unsigned target_sr);

/// Number of analysis frames for a signal of `len` samples: full frames only,
/// except len < frame_len which yields one zero-padded frame.
std::size_t frame_count(std::size_t len, std::size_t frame_len, std::size_t hop);

/// Copy frame `index` (zero-padded past the end) into `out[0..frame_len)`.
void copy_frame(std::span<const float> samples, std::size_t index, std::size_t frame_len,
                std::size_t hop, std::span<double> out);

/// Materialize all frames of a signal. Mostly a convenience for tests; the
/// DSP kernels use copy_frame to avoid the allocation.
std::vector<std::vector<double>> frame_signal(std::span<const float> samples,
                                              std::size_t frame_len, std::size_t hop);

}  // namespace mdmer::audio
