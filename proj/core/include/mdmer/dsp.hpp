#pragma once

#include <cstddef>
#include <vector>

#include "mdmer/audio.hpp"

namespace mdmer::dsp {

/// STFT / feature extraction settings. The clip fed to the feature kernels
/// must already be mono at `sample_rate`.
struct DspConfig {
  unsigned sample_rate = 22050;
  std::size_t n_fft = 2048;   // power of two
  std::size_t hop = 512;
  std::size_t n_mels = 128;
  std::size_t n_mfcc = 20;
  double fmin = 0.0;
  double fmax = 0.0;          // 0 means sample_rate / 2
  std::size_t target_frames = 256;  // T, the fixed time axis after alignment
  double log_floor = 1e-10;

  double fmax_effective() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }

  /// Throws ConfigError when a constraint is violated.
  void validate() const;
};

/// Magnitude spectrogram, row-major [bins x frames], bins = n_fft/2 + 1.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> magnitudes;
  double bin_hz = 0.0;

  double at(std::size_t bin, std::size_t frame) const { return magnitudes[bin * frames + frame]; }
};

/// Row block sizes of a mixed feature matrix, in stacking order.
struct FeatureLayout {
  std::size_t mel_rows = 0;
  std::size_t mfcc_rows = 0;
  std::size_t sc_rows = 1;
  std::size_t rmse_rows = 1;

  std::size_t total() const { return mel_rows + mfcc_rows + sc_rows + rmse_rows; }
};

/// The stacked acoustic feature: mel, MFCC, spectral centroid and RMSE rows,
/// each linearly resampled to the same number of columns.
struct MixedFeature {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major
  FeatureLayout layout;
  bool normalized = false;

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Per-row normalization statistics, computed on the training split.
struct NormStats {
  std::vector<float> mean;
  std::vector<float> stddev;  // floored away from zero
};

Spectrogram stft_magnitude(const audio::AudioClip& clip, const DspConfig& cfg);

/// Triangular mel filterbank, row-major [n_mels x (n_fft/2+1)], area
/// normalized by 2/(f_upper - f_lower) per filter.
std::vector<double> mel_filterbank(const DspConfig& cfg);

/// Mel center frequencies in Hz (interior points of the mel grid).
std::vector<double> mel_center_frequencies(const DspConfig& cfg);

/// Filterbank applied to the power spectrogram, row-major [n_mels x frames].
std::vector<double> mel_spectrogram(const Spectrogram& spec, const std::vector<double>& filterbank,
                                    std::size_t n_mels);

/// Orthonormal DCT-II of log(mel + log_floor), first n_mfcc coefficients,
/// row-major [n_mfcc x frames].
std::vector<double> mfcc(const std::vector<double>& mel, std::size_t n_mels, std::size_t frames,
                         const DspConfig& cfg);

/// Magnitude-weighted mean frequency per frame; silent frames map to 0.
std::vector<double> spectral_centroid(const Spectrogram& spec);

/// Per-frame root mean square energy using the STFT framing.
std::vector<double> rmse(const audio::AudioClip& clip, const DspConfig& cfg);

/// Linear interpolation of a row to `target` columns.
std::vector<double> resample_row(std::span<const double> row, std::size_t target);

/// Compute, align and stack all four features; z-score per row when `stats`
/// is given, pass raw values through otherwise.
MixedFeature assemble_mixed_feature(const audio::AudioClip& clip, const DspConfig& cfg,
                                    const NormStats* stats = nullptr);

/// Ablation input: raw |STFT| resized over frequency to the mixed-feature row
/// count, then aligned to T columns like any other feature.
MixedFeature assemble_stft_feature(const audio::AudioClip& clip, const DspConfig& cfg,
                                   const NormStats* stats = nullptr);

/// Per-row mean/std over a set of feature matrices of identical shape.
NormStats compute_norm_stats(const std::vector<const MixedFeature*>& feats);

/// Apply per-row z-scoring in place.
void apply_norm_stats(MixedFeature& feat, const NormStats& stats);

}  // namespace mdmer::dsp
