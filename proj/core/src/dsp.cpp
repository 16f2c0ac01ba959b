#include "mdmer/dsp.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "mdmer/errors.hpp"

namespace mdmer::dsp {
namespace {

constexpr double kPi = std::numbers::pi;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT. n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * kPi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MixedFeature stack_rows(std::vector<std::vector<double>> aligned_rows, FeatureLayout layout,
                        std::size_t cols, const NormStats* stats) {
  MixedFeature feat;
  feat.rows = aligned_rows.size();
  feat.cols = cols;
  feat.layout = layout;
  feat.values.resize(feat.rows * cols);
  for (std::size_t r = 0; r < feat.rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      feat.values[r * cols + c] = static_cast<float>(aligned_rows[r][c]);
    }
  }
  if (stats != nullptr) apply_norm_stats(feat, *stats);
  return feat;
}

void check_clip(const audio::AudioClip& clip, const DspConfig& cfg) {
  if (clip.channels != 1) throw ValidationError("feature extraction expects a mono clip");
  if (clip.samples.empty()) throw ValidationError("empty clip");
  if (clip.sample_rate != cfg.sample_rate) {
    throw ConfigError("clip sample rate " + std::to_string(clip.sample_rate) +
                      " does not match config rate " + std::to_string(cfg.sample_rate));
  }
}

}  // namespace

void DspConfig::validate() const {
  if (sample_rate == 0) throw ConfigError("sample_rate must be positive");
  if (!is_power_of_two(n_fft)) throw ConfigError("n_fft must be a power of two");
  if (hop == 0 || hop > n_fft) throw ConfigError("hop must be in (0, n_fft]");
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  if (n_mfcc == 0 || n_mfcc > n_mels) throw ConfigError("n_mfcc must be in (0, n_mels]");
  if (fmin < 0.0) throw ConfigError("fmin must be non-negative");
  if (fmin >= fmax_effective()) throw ConfigError("fmin must be below fmax");
  if (fmax_effective() > sample_rate / 2.0 + 1e-9) throw ConfigError("fmax exceeds Nyquist");
  if (target_frames == 0) throw ConfigError("target_frames must be positive");
  if (log_floor <= 0.0) throw ConfigError("log_floor must be positive");
}

Spectrogram stft_magnitude(const audio::AudioClip& clip, const DspConfig& cfg) {
  cfg.validate();
  check_clip(clip, cfg);

  const std::size_t n = cfg.n_fft;
  const std::size_t bins = n / 2 + 1;
  const std::size_t frames = audio::frame_count(clip.samples.size(), n, cfg.hop);

  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
  }

  Spectrogram spec;
  spec.bins = bins;
  spec.frames = frames;
  spec.bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(n);
  spec.magnitudes.assign(bins * frames, 0.0);

  std::vector<double> frame(n);
  std::vector<std::complex<double>> buf(n);
  for (std::size_t f = 0; f < frames; ++f) {
    audio::copy_frame(clip.samples, f, n, cfg.hop, frame);
    for (std::size_t i = 0; i < n; ++i) buf[i] = {frame[i] * window[i], 0.0};
    fft_radix2(buf);
    for (std::size_t k = 0; k < bins; ++k) spec.magnitudes[k * frames + f] = std::abs(buf[k]);
  }
  return spec;
}

std::vector<double> mel_center_frequencies(const DspConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax_effective());
  std::vector<double> centers(cfg.n_mels);
  const double step = (mel_hi - mel_lo) / static_cast<double>(cfg.n_mels + 1);
  for (std::size_t i = 0; i < cfg.n_mels; ++i) {
    centers[i] = mel_to_hz(mel_lo + step * static_cast<double>(i + 1));
  }
  return centers;
}

std::vector<double> mel_filterbank(const DspConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax_effective());
  const double step = (mel_hi - mel_lo) / static_cast<double>(cfg.n_mels + 1);

  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + step * static_cast<double>(i));
  }

  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.n_fft);
  std::vector<double> fb(cfg.n_mels * bins, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > lo && f < hi) {
        w = f <= center ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
      }
      if (w > 0.0) {
        fb[m * bins + k] = w * norm;
        any = true;
      }
    }
    if (!any) {
      throw ConfigError("n_mels too large for the frequency range: filter " + std::to_string(m) +
                        " covers no FFT bin");
    }
  }
  return fb;
}

std::vector<double> mel_spectrogram(const Spectrogram& spec, const std::vector<double>& filterbank,
                                    std::size_t n_mels) {
  if (filterbank.size() != n_mels * spec.bins) {
    throw ShapeError("filterbank shape does not match spectrogram bins");
  }
  std::vector<double> power(spec.magnitudes.size());
  for (std::size_t i = 0; i < power.size(); ++i) {
    power[i] = spec.magnitudes[i] * spec.magnitudes[i];
  }
  std::vector<double> out(n_mels * spec.frames);
  Eigen::Map<const RowMat> fb(filterbank.data(), static_cast<Eigen::Index>(n_mels),
                              static_cast<Eigen::Index>(spec.bins));
  Eigen::Map<const RowMat> p(power.data(), static_cast<Eigen::Index>(spec.bins),
                             static_cast<Eigen::Index>(spec.frames));
  Eigen::Map<RowMat> o(out.data(), static_cast<Eigen::Index>(n_mels),
                       static_cast<Eigen::Index>(spec.frames));
  o.noalias() = fb * p;
  return out;
}

std::vector<double> mfcc(const std::vector<double>& mel, std::size_t n_mels, std::size_t frames,
                         const DspConfig& cfg) {
  cfg.validate();
  if (mel.size() != n_mels * frames) throw ShapeError("mel matrix shape mismatch");
  const std::size_t n_out = cfg.n_mfcc;

  // Orthonormal DCT-II basis, [n_out x n_mels].
  std::vector<double> basis(n_out * n_mels);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(n_mels))
                                : std::sqrt(2.0 / static_cast<double>(n_mels));
    for (std::size_t i = 0; i < n_mels; ++i) {
      basis[k * n_mels + i] =
          scale * std::cos(kPi * (2.0 * static_cast<double>(i) + 1.0) * static_cast<double>(k) /
                           (2.0 * static_cast<double>(n_mels)));
    }
  }

  std::vector<double> logmel(mel.size());
  for (std::size_t i = 0; i < mel.size(); ++i) logmel[i] = std::log(mel[i] + cfg.log_floor);

  std::vector<double> out(n_out * frames);
  Eigen::Map<const RowMat> b(basis.data(), static_cast<Eigen::Index>(n_out),
                             static_cast<Eigen::Index>(n_mels));
  Eigen::Map<const RowMat> lm(logmel.data(), static_cast<Eigen::Index>(n_mels),
                              static_cast<Eigen::Index>(frames));
  Eigen::Map<RowMat> o(out.data(), static_cast<Eigen::Index>(n_out),
                       static_cast<Eigen::Index>(frames));
  o.noalias() = b * lm;
  return out;
}

std::vector<double> spectral_centroid(const Spectrogram& spec) {
  std::vector<double> out(spec.frames, 0.0);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double m = spec.magnitudes[k * spec.frames + f];
      num += spec.bin_hz * static_cast<double>(k) * m;
      den += m;
    }
    out[f] = den < 1e-12 ? 0.0 : num / den;
  }
  return out;
}

std::vector<double> rmse(const audio::AudioClip& clip, const DspConfig& cfg) {
  cfg.validate();
  check_clip(clip, cfg);
  const std::size_t frames = audio::frame_count(clip.samples.size(), cfg.n_fft, cfg.hop);
  std::vector<double> out(frames);
  std::vector<double> frame(cfg.n_fft);
  for (std::size_t f = 0; f < frames; ++f) {
    audio::copy_frame(clip.samples, f, cfg.n_fft, cfg.hop, frame);
    double acc = 0.0;
    for (double v : frame) acc += v * v;
    out[f] = std::sqrt(acc / static_cast<double>(cfg.n_fft));
  }
  return out;
}

std::vector<double> resample_row(std::span<const double> row, std::size_t target) {
  std::vector<double> out(target);
  const std::size_t n = row.size();
  if (n == 0) return out;
  if (n == 1) {
    std::fill(out.begin(), out.end(), row[0]);
    return out;
  }
  if (n == target) {
    std::copy(row.begin(), row.end(), out.begin());
    return out;
  }
  const double scale = static_cast<double>(n - 1) / static_cast<double>(target - 1 ? target - 1 : 1);
  for (std::size_t i = 0; i < target; ++i) {
    const double pos = target == 1 ? 0.0 : static_cast<double>(i) * scale;
    auto i0 = static_cast<std::size_t>(pos);
    if (i0 >= n - 1) {
      out[i] = row[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out[i] = (1.0 - frac) * row[i0] + frac * row[i0 + 1];
  }
  return out;
}

MixedFeature assemble_mixed_feature(const audio::AudioClip& clip, const DspConfig& cfg,
                                    const NormStats* stats) {
  cfg.validate();
  check_clip(clip, cfg);

  const Spectrogram spec = stft_magnitude(clip, cfg);
  const std::vector<double> fb = mel_filterbank(cfg);
  const std::vector<double> mel = mel_spectrogram(spec, fb, cfg.n_mels);
  const std::vector<double> cep = mfcc(mel, cfg.n_mels, spec.frames, cfg);
  const std::vector<double> sc = spectral_centroid(spec);
  const std::vector<double> rms = rmse(clip, cfg);

  const std::size_t T = cfg.target_frames;
  FeatureLayout layout{cfg.n_mels, cfg.n_mfcc, 1, 1};
  std::vector<std::vector<double>> rows;
  rows.reserve(layout.total());
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    rows.push_back(resample_row({mel.data() + m * spec.frames, spec.frames}, T));
  }
  for (std::size_t k = 0; k < cfg.n_mfcc; ++k) {
    rows.push_back(resample_row({cep.data() + k * spec.frames, spec.frames}, T));
  }
  rows.push_back(resample_row(sc, T));
  rows.push_back(resample_row(rms, T));
  return stack_rows(std::move(rows), layout, T, stats);
}

MixedFeature assemble_stft_feature(const audio::AudioClip& clip, const DspConfig& cfg,
                                   const NormStats* stats) {
  cfg.validate();
  check_clip(clip, cfg);

  const Spectrogram spec = stft_magnitude(clip, cfg);
  const std::size_t target_rows = FeatureLayout{cfg.n_mels, cfg.n_mfcc, 1, 1}.total();
  const std::size_t T = cfg.target_frames;

  // Interpolate over frequency first so the model input shape matches the
  // mixed feature exactly, then align time.
  std::vector<std::vector<double>> freq_rows(target_rows);
  std::vector<double> column(spec.bins);
  std::vector<std::vector<double>> resized(spec.frames);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t k = 0; k < spec.bins; ++k) column[k] = spec.magnitudes[k * spec.frames + f];
    resized[f] = resample_row(column, target_rows);
  }
  for (std::size_t r = 0; r < target_rows; ++r) {
    std::vector<double> row(spec.frames);
    for (std::size_t f = 0; f < spec.frames; ++f) row[f] = resized[f][r];
    freq_rows[r] = resample_row(row, T);
  }
  // Single block: the layout records the raw-spectrogram variant as all-mel.
  FeatureLayout layout{target_rows - cfg.n_mfcc - 2, cfg.n_mfcc, 1, 1};
  return stack_rows(std::move(freq_rows), layout, T, stats);
}

NormStats compute_norm_stats(const std::vector<const MixedFeature*>& feats) {
  if (feats.empty()) throw ValidationError("no features to compute statistics from");
  const std::size_t rows = feats.front()->rows;
  const std::size_t cols = feats.front()->cols;
  for (const MixedFeature* f : feats) {
    if (f->rows != rows || f->cols != cols) throw ShapeError("feature shape mismatch");
  }
  NormStats stats;
  stats.mean.resize(rows);
  stats.stddev.resize(rows);
  const double count = static_cast<double>(feats.size() * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (const MixedFeature* f : feats) {
      for (std::size_t c = 0; c < cols; ++c) sum += f->at(r, c);
    }
    const double mean = sum / count;
    double var = 0.0;
    for (const MixedFeature* f : feats) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = f->at(r, c) - mean;
        var += d * d;
      }
    }
    stats.mean[r] = static_cast<float>(mean);
    stats.stddev[r] = static_cast<float>(std::max(std::sqrt(var / count), 1e-6));
  }
  return stats;
}

void apply_norm_stats(MixedFeature& feat, const NormStats& stats) {
  if (stats.mean.size() != feat.rows || stats.stddev.size() != feat.rows) {
    throw ShapeError("normalization stats row count mismatch");
  }
  for (std::size_t r = 0; r < feat.rows; ++r) {
    const float m = stats.mean[r];
    const float s = stats.stddev[r];
    for (std::size_t c = 0; c < feat.cols; ++c) {
      feat.values[r * feat.cols + c] = (feat.values[r * feat.cols + c] - m) / s;
    }
  }
  feat.normalized = true;
}

}  // namespace mdmer::dsp
