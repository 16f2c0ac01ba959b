#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "mdmer/errors.hpp"
#include "mdmer/tokenizer.hpp"

namespace mdmer::model {

/// Which parts of the network a run instantiates and which losses it trains.
enum class AblationMode { kFull, kSymbolicOnly, kAcousticOnly, kStftInput, kSingleLoss };

inline AblationMode parse_ablation_mode(const std::string& text) {
  if (text == "full") return AblationMode::kFull;
  if (text == "symbolic-only") return AblationMode::kSymbolicOnly;
  if (text == "acoustic-only") return AblationMode::kAcousticOnly;
  if (text == "stft-input") return AblationMode::kStftInput;
  if (text == "single-loss") return AblationMode::kSingleLoss;
  throw ConfigError("unknown mode: " + text);
}

inline std::string ablation_mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::kFull: return "full";
    case AblationMode::kSymbolicOnly: return "symbolic-only";
    case AblationMode::kAcousticOnly: return "acoustic-only";
    case AblationMode::kStftInput: return "stft-input";
    case AblationMode::kSingleLoss: return "single-loss";
  }
  throw ConfigError("invalid mode value");
}

/// The acoustic encoder ladder: three 3x3 stride-1 conv stages with 2x2
/// max pooling after each, channel widths fixed at 64/128/256.
inline constexpr std::array<std::size_t, 3> kAcousticChannels{64, 128, 256};

struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t symbolic_layers = 4;  // the encoder is four original layers
  std::size_t symbolic_heads = 4;
  std::size_t ffn_dim = 1024;
  std::size_t max_tokens = 512;
  std::size_t attr_embed_dim = 64;
  std::size_t harmonic_vocab = 64;  // larger counts clip into the last entry
  std::size_t cda_heads = 4;
  double dropout = 0.1;
  bool use_positional_encoding = true;

  // Input geometry, filled in from the DSP and quantization configs.
  std::size_t feature_rows = 150;
  std::size_t feature_cols = 256;
  int onset_vocab = 60000;
  int offset_vocab = 60001;
  int time_shift_vocab = 101;
  int velocity_vocab = 32;

  AblationMode mode = AblationMode::kFull;

  bool has_acoustic_branch() const { return mode != AblationMode::kSymbolicOnly; }
  bool has_symbolic_branch() const { return mode != AblationMode::kAcousticOnly; }
  bool fused() const { return has_acoustic_branch() && has_symbolic_branch(); }
  std::size_t fused_dim() const { return fused() ? 2 * d_model : d_model; }

  /// Spatial size of the conv output for the configured input.
  std::size_t conv_out_height() const { return feature_rows / 8; }
  std::size_t conv_out_width() const { return feature_cols / 8; }
  std::size_t acoustic_positions() const { return conv_out_height() * conv_out_width(); }

  void apply_quant(const symbolic::QuantConfig& q) {
    onset_vocab = q.onset_vocab();
    offset_vocab = q.offset_vocab();
    time_shift_vocab = q.time_shift_vocab();
    velocity_vocab = q.velocity_vocab();
  }

  void validate() const {
    if (d_model == 0 || d_model % 2 != 0) throw ConfigError("d_model must be positive and even");
    if (symbolic_layers != 4) throw ConfigError("the symbolic encoder uses exactly four layers");
    if (symbolic_heads == 0 || d_model % symbolic_heads != 0) {
      throw ConfigError("symbolic_heads must divide d_model");
    }
    if (cda_heads == 0 || d_model % cda_heads != 0) {
      throw ConfigError("cda_heads must divide d_model");
    }
    if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
    if (attr_embed_dim == 0) throw ConfigError("attr_embed_dim must be positive");
    if (harmonic_vocab == 0) throw ConfigError("harmonic_vocab must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (has_acoustic_branch() && (feature_rows < 8 || feature_cols < 8)) {
      throw ConfigError("feature matrix must be at least 8x8 to survive three pooling stages");
    }
    if (onset_vocab <= 0 || offset_vocab <= 0 || time_shift_vocab <= 0 || velocity_vocab <= 0) {
      throw ConfigError("token vocabularies must be positive");
    }
  }
};

/// Loss mixing weights; the single-loss ablation zeroes the auxiliary pair.
struct LossWeights {
  double quadrant = 1.0;
  double arousal = 1.0;
  double valence = 1.0;
};

}  // namespace mdmer::model
