#pragma once

#include <string>

#include "mdmer/errors.hpp"

namespace mdmer::model {

/// Russell-circumplex quadrants: Q1 high-V/high-A, Q2 low-V/high-A,
/// Q3 low-V/low-A, Q4 high-V/low-A.
enum class Quadrant : int { kQ1 = 0, kQ2 = 1, kQ3 = 2, kQ4 = 3 };

struct EmotionLabel {
  Quadrant quadrant = Quadrant::kQ1;

  bool valence_high() const {
    return quadrant == Quadrant::kQ1 || quadrant == Quadrant::kQ4;
  }
  bool arousal_high() const {
    return quadrant == Quadrant::kQ1 || quadrant == Quadrant::kQ2;
  }

  static EmotionLabel from_bits(bool valence_high, bool arousal_high) {
    if (arousal_high) return {valence_high ? Quadrant::kQ1 : Quadrant::kQ2};
    return {valence_high ? Quadrant::kQ4 : Quadrant::kQ3};
  }
};

inline Quadrant parse_quadrant(const std::string& text) {
  if (text == "Q1") return Quadrant::kQ1;
  if (text == "Q2") return Quadrant::kQ2;
  if (text == "Q3") return Quadrant::kQ3;
  if (text == "Q4") return Quadrant::kQ4;
  throw ValidationError("unknown quadrant label: " + text);
}

inline std::string quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::kQ1: return "Q1";
    case Quadrant::kQ2: return "Q2";
    case Quadrant::kQ3: return "Q3";
    case Quadrant::kQ4: return "Q4";
  }
  throw ValidationError("invalid quadrant value");
}

}  // namespace mdmer::model
