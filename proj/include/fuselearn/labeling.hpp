#pragma once

#include <array>
#include <string>
#include <string_view>

#include "fuselearn/ingest.hpp"

namespace fuselearn {

// Convex weights over (mastery, self-evaluation, class-evaluation).
class LabelWeights {
 public:
  // Defaults favour the two per-unit evaluations over static mastery.
  LabelWeights() : LabelWeights(0.2, 0.4, 0.4) {}
  // Normalizes to unit sum; rejects negative or all-zero weights.
  LabelWeights(double mastery, double self_eval, double class_eval);

  // "m,s,c", e.g. "0.2,0.4,0.4".
  static LabelWeights parse(std::string_view text);

  double mastery() const noexcept { return w_[0]; }
  double self_eval() const noexcept { return w_[1]; }
  double class_eval() const noexcept { return w_[2]; }

 private:
  std::array<double, 3> w_{};
};

struct LusLabel {
  std::string unit_id;
  double value = 0.0;                   // in [0, 1]
  std::array<double, 3> components{};  // mastery/100, (self-10)/90, class/100
};

LusLabel lus_label(const LearningUnit& unit, const LabelWeights& weights = {});

}  // namespace fuselearn
