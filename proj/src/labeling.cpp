#include "fuselearn/labeling.hpp"

#include <algorithm>
#include <cmath>

#include "fuselearn/error.hpp"
#include "fuselearn/text.hpp"

namespace fuselearn {

LabelWeights::LabelWeights(double mastery, double self_eval, double class_eval) {
  const double sum = mastery + self_eval + class_eval;
  if (!(mastery >= 0 && self_eval >= 0 && class_eval >= 0) || !(sum > 0) || !std::isfinite(sum))
    throw Error(ErrorCode::InvalidArgument, "label weights must be nonnegative with a positive sum");
  w_ = {mastery / sum, self_eval / sum, class_eval / sum};
}

LabelWeights LabelWeights::parse(std::string_view s) {
  auto parts = text::split(s);
  if (parts.size() != 3) throw Error(ErrorCode::InvalidArgument, "weights need three comma-separated values");
  double w[3];
  for (int i = 0; i < 3; ++i) {
    auto v = text::parse_double(parts[static_cast<std::size_t>(i)]);
    if (!v) throw Error(ErrorCode::InvalidArgument, "weights must be numeric");
    w[i] = *v;
  }
  return {w[0], w[1], w[2]};
}

namespace {
void require(double v, double lo, double hi, const char* what, const std::string& id) {
  if (!(v >= lo && v <= hi))
    throw Error(ErrorCode::EvalOutOfRange, id + ": " + what + " out of range");
}
}  // namespace

LusLabel lus_label(const LearningUnit& unit, const LabelWeights& weights) {
  require(unit.mastery, 0, 100, "mastery", unit.unit_id);
  require(unit.self_eval, 10, 100, "self_eval", unit.unit_id);
  require(unit.class_eval, 0, 100, "class_eval", unit.unit_id);
  LusLabel label;
  label.unit_id = unit.unit_id;
  label.components = {unit.mastery / 100.0, (unit.self_eval - 10.0) / 90.0, unit.class_eval / 100.0};
  label.value = weights.mastery() * label.components[0] + weights.self_eval() * label.components[1] +
                weights.class_eval() * label.components[2];
  label.value = std::clamp(label.value, 0.0, 1.0);
  return label;
}

}  // namespace fuselearn
