#include <doctest.h>

#include <cmath>

#include "fuselearn/error.hpp"
#include "fuselearn/labeling.hpp"
#include "fuselearn/random.hpp"

using namespace fuselearn;

namespace {

LearningUnit unit(double mastery, double self_eval, double class_eval) {
  LearningUnit u;
  u.unit_id = "u";
  u.mastery = mastery;
  u.self_eval = self_eval;
  u.class_eval = class_eval;
  return u;
}

}  // namespace

TEST_CASE("lus hand values") {
  CHECK(std::abs(lus_label(unit(100, 100, 100)).value - 1.0) <= 1e-9);
  CHECK(std::abs(lus_label(unit(0, 10, 0)).value - 0.0) <= 1e-9);
  // 0.2*(1/2) + 0.4*(2/3) + 0.4*(4/5) = 103/150
  const auto l = lus_label(unit(50, 70, 80), LabelWeights(0.2, 0.4, 0.4));
  CHECK(std::abs(l.value - 103.0 / 150.0) <= 1e-9);
  CHECK(std::abs(l.value - 0.68667) <= 5e-6);
  CHECK(l.components[0] == 0.5);
  CHECK(std::abs(l.components[1] - 2.0 / 3.0) <= 1e-15);
  CHECK(l.components[2] == 0.8);
}

TEST_CASE("single weight reduces to one component") {
  const LabelWeights w(0, 1, 0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double s = rng.uniform(10, 100);
    CHECK(std::abs(lus_label(unit(rng.uniform(0, 100), s, rng.uniform(0, 100)), w).value - (s - 10) / 90) <= 1e-12);
  }
}

TEST_CASE("lus is monotone and bounded") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const LabelWeights w(rng.uniform(), rng.uniform(), rng.uniform() + 1e-3);
    const auto u = unit(rng.uniform(0, 100), rng.uniform(10, 100), rng.uniform(0, 100));
    const double base = lus_label(u, w).value;
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    auto m = u;
    m.mastery = rng.uniform(u.mastery, 100);
    auto s = u;
    s.self_eval = rng.uniform(u.self_eval, 100);
    auto c = u;
    c.class_eval = rng.uniform(u.class_eval, 100);
    CHECK(lus_label(m, w).value >= base);
    CHECK(lus_label(s, w).value >= base);
    CHECK(lus_label(c, w).value >= base);
  }
}

TEST_CASE("weights parse and validate") {
  const auto w = LabelWeights::parse("1,2,2");
  CHECK(w.mastery() == doctest::Approx(0.2));
  CHECK(w.self_eval() == doctest::Approx(0.4));
  CHECK_THROWS_AS(LabelWeights::parse("1,2"), Error);
  CHECK_THROWS_AS(LabelWeights::parse("a,b,c"), Error);
  CHECK_THROWS_AS(LabelWeights(-1, 1, 1), Error);
  CHECK_THROWS_AS(LabelWeights(0, 0, 0), Error);
  try {
    lus_label(unit(50, 5, 50));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EvalOutOfRange);
  }
}
