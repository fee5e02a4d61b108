#include <doctest.h>

#include <cmath>
#include <mutex>
#include <set>

#include "fuselearn/error.hpp"
#include "fuselearn/models.hpp"
#include "fuselearn/random.hpp"
#include "oracles.hpp"

using namespace fuselearn;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

std::vector<std::vector<double>> random_rows(Rng& rng, std::size_t n, std::size_t p) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(p));
  for (auto& r : rows)
    for (auto& v : r) v = rng.uniform(-5, 5);
  return rows;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

// Routes every training row and checks leaf values are routed means.
void check_leaf_means(const RegressionTree& t, const Matrix& x, std::span<const double> y) {
  std::vector<double> sum(t.nodes.size(), 0.0);
  std::vector<std::size_t> count(t.nodes.size(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t n = 0;
    while (!t.nodes[n].is_leaf()) {
      const auto& node = t.nodes[n];
      n = static_cast<std::size_t>(x(i, static_cast<std::size_t>(node.feature)) <= node.threshold ? node.left : node.right);
    }
    sum[n] += y[i];
    ++count[n];
  }
  for (std::size_t n = 0; n < t.nodes.size(); ++n)
    if (t.nodes[n].is_leaf() && count[n]) CHECK(t.nodes[n].value == doctest::Approx(sum[n] / count[n]).epsilon(1e-12));
}

}  // namespace

TEST_CASE("cart hand example") {
  const auto x = to_matrix({{0}, {1}, {2}, {3}});
  const std::vector<double> y{0, 0, 1, 1};
  CartParams p;
  p.max_depth = 1;
  p.min_leaf = 1;
  p.min_split = 2;
  const auto t = cart_fit(x, y, p);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].threshold == 1.5);
  CHECK(t.nodes[t.nodes[0].left].value == 0.0);
  CHECK(t.nodes[t.nodes[0].right].value == 1.0);
  double sse = 0;
  for (std::size_t i = 0; i < 4; ++i) sse += std::pow(tree_predict(t, x.row(i)) - y[i], 2);
  CHECK(sse == 0.0);
  CHECK(tree_predict(t, std::vector<double>{0.7}) == 0.0);
  CHECK(tree_predict(t, std::vector<double>{1.5}) == 0.0);
  CHECK(tree_predict(t, std::vector<double>{1.6}) == 1.0);
}

TEST_CASE("cart degenerate cases") {
  const auto x = to_matrix({{0}, {1}, {2}, {3}, {4}});
  const std::vector<double> c(5, 2.5);
  const auto t = cart_fit(x, c);
  CHECK(t.nodes.size() == 1);
  CHECK(tree_predict(t, std::vector<double>{-100}) == 2.5);

  Rng rng(1);
  const auto rows = random_rows(rng, 40, 3);
  std::vector<double> y;
  for (std::size_t i = 0; i < rows.size(); ++i) y.push_back(rng.normal());
  CartParams full{kUnlimitedDepth, 1, 2, 0.0};
  const auto m = to_matrix(rows);
  const auto deep = cart_fit(m, y, full);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(tree_predict(deep, m.row(i)) == y[i]);

  CHECK(code_of([&] { cart_fit(Matrix(), {}); }) == ErrorCode::EmptyTrainingSet);
  std::vector<double> bad{0, 1, NAN, 3, 4};
  CHECK(code_of([&] { cart_fit(x, bad); }) == ErrorCode::NonFiniteTarget);
  CHECK(code_of([&] { tree_predict(deep, std::vector<double>{}); }) == ErrorCode::DimensionMismatch);
  CHECK_THROWS(CartParams{3, 3, 4, 0.0}.validate());
}

TEST_CASE("cart root split equals the exhaustive oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 4 + rng.below(9), p = 1 + rng.below(3);
    const auto rows = random_rows(rng, n, p);
    std::vector<double> y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(rng.normal());
    const std::size_t min_leaf = 1 + rng.below(2);
    CartParams params{1, min_leaf, 2 * min_leaf, 0.0};
    const auto t = cart_fit(to_matrix(rows), y, params);
    const auto want = oracle::best_split(rows, y, min_leaf);
    if (want.feature < 0) {
      CHECK(t.nodes.size() == 1);
      continue;
    }
    REQUIRE(t.nodes.size() == 3);
    CHECK(t.nodes[0].feature == want.feature);
    CHECK(t.nodes[0].threshold == want.threshold);
  }
}

TEST_CASE("cart leaves hold routed means") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto rows = random_rows(rng, 50, 4);
    std::vector<double> y;
    for (auto& r : rows) y.push_back(r[0] * r[1] + rng.normal());
    const auto m = to_matrix(rows);
    check_leaf_means(cart_fit(m, y), m, y);
  }
}

TEST_CASE("forest degenerates to cart and averages trees") {
  Rng rng(4);
  const auto rows = random_rows(rng, 60, 5);
  std::vector<double> y;
  for (auto& r : rows) y.push_back(r[0] - r[2] + 0.1 * rng.normal());
  const auto m = to_matrix(rows);

  ForestParams one;
  one.n_trees = 1;
  one.bootstrap = false;
  one.feature_subsample = 5;
  const auto f1 = forest_fit(m, y, one, 9);
  CHECK(f1.trees[0] == cart_fit(m, y, one.tree));

  ForestParams fp;
  fp.n_trees = 25;
  const auto f = forest_fit(m, y, fp, 10);
  CHECK(f.feature_subsample == 1);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0;
    for (const auto& t : f.trees) s += tree_predict(t, m.row(i));
    CHECK(std::abs(forest_predict(f, m.row(i)) - s / 25.0) <= 1e-12);
  }
  CHECK(serialize_model(forest_fit(m, y, fp, 10)) == serialize_model(f));
  fp.threads = 4;
  CHECK(serialize_model(forest_fit(m, y, fp, 10)) == serialize_model(f));
  CHECK(serialize_model(forest_fit(m, y, fp, 11)) != serialize_model(f));
}

TEST_CASE("gbdt boosting contracts") {
  Rng rng(5);
  const auto rows = random_rows(rng, 50, 3);
  std::vector<double> y;
  for (auto& r : rows) y.push_back(std::sin(r[0]) + r[1] * r[1] * 0.1 + 0.05 * rng.normal());
  const auto m = to_matrix(rows);

  GbdtParams none;
  none.n_trees = 0;
  const auto g0 = gbdt_fit(m, y, none);
  double mean = 0;
  for (double v : y) mean += v;
  mean /= double(y.size());
  CHECK(gbdt_predict(g0, m.row(3)) == doctest::Approx(mean).epsilon(1e-15));

  GbdtParams exact;
  exact.n_trees = 1;
  exact.learning_rate = 1.0;
  exact.tree = {kUnlimitedDepth, 1, 2, 0.0};
  const auto g1 = gbdt_fit(m, y, exact);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(gbdt_predict(g1, m.row(i)) == doctest::Approx(y[i]).epsilon(1e-12));

  for (int trial = 0; trial < 10; ++trial) {
    GbdtParams gp;
    gp.n_trees = 60;
    gp.learning_rate = rng.uniform(0.05, 1.0);
    const auto g = gbdt_fit(m, y, gp);
    REQUIRE(g.train_mse.size() == 61);
    for (std::size_t t = 1; t < g.train_mse.size(); ++t) CHECK(g.train_mse[t] <= g.train_mse[t - 1] + 1e-15);
  }
}

TEST_CASE("r2_score") {
  const std::vector<double> y{1, 2, 3};
  CHECK(r2_score(y, y) == 1.0);
  CHECK(r2_score(y, std::vector<double>{2, 2, 2}) == 0.0);
  CHECK(r2_score(y, std::vector<double>{1, 2, 2}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(code_of([] { r2_score(std::vector<double>{1, 1}, std::vector<double>{1, 2}); }) == ErrorCode::ConstantTruth);
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> t(12), p(12);
    for (std::size_t i = 0; i < 12; ++i) {
      t[i] = rng.normal();
      p[i] = t[i] + 0.5 * rng.normal();
    }
    const double r = r2_score(t, p);
    CHECK(oracle::rel_close(r, oracle::r2(t, p), 1e-9));
    const double a = rng.uniform(-3, 3) + 0.5, b = rng.uniform(-10, 10);
    for (std::size_t i = 0; i < 12; ++i) {
      t[i] = a * t[i] + b;
      p[i] = a * p[i] + b;
    }
    CHECK(std::abs(r2_score(t, p) - r) <= 1e-9);
  }
}

TEST_CASE("model serialization round-trips") {
  Rng rng(7);
  const auto rows = random_rows(rng, 40, 4);
  std::vector<double> y;
  for (auto& r : rows) y.push_back(r[0] + r[3]);
  const auto m = to_matrix(rows);
  for (auto kind : {ModelKind::Cart, ModelKind::Forest, ModelKind::Gbdt}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.cart.max_depth = 3;
    spec.forest.n_trees = 10;
    spec.gbdt.n_trees = 20;
    const auto model = fit_model(spec, m, y, 3);
    const auto text = serialize_model(model);
    const auto back = deserialize_model(text);
    CHECK(serialize_model(back) == text);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> q{rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-6, 6)};
      CHECK(predict(back, q) == predict(model, q));
    }
    CHECK(code_of([&] { deserialize_model(text.substr(0, text.size() / 2)); }) == ErrorCode::SchemaViolation);
    auto wrong = text;
    const auto pos = wrong.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    wrong.replace(pos, 11, "\"version\":7");
    try {
      deserialize_model(wrong);
      FAIL("expected version mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SchemaViolation);
      CHECK(std::string(e.what()).find('7') != std::string::npos);
    }
  }
}

TEST_CASE("fold assignment partitions rows") {
  const auto f = make_folds(20, 10, 1);
  for (const auto& t : f.test_rows) CHECK(t.size() == 2);
  for (std::size_t n : {23u, 100u, 201u}) {
    const auto fa = make_folds(n, 10, 99);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (std::size_t k = 0; k < fa.test_rows.size(); ++k) {
      lo = std::min(lo, fa.test_rows[k].size());
      hi = std::max(hi, fa.test_rows[k].size());
      for (auto r : fa.test_rows[k]) {
        ++seen[r];
        CHECK(fa.fold_of_row[r] == k);
      }
    }
    CHECK(hi - lo <= 1);
    for (int s : seen) CHECK(s == 1);
  }
  CHECK(make_folds(50, 10, 3).fold_of_row == make_folds(50, 10, 3).fold_of_row);
  CHECK(make_folds(50, 10, 3).fold_of_row != make_folds(50, 10, 4).fold_of_row);
  CHECK(code_of([] { make_folds(5, 10, 0); }) == ErrorCode::TooFewRows);
}

TEST_CASE("kfold_cv is deterministic and never fits on test rows") {
  Rng rng(8);
  const std::size_t n = 60;
  std::vector<double> y(n);
  for (auto& v : y) v = rng.normal();
  auto make = [&](double strength) {
    FeatureMatrix m;
    m.values = Matrix(n, 6);
    for (std::size_t j = 0; j < 6; ++j) m.columns.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
      m.row_ids.push_back("u" + std::to_string(i));
      for (std::size_t j = 0; j < 6; ++j) m.values(i, j) = strength * y[i] * double(j % 3) + rng.normal();
    }
    return m;
  };
  std::vector<std::pair<Channel, FeatureMatrix>> ch{{Channel::Eye, make(1.0)}, {Channel::Mouse, make(0.5)}};
  ModelSpec spec;
  spec.kind = ModelKind::Gbdt;
  spec.gbdt.n_trees = 30;

  std::mutex mu;
  std::vector<std::string> violations;
  std::size_t calls = 0;
  CvOptions opt;
  opt.seed = 42;
  opt.threads = 3;
  const auto folds = make_folds(n, opt.k, opt.seed);
  opt.observer = [&](std::size_t f, std::string_view stage, std::span<const std::string> ids) {
    std::lock_guard lock(mu);
    ++calls;
    std::set<std::string> test;
    for (auto r : folds.test_rows[f]) test.insert("u" + std::to_string(r));
    if (ids.size() != n - test.size()) violations.push_back(std::string(stage) + " row count");
    for (const auto& id : ids)
      if (test.count(id)) violations.push_back(std::string(stage) + " saw " + id);
  };
  const auto a = kfold_cv(ch, y, spec, opt);
  CHECK(violations.empty());
  CHECK(calls == opt.k * (2 * 3 + 1));
  opt.observer = {};
  opt.threads = 1;
  const auto b = kfold_cv(ch, y, spec, opt);
  CHECK(a.fold_r2 == b.fold_r2);
  CHECK(a.mean_r2 == b.mean_r2);
  CHECK(a.folds.fold_of_row == folds.fold_of_row);
}
