#include <doctest.h>

#include <cmath>

#include "fuselearn/error.hpp"
#include "fuselearn/fusion.hpp"
#include "fuselearn/random.hpp"
#include "oracles.hpp"

using namespace fuselearn;

namespace {

FeatureMatrix make_matrix(const std::vector<std::vector<double>>& cols, const std::string& prefix = "c") {
  FeatureMatrix m;
  const std::size_t n = cols.front().size();
  m.values = Matrix(n, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    m.columns.push_back(prefix + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) m.values(i, j) = cols[j][i];
  }
  for (std::size_t i = 0; i < n; ++i) m.row_ids.push_back("r" + std::to_string(i));
  return m;
}

std::vector<double> gaussian(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
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

}  // namespace

TEST_CASE("correlation p-value matches numeric integration of the t density") {
  for (std::size_t n : {5u, 12u, 40u, 200u})
    for (double r : {0.0, 0.05, 0.2, 0.45, 0.7}) {
      const double t = r * std::sqrt((n - 2.0) / (1.0 - r * r));
      CHECK(correlation_p_value(r, n) == doctest::Approx(oracle::t_two_sided_p(t, n - 2.0)).epsilon(1e-8));
    }
  CHECK(correlation_p_value(1.0, 10) == 0.0);
  CHECK_THROWS_AS(correlation_p_value(0.3, 2), Error);
}

TEST_CASE("hypothesis_filter keeps correlates and drops constants") {
  Rng rng(1);
  auto y = gaussian(rng, 50);
  std::vector<double> constant(50, 3.0);
  auto m = make_matrix({y, constant, gaussian(rng, 50)});
  const auto mask = hypothesis_filter(m, y, 0.05);
  CHECK(mask.p_values[0] < 1e-12);
  CHECK(mask.p_values[1] == 1.0);
  CHECK(std::find(mask.kept.begin(), mask.kept.end(), 0u) != mask.kept.end());
  CHECK(std::find(mask.kept.begin(), mask.kept.end(), 1u) == mask.kept.end());
  for (auto k : mask.kept) CHECK(mask.p_values[k] <= 0.05);

  CHECK(code_of([&] { hypothesis_filter(m, std::vector<double>(y.begin(), y.begin() + 2), 0.05); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("hypothesis_filter drops independent noise at the nominal rate") {
  Rng rng(2024);
  int dropped = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto y = gaussian(rng, 100);
    auto strong = y;
    for (auto& v : strong) v += 0.1 * rng.normal();
    const auto m = make_matrix({strong, gaussian(rng, 100)});
    const auto mask = hypothesis_filter(m, y, 0.05);
    dropped += std::find(mask.kept.begin(), mask.kept.end(), 1u) == mask.kept.end();
  }
  CHECK(dropped >= 180);
}

TEST_CASE("hypothesis_filter falls back to the smallest p and is monotone in alpha") {
  Rng rng(3);
  auto y = gaussian(rng, 30);
  const auto m = make_matrix({gaussian(rng, 30), gaussian(rng, 30), gaussian(rng, 30)});
  const auto strict = hypothesis_filter(m, y, 1e-9);
  REQUIRE(strict.kept.size() == 1);
  CHECK(strict.fallback);
  const auto best = std::min_element(strict.p_values.begin(), strict.p_values.end()) - strict.p_values.begin();
  CHECK(strict.kept[0] == static_cast<std::size_t>(best));

  for (int trial = 0; trial < 20; ++trial) {
    auto yy = gaussian(rng, 40);
    std::vector<std::vector<double>> cols;
    for (int j = 0; j < 12; ++j) {
      auto c = gaussian(rng, 40);
      for (std::size_t i = 0; i < 40; ++i) c[i] += 0.1 * j * yy[i];
      cols.push_back(c);
    }
    const auto mm = make_matrix(cols);
    const auto a = hypothesis_filter(mm, yy, 0.01);
    const auto b = hypothesis_filter(mm, yy, 0.2);
    if (!a.fallback)
      for (auto k : a.kept) CHECK(std::find(b.kept.begin(), b.kept.end(), k) != b.kept.end());
  }
}

TEST_CASE("scaler standardizes with stored moments") {
  Matrix m(2, 1);
  m(0, 0) = 1;
  m(1, 0) = 3;
  const auto s = scaler_fit(m);
  CHECK(s.mean[0] == 2.0);
  CHECK(s.sd[0] == doctest::Approx(std::sqrt(2.0)));
  const auto z = scaler_apply(s, m);
  CHECK(z(0, 0) == doctest::Approx(-0.7071067811865476).epsilon(1e-12));
  CHECK(z(1, 0) == doctest::Approx(0.7071067811865476).epsilon(1e-12));
  const auto again = scaler_apply(scaler_fit(z), z);
  CHECK(std::abs(again(0, 0) - z(0, 0)) <= 1e-9);

  Matrix other(1, 1);
  other(0, 0) = 5;
  CHECK(scaler_apply(s, other)(0, 0) == doctest::Approx(3.0 / std::sqrt(2.0)));

  Rng rng(4);
  Matrix big(50, 4);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 4; ++j) big(i, j) = rng.normal(10.0 * j, 1.0 + j);
  const auto zs = scaler_apply(scaler_fit(big), big);
  for (std::size_t j = 0; j < 4; ++j) {
    const auto col = zs.column(j);
    CHECK(std::abs(static_cast<double>(oracle::mean(col))) <= 1e-9);
    CHECK(std::abs(std::sqrt(static_cast<double>(oracle::pairwise_variance(col))) - 1.0) <= 1e-9);
  }
  Matrix flat(3, 1, 2.0);
  CHECK(code_of([&] { scaler_fit(flat); }) == ErrorCode::ZeroVarianceColumn);
}

TEST_CASE("pca on rank-one and isotropic data") {
  Matrix line(20, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    line(i, 0) = double(i);
    line(i, 1) = 2.0 * double(i);
  }
  const auto p = pca_fit(line, 0.95);
  CHECK(p.k == 1);
  CHECK(p.rank == 1);
  CHECK(p.explained[0] == doctest::Approx(1.0));

  Rng rng(5);
  Matrix iso(500, 3);
  for (std::size_t i = 0; i < 500; ++i)
    for (std::size_t j = 0; j < 3; ++j) iso(i, j) = rng.normal();
  CHECK(pca_fit(iso, 0.95).k == 3);

  Matrix dup(4, 2, 1.0);
  CHECK(code_of([&] { pca_fit(dup, 0.95); }) == ErrorCode::DegenerateMatrix);
}

TEST_CASE("pca matches a Jacobi eigendecomposition of the covariance") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 30 + rng.below(40), p = 2 + rng.below(6);
    Matrix m(n, p);
    std::vector<std::vector<double>> rows(n, std::vector<double>(p));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) rows[i][j] = m(i, j) = rng.normal() * (1.0 + double(j)) + (j ? m(i, j - 1) : 0.0);
    const auto model = pca_fit(m, 1.0);
    const auto eig = oracle::jacobi_eigen(oracle::covariance(rows));
    double total = 0;
    for (double v : eig.values) total += v;
    REQUIRE(model.explained.size() == p);
    for (std::size_t c = 0; c < p; ++c) {
      CHECK(oracle::rel_close(model.explained[c], eig.values[c] / total, 1e-9));
      double dot = 0;
      for (std::size_t j = 0; j < p; ++j) dot += model.components(c, j) * eig.vectors[c][j];
      CHECK(std::abs(std::abs(dot) - 1.0) <= 1e-8);
    }
  }
}

TEST_CASE("pca invariants: orthonormal rows, minimal k, affine transform") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 40, p = 10;
    Matrix m(n, p);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.normal(), b = rng.normal();
      for (std::size_t j = 0; j < p; ++j) m(i, j) = a * double(j) + b * double(p - j) + 0.3 * rng.normal();
    }
    const auto model = pca_fit(m, 0.95);
    for (std::size_t a = 0; a < model.k; ++a)
      for (std::size_t b = 0; b < model.k; ++b) {
        double g = 0;
        for (std::size_t j = 0; j < p; ++j) g += model.components(a, j) * model.components(b, j);
        CHECK(std::abs(g - (a == b ? 1.0 : 0.0)) <= 1e-8);
      }
    double cum = 0, total = 0;
    for (std::size_t c = 0; c < model.explained.size(); ++c) {
      total += model.explained[c];
      if (c + 1 < model.explained.size()) CHECK(model.explained[c] >= model.explained[c + 1]);
    }
    CHECK(total <= 1.0 + 1e-9);
    for (std::size_t c = 0; c < model.k; ++c) cum += model.explained[c];
    CHECK(cum >= 0.95);
    CHECK(cum - model.explained[model.k - 1] < 0.95);

    Matrix two(2, p);
    const double w = 0.3;
    Matrix mix(1, p);
    for (std::size_t j = 0; j < p; ++j) {
      two(0, j) = m(0, j);
      two(1, j) = m(1, j);
      mix(0, j) = w * m(0, j) + (1 - w) * m(1, j);
    }
    const auto t2 = pca_transform(model, two);
    const auto tm = pca_transform(model, mix);
    for (std::size_t c = 0; c < model.k; ++c) CHECK(std::abs(tm(0, c) - (w * t2(0, c) + (1 - w) * t2(1, c))) <= 1e-9);

    const auto full = pca_fit(m, 1.0);
    CHECK(full.k == full.rank);
    const auto z = pca_transform(full, m);
    double err = 0, norm = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        double rec = full.mean[j];
        for (std::size_t c = 0; c < full.k; ++c) rec += z(i, c) * full.components(c, j);
        err += (rec - m(i, j)) * (rec - m(i, j));
        norm += m(i, j) * m(i, j);
      }
    CHECK(std::sqrt(err / norm) <= 1e-9);
  }
  Matrix m(5, 3, 1.0);
  m(0, 0) = 2;
  m(1, 1) = 3;
  const auto model = pca_fit(m, 0.95);
  CHECK(code_of([&] { pca_transform(model, Matrix(1, 2)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("channel pipeline does not change when transforming") {
  Rng rng(8);
  auto y = gaussian(rng, 60);
  std::vector<std::vector<double>> cols;
  for (int j = 0; j < 8; ++j) {
    auto c = gaussian(rng, 60);
    for (std::size_t i = 0; i < 60; ++i) c[i] += (j % 2 ? 1.0 : 0.0) * y[i];
    cols.push_back(c);
  }
  const auto m = make_matrix(cols);
  const auto pipe = ChannelPipeline::fit(Channel::Eye, m, y, {});
  const auto snapshot = pipe.to_json();
  const auto out = pipe.transform(m);
  CHECK(out.cols() == pipe.output_dim());
  CHECK(out.row_ids == m.row_ids);
  CHECK(pipe.to_json() == snapshot);
  const auto back = ChannelPipeline::from_json(snapshot);
  CHECK(back.transform(m) == out);
}

TEST_CASE("fuse concatenates in channel order") {
  Rng rng(9);
  auto mk = [&](std::size_t k) {
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < k; ++j) cols.push_back(gaussian(rng, 5));
    return make_matrix(cols, "pc");
  };
  std::vector<std::pair<Channel, FeatureMatrix>> parts{{Channel::Mouse, mk(4)}, {Channel::Video, mk(2)}, {Channel::Eye, mk(3)}};
  const auto fused = fuse(parts);
  CHECK(fused.cols() == 9);
  CHECK(fused.columns.front() == "video.pc0");
  CHECK(fused.columns.back() == "mouse.pc3");
  const auto spans = channel_spans(fused);
  REQUIRE(spans.size() == 3);
  CHECK(spans[1].name == "eye");
  CHECK(spans[1].end - spans[1].begin == 3);

  const auto single = mk(2);
  const auto f1 = fuse({{Channel::Eye, single}});
  CHECK(f1.values == single.values);

  auto other = mk(2);
  other.row_ids[0] = "zz";
  CHECK(code_of([&] { fuse({{Channel::Eye, single}, {Channel::Mouse, other}}); }) == ErrorCode::RowMismatch);
}

TEST_CASE("cross-channel correlation") {
  Rng rng(10);
  auto block = [&](std::size_t n, std::size_t k) {
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < k; ++j) cols.push_back(gaussian(rng, n));
    return make_matrix(cols, "pc");
  };
  const auto a = block(200, 4);
  const auto b = block(200, 5);
  auto fused = fuse({{Channel::Video, a}, {Channel::Eye, b}});
  auto spans = channel_spans(fused);
  const auto c = cross_channel_correlation(fused, spans);
  REQUIRE(c.pairs.size() == 1);
  CHECK(c.pairs[0].mean_abs_r < 0.15);
  for (std::size_t i = 0; i < c.columns.size(); ++i) CHECK(c.r(i, i) == doctest::Approx(1.0));

  const auto dup = fuse({{Channel::Video, a}, {Channel::Eye, a}});
  const auto cd = cross_channel_correlation(dup, channel_spans(dup));
  REQUIRE(cd.pairs[0].matched_mean_abs_r.has_value());
  CHECK(*cd.pairs[0].matched_mean_abs_r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cd.pairs[0].max_abs_r == doctest::Approx(1.0).epsilon(1e-12));

  const auto one = block(200, 1);
  const auto d1 = fuse({{Channel::Video, one}, {Channel::Mouse, one}});
  CHECK(cross_channel_correlation(d1, channel_spans(d1)).pairs[0].mean_abs_r == doctest::Approx(1.0).epsilon(1e-12));

  const auto tiny = fuse({{Channel::Video, block(2, 1)}, {Channel::Eye, block(2, 1)}});
  CHECK(code_of([&] { cross_channel_correlation(tiny, channel_spans(tiny)); }) == ErrorCode::TooFewRows);
  CHECK(correlation_to_csv(c).rfind("column,", 0) == 0);
}
