#include "fuselearn/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "fuselearn/error.hpp"

namespace fuselearn {

using nlohmann::json;

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::DimensionMismatch, "pearson_r needs equal, non-empty inputs");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) throw Error(ErrorCode::TooFewRows, "correlation test needs at least 3 rows");
  const double ar = std::abs(r);
  if (ar >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = ar * std::sqrt(df / (1.0 - r * r));
  boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
}

bool is_constant_column(std::span<const double> column) {
  if (column.size() < 2) return true;
  const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
  if (*lo == *hi) return true;
  const double scale = std::max(std::abs(*lo), std::abs(*hi));
  return sample_sd(column, mean_of(column)) <= 1e-10 * scale;
}

std::vector<std::string> FilterMask::kept_names() const {
  std::vector<std::string> out;
  for (auto j : kept) out.push_back(columns[j]);
  return out;
}

FilterMask hypothesis_filter(const FeatureMatrix& m, std::span<const double> labels, double alpha,
                             Channel channel) {
  if (m.rows() != labels.size())
    throw Error(ErrorCode::DimensionMismatch, "label count does not match matrix rows");
  if (m.rows() < 3) throw Error(ErrorCode::TooFewRows, "hypothesis filter needs at least 3 rows");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
  if (is_constant_column(labels)) throw Error(ErrorCode::DegenerateMatrix, "labels are constant");

  FilterMask mask;
  mask.channel = channel;
  mask.alpha = alpha;
  mask.columns = m.columns;
  mask.p_values.assign(m.cols(), 1.0);
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    const auto col = m.values.column(j);
    if (is_constant_column(col)) continue;
    const double p = correlation_p_value(pearson_r(col, labels), m.rows());
    mask.p_values[j] = p;
    if (!best || p < mask.p_values[*best]) best = j;
    if (p <= alpha) mask.kept.push_back(j);
  }
  if (mask.kept.empty()) {
    if (!best) throw Error(ErrorCode::DegenerateMatrix, "every column is constant");
    mask.kept.push_back(*best);
    mask.fallback = true;
  }
  return mask;
}

Scaler scaler_fit(const Matrix& m) {
  if (m.rows() < 2) throw Error(ErrorCode::TooFewRows, "scaler needs at least 2 rows");
  Scaler s;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    const auto col = m.column(j);
    if (is_constant_column(col))
      throw Error(ErrorCode::ZeroVarianceColumn, "column " + std::to_string(j) + " has zero variance");
    const double mu = mean_of(col);
    s.mean.push_back(mu);
    s.sd.push_back(sample_sd(col, mu));
  }
  return s;
}

Matrix scaler_apply(const Scaler& s, const Matrix& m) {
  if (m.cols() != s.mean.size()) throw Error(ErrorCode::DimensionMismatch, "scaler width mismatch");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = (m(i, j) - s.mean[j]) / s.sd[j];
  return out;
}

double PcaModel::retained_share() const {
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += explained[i];
  return s;
}

PcaModel pca_fit(const Matrix& m, double retention) {
  if (!(retention > 0.0 && retention <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "retention must lie in (0,1]");
  if (m.rows() < 2) throw Error(ErrorCode::TooFewRows, "PCA needs at least 2 rows");
  const auto n = static_cast<Eigen::Index>(m.rows());
  const auto p = static_cast<Eigen::Index>(m.cols());
  if (p == 0) throw Error(ErrorCode::DegenerateMatrix, "PCA on a matrix with no columns");

  Eigen::MatrixXd x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      m.data().data(), n, p);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) throw Error(ErrorCode::DegenerateMatrix, "matrix has rank 0");
  const double tol = sv(0) * static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon();
  std::size_t rank = 0;
  while (rank < static_cast<std::size_t>(sv.size()) && sv(static_cast<Eigen::Index>(rank)) > tol) ++rank;

  PcaModel model;
  model.retention = retention;
  model.rank = rank;
  model.mean.assign(mu.data(), mu.data() + p);
  double total = 0.0;
  for (std::size_t i = 0; i < rank; ++i) total += sv(static_cast<Eigen::Index>(i)) * sv(static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < rank; ++i) {
    const double s = sv(static_cast<Eigen::Index>(i));
    model.explained.push_back(s * s / total);
  }
  double cumulative = 0.0;
  std::size_t k = 0;
  while (k < rank) {
    cumulative += model.explained[k];
    ++k;
    if (cumulative >= retention) break;
  }
  model.k = k;

  const Eigen::MatrixXd& v = svd.matrixV();
  model.components = Matrix(k, static_cast<std::size_t>(p));
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < p; ++j)
      if (std::abs(v(j, static_cast<Eigen::Index>(c))) > std::abs(v(arg, static_cast<Eigen::Index>(c)))) arg = j;
    const double sign = v(arg, static_cast<Eigen::Index>(c)) < 0.0 ? -1.0 : 1.0;
    for (Eigen::Index j = 0; j < p; ++j)
      model.components(c, static_cast<std::size_t>(j)) = sign * v(j, static_cast<Eigen::Index>(c));
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& m) {
  const std::size_t p = model.mean.size();
  if (m.cols() != p)
    throw Error(ErrorCode::DimensionMismatch,
                "PCA expects " + std::to_string(p) + " columns, got " + std::to_string(m.cols()));
  Matrix out(m.rows(), model.k);
  std::vector<double> centered(p);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < p; ++j) centered[j] = m(i, j) - model.mean[j];
    for (std::size_t c = 0; c < model.k; ++c) {
      double acc = 0.0;
      auto comp = model.components.row(c);
      for (std::size_t j = 0; j < p; ++j) acc += comp[j] * centered[j];
      out(i, c) = acc;
    }
  }
  return out;
}

ChannelPipeline ChannelPipeline::fit(Channel channel, const FeatureMatrix& train, std::span<const double> labels,
                                     const PipelineOptions& options, const FitObserver& observer) {
  ChannelPipeline pl;
  pl.channel_ = channel;
  if (observer) observer("filter", train.row_ids);
  pl.filter_ = hypothesis_filter(train, labels, options.alpha, channel);
  const Matrix kept = train.values.select_cols(pl.filter_.kept);
  if (observer) observer("scaler", train.row_ids);
  pl.scaler_ = scaler_fit(kept);
  if (observer) observer("pca", train.row_ids);
  pl.pca_ = pca_fit(scaler_apply(pl.scaler_, kept), options.retention);
  return pl;
}

FeatureMatrix ChannelPipeline::transform(const FeatureMatrix& m) const {
  std::vector<std::size_t> idx;
  idx.reserve(filter_.kept.size());
  for (auto j : filter_.kept) {
    const auto& name = filter_.columns[j];
    auto it = std::find(m.columns.begin(), m.columns.end(), name);
    if (it == m.columns.end())
      throw Error(ErrorCode::DimensionMismatch, "input lacks fitted column '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - m.columns.begin()));
  }
  FeatureMatrix out;
  out.row_ids = m.row_ids;
  for (std::size_t c = 0; c < pca_.k; ++c) out.columns.push_back("pc" + std::to_string(c + 1));
  out.values = pca_transform(pca_, scaler_apply(scaler_, m.values.select_cols(idx)));
  return out;
}

std::string ChannelPipeline::to_json() const {
  json doc;
  doc["format"] = "fuselearn-channel-pipeline";
  doc["version"] = 1;
  doc["channel"] = channel_name(channel_);
  doc["filter"] = {{"alpha", filter_.alpha},
                   {"columns", filter_.columns},
                   {"p_values", filter_.p_values},
                   {"kept", filter_.kept},
                   {"fallback", filter_.fallback}};
  doc["scaler"] = {{"mean", scaler_.mean}, {"sd", scaler_.sd}};
  json comps = json::array();
  for (std::size_t c = 0; c < pca_.k; ++c) {
    auto row = pca_.components.row(c);
    comps.push_back(std::vector<double>(row.begin(), row.end()));
  }
  doc["pca"] = {{"mean", pca_.mean},   {"components", comps}, {"explained", pca_.explained},
                {"retention", pca_.retention}, {"k", pca_.k},  {"rank", pca_.rank}};
  return doc.dump(2) + "\n";
}

ChannelPipeline ChannelPipeline::from_json(std::string_view text) {
  try {
    const auto doc = json::parse(text);
    if (doc.at("format") != "fuselearn-channel-pipeline" || doc.at("version") != 1)
      throw Error(ErrorCode::SchemaViolation, "not a version-1 channel pipeline document");
    ChannelPipeline pl;
    pl.channel_ = parse_channel(doc.at("channel").get<std::string>());
    const auto& f = doc.at("filter");
    pl.filter_.channel = pl.channel_;
    pl.filter_.alpha = f.at("alpha").get<double>();
    pl.filter_.columns = f.at("columns").get<std::vector<std::string>>();
    pl.filter_.p_values = f.at("p_values").get<std::vector<double>>();
    pl.filter_.kept = f.at("kept").get<std::vector<std::size_t>>();
    pl.filter_.fallback = f.at("fallback").get<bool>();
    pl.scaler_.mean = doc.at("scaler").at("mean").get<std::vector<double>>();
    pl.scaler_.sd = doc.at("scaler").at("sd").get<std::vector<double>>();
    const auto& pj = doc.at("pca");
    pl.pca_.mean = pj.at("mean").get<std::vector<double>>();
    pl.pca_.explained = pj.at("explained").get<std::vector<double>>();
    pl.pca_.retention = pj.at("retention").get<double>();
    pl.pca_.k = pj.at("k").get<std::size_t>();
    pl.pca_.rank = pj.at("rank").get<std::size_t>();
    const auto rows = pj.at("components").get<std::vector<std::vector<double>>>();
    if (rows.size() != pl.pca_.k) throw Error(ErrorCode::SchemaViolation, "component count != k");
    pl.pca_.components = Matrix(rows.size(), pl.pca_.mean.size());
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (rows[c].size() != pl.pca_.mean.size()) throw Error(ErrorCode::SchemaViolation, "component width");
      std::copy(rows[c].begin(), rows[c].end(), pl.pca_.components.row(c).begin());
    }
    for (auto j : pl.filter_.kept)
      if (j >= pl.filter_.columns.size()) throw Error(ErrorCode::SchemaViolation, "kept index out of range");
    if (pl.scaler_.mean.size() != pl.filter_.kept.size() || pl.scaler_.sd.size() != pl.filter_.kept.size() ||
        pl.pca_.mean.size() != pl.filter_.kept.size())
      throw Error(ErrorCode::SchemaViolation, "pipeline stage widths disagree");
    return pl;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("channel pipeline JSON: ") + e.what());
  }
}

FeatureMatrix fuse(std::vector<std::pair<Channel, FeatureMatrix>> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to fuse");
  std::stable_sort(parts.begin(), parts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < parts.size(); ++i)
    if (parts[i].first == parts[i - 1].first)
      throw Error(ErrorCode::InvalidArgument, std::string("channel fused twice: ") + channel_name(parts[i].first));
  const auto& ids = parts.front().second.row_ids;
  std::size_t width = 0;
  for (const auto& [ch, m] : parts) {
    if (m.row_ids != ids)
      throw Error(ErrorCode::RowMismatch, std::string("row ids of channel ") + channel_name(ch) + " differ");
    width += m.cols();
  }
  FeatureMatrix out;
  out.row_ids = ids;
  out.values = Matrix(ids.size(), width);
  std::size_t offset = 0;
  for (const auto& [ch, m] : parts) {
    for (const auto& c : m.columns) out.columns.push_back(std::string(channel_name(ch)) + "." + c);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) out.values(i, offset + j) = m.values(i, j);
    offset += m.cols();
  }
  return out;
}

std::vector<ChannelSpan> channel_spans(const FeatureMatrix& fused) {
  std::vector<ChannelSpan> spans;
  for (std::size_t j = 0; j < fused.columns.size(); ++j) {
    const auto& c = fused.columns[j];
    const std::string prefix = c.substr(0, c.find('.'));
    if (spans.empty() || spans.back().name != prefix) spans.push_back({prefix, j, j + 1});
    else spans.back().end = j + 1;
  }
  return spans;
}

CorrelationSummary cross_channel_correlation(const FeatureMatrix& fused, std::span<const ChannelSpan> spans) {
  if (spans.size() < 2) throw Error(ErrorCode::InvalidArgument, "correlation analysis needs two channels");
  if (fused.rows() < 3) throw Error(ErrorCode::TooFewRows, "correlation analysis needs at least 3 rows");
  for (const auto& s : spans)
    if (s.begin >= s.end || s.end > fused.cols())
      throw Error(ErrorCode::InvalidArgument, "invalid channel span '" + s.name + "'");
  const std::size_t p = fused.cols();
  CorrelationSummary out;
  out.columns = fused.columns;
  out.r = Matrix(p, p);
  std::vector<std::vector<double>> cols(p);
  for (std::size_t j = 0; j < p; ++j) cols[j] = fused.values.column(j);
  for (std::size_t a = 0; a < p; ++a) {
    out.r(a, a) = 1.0;
    for (std::size_t b = a + 1; b < p; ++b) {
      const double r = pearson_r(cols[a], cols[b]);
      out.r(a, b) = r;
      out.r(b, a) = r;
    }
  }
  for (std::size_t s = 0; s < spans.size(); ++s) {
    for (std::size_t t = s + 1; t < spans.size(); ++t) {
      const auto& A = spans[s];
      const auto& B = spans[t];
      ChannelPairCorrelation pc;
      pc.a = A.name;
      pc.b = B.name;
      double sum = 0.0;
      for (std::size_t i = A.begin; i < A.end; ++i)
        for (std::size_t j = B.begin; j < B.end; ++j) {
          const double v = std::abs(out.r(i, j));
          sum += v;
          pc.max_abs_r = std::max(pc.max_abs_r, v);
        }
      pc.mean_abs_r = sum / static_cast<double>((A.end - A.begin) * (B.end - B.begin));
      if (A.end - A.begin == B.end - B.begin) {
        double m = 0.0;
        for (std::size_t i = 0; i < A.end - A.begin; ++i) m += std::abs(out.r(A.begin + i, B.begin + i));
        pc.matched_mean_abs_r = m / static_cast<double>(A.end - A.begin);
      }
      out.pairs.push_back(pc);
    }
  }
  return out;
}

std::string correlation_to_csv(const CorrelationSummary& c) {
  std::string out = "column";
  for (const auto& name : c.columns) out += "," + name;
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < c.columns.size(); ++i) {
    out += c.columns[i];
    for (std::size_t j = 0; j < c.columns.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.6f", c.r(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string correlation_pairs_json(const CorrelationSummary& c) {
  json pairs = json::array();
  for (const auto& p : c.pairs) {
    json j = {{"a", p.a}, {"b", p.b}, {"mean_abs_r", p.mean_abs_r}, {"max_abs_r", p.max_abs_r}};
    if (p.matched_mean_abs_r) j["matched_mean_abs_r"] = *p.matched_mean_abs_r;
    pairs.push_back(std::move(j));
  }
  return json{{"pairs", pairs}}.dump(2) + "\n";
}

}  // namespace fuselearn
