#include "fuselearn/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <json.hpp>

#include "fuselearn/error.hpp"
#include "fuselearn/parallel.hpp"
#include "fuselearn/random.hpp"

namespace fuselearn {

using nlohmann::json;

void CartParams::validate() const {
  if (max_depth < 1) throw Error(ErrorCode::InvalidArgument, "max_depth must be >= 1");
  if (min_leaf < 1) throw Error(ErrorCode::InvalidArgument, "min_leaf must be >= 1");
  if (min_split < 2 * min_leaf) throw Error(ErrorCode::InvalidArgument, "min_split must be >= 2*min_leaf");
  if (!(min_impurity_decrease >= 0.0)) throw Error(ErrorCode::InvalidArgument, "min_impurity_decrease < 0");
}

std::size_t RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (!n.is_leaf()) {
      stack.push_back({n.left, d + 1});
      stack.push_back({n.right, d + 1});
    }
  }
  return best;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
}

std::size_t RegressionTree::required_width() const {
  std::size_t w = 0;
  for (const auto& n : nodes)
    if (!n.is_leaf()) w = std::max(w, static_cast<std::size_t>(n.feature) + 1);
  return w;
}

namespace {

void check_training_set(const Matrix& x, std::span<const double> y) {
  if (y.empty() || x.rows() == 0) throw Error(ErrorCode::EmptyTrainingSet, "no training rows");
  if (x.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "X rows != |y|");
  for (double v : y)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteTarget, "training target is not finite");
}

// Row indices of each column sorted by (value, row). Shared by every tree
// fitted on the same matrix.
struct ColumnOrder {
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<std::vector<double>> values;  // x values in the same order

  explicit ColumnOrder(const Matrix& x) : rows(x.cols()), values(x.cols()) {
    for (std::size_t f = 0; f < x.cols(); ++f) {
      auto& r = rows[f];
      r.resize(x.rows());
      std::iota(r.begin(), r.end(), 0u);
      std::sort(r.begin(), r.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double xa = x(a, f), xb = x(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      values[f].reserve(r.size());
      for (auto i : r) values[f].push_back(x(i, f));
    }
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const ColumnOrder& order, std::span<const double> y, const CartParams& params,
              std::size_t mtry, Rng* rng)
      : x_(x), order_(order), y_(y), params_(params), mtry_(std::min(mtry, x.cols())), rng_(rng),
        count_(x.rows(), 0) {}

  RegressionTree build(std::vector<std::size_t> idx) {
    tree_.nodes.clear();
    grow(idx, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int grow(std::vector<std::size_t>& idx, int depth) {
    const std::size_t n = idx.size();
    double sum = 0.0, lo = y_[idx[0]], hi = y_[idx[0]];
    for (auto i : idx) {
      sum += y_[i];
      lo = std::min(lo, y_[i]);
      hi = std::max(hi, y_[i]);
    }
    const int self = static_cast<int>(tree_.nodes.size());
    TreeNode node;
    node.value = sum / static_cast<double>(n);
    node.n_samples = n;
    tree_.nodes.push_back(node);

    if (depth >= params_.max_depth || n < params_.min_split || n < 2 * params_.min_leaf || lo == hi) return self;
    const Split best = find_split(idx, node.value);
    if (best.feature < 0 || !(best.gain > params_.min_impurity_decrease)) return self;

    std::vector<std::size_t> left, right;
    for (auto i : idx) (x_(i, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& me = tree_.nodes[static_cast<std::size_t>(self)];
    me.feature = best.feature;
    me.threshold = best.threshold;
    me.left = l;
    me.right = r;
    return self;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> f(x_.cols());
    std::iota(f.begin(), f.end(), 0);
    if (mtry_ >= f.size() || rng_ == nullptr) return f;
    for (std::size_t i = 0; i < mtry_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_->below(f.size() - i));
      std::swap(f[i], f[j]);
    }
    f.resize(mtry_);
    std::sort(f.begin(), f.end());
    return f;
  }

  // Fills xs with (x, centered y) of the node's rows in (x, row) order.
  // Large nodes walk the presorted column; small ones sort directly.
  void sorted_node(std::size_t f, const std::vector<std::size_t>& idx, double node_mean, bool scan,
                   std::vector<std::pair<double, double>>& xs) {
    xs.clear();
    if (scan) {
      const auto& rows = order_.rows[f];
      const auto& vals = order_.values[f];
      for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::uint32_t c = count_[rows[k]]; c > 0; --c) xs.emplace_back(vals[k], y_[rows[k]] - node_mean);
      return;
    }
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(idx.size());
    for (auto i : idx) keyed.emplace_back(x_(i, f), i);
    std::sort(keyed.begin(), keyed.end());
    for (const auto& [v, i] : keyed) xs.emplace_back(v, y_[i] - node_mean);
  }

  Split find_split(const std::vector<std::size_t>& idx, double node_mean) {
    const std::size_t n = idx.size();
    const double dn = static_cast<double>(n);
    Split best;
    const bool scan = x_.rows() <= 2 * n * static_cast<std::size_t>(std::log2(static_cast<double>(n)) + 1.0);
    if (scan)
      for (auto i : idx) ++count_[i];
    double total = 0.0;
    for (auto i : idx) total += y_[i] - node_mean;
    const double parent = total * total / dn;
    std::vector<std::pair<double, double>> xs;
    xs.reserve(n);
    for (auto f : candidate_features()) {
      sorted_node(f, idx, node_mean, scan, xs);
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left += xs[i].second;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nr < params_.min_leaf) break;
        if (nl < params_.min_leaf || xs[i].first == xs[i + 1].first) continue;
        const double right = total - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) - parent;
        // Equal partitions can differ by rounding; those count as ties.
        if (gain > best.gain + 1e-12 * best.gain) {
          double mid = xs[i].first + (xs[i + 1].first - xs[i].first) / 2.0;
          if (!(mid < xs[i + 1].first)) mid = xs[i].first;
          best = {static_cast<int>(f), mid, gain};
        }
      }
    }
    if (scan)
      for (auto i : idx) --count_[i];
    return best;
  }

  const Matrix& x_;
  const ColumnOrder& order_;
  std::span<const double> y_;
  CartParams params_;
  std::size_t mtry_;
  Rng* rng_;
  std::vector<std::uint32_t> count_;
  RegressionTree tree_;
};

RegressionTree fit_tree(const Matrix& x, const ColumnOrder& order, std::span<const double> y,
                        const CartParams& params) {
  std::vector<std::size_t> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  return TreeBuilder(x, order, y, params, x.cols(), nullptr).build(std::move(idx));
}

}  // namespace

RegressionTree cart_fit(const Matrix& x, std::span<const double> y, const CartParams& params) {
  params.validate();
  check_training_set(x, y);
  return fit_tree(x, ColumnOrder(x), y, params);
}

double tree_predict(const RegressionTree& tree, std::span<const double> row) {
  if (tree.nodes.empty()) throw Error(ErrorCode::InvalidArgument, "empty tree");
  std::size_t i = 0;
  while (!tree.nodes[i].is_leaf()) {
    const auto& n = tree.nodes[i];
    const auto f = static_cast<std::size_t>(n.feature);
    if (f >= row.size())
      throw Error(ErrorCode::DimensionMismatch,
                  "row has " + std::to_string(row.size()) + " features, tree uses index " + std::to_string(f));
    i = static_cast<std::size_t>(row[f] <= n.threshold ? n.left : n.right);
  }
  return tree.nodes[i].value;
}

ForestModel forest_fit(const Matrix& x, std::span<const double> y, const ForestParams& params, std::uint64_t seed) {
  params.tree.validate();
  check_training_set(x, y);
  if (y.size() < 2) throw Error(ErrorCode::EmptyTrainingSet, "forest needs at least 2 rows");
  if (params.n_trees == 0) throw Error(ErrorCode::InvalidArgument, "forest needs at least one tree");
  ForestModel model;
  model.bootstrap = params.bootstrap;
  model.feature_subsample =
      params.feature_subsample > 0 ? std::min(params.feature_subsample, x.cols()) : std::max<std::size_t>(1, x.cols() / 3);
  model.trees.resize(params.n_trees);
  model.tree_seeds.resize(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) model.tree_seeds[t] = derive_seed(seed, t);

  const ColumnOrder order(x);
  parallel_for(params.n_trees, params.threads, [&](std::size_t t) {
    Rng rng(model.tree_seeds[t]);
    std::vector<std::size_t> idx(y.size());
    if (params.bootstrap) {
      for (auto& i : idx) i = static_cast<std::size_t>(rng.below(y.size()));
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    model.trees[t] = TreeBuilder(x, order, y, params.tree, model.feature_subsample, &rng).build(std::move(idx));
  });
  return model;
}

double forest_predict(const ForestModel& model, std::span<const double> row) {
  double sum = 0.0;
  for (const auto& t : model.trees) sum += tree_predict(t, row);
  return sum / static_cast<double>(model.trees.size());
}

GbdtModel gbdt_fit(const Matrix& x, std::span<const double> y, const GbdtParams& params, std::uint64_t) {
  params.tree.validate();
  check_training_set(x, y);
  if (y.size() < 2) throw Error(ErrorCode::EmptyTrainingSet, "GBDT needs at least 2 rows");
  if (!(params.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
  const std::size_t n = y.size();
  GbdtModel model;
  model.learning_rate = params.learning_rate;
  model.base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> fitted(n, model.base), residual(n);
  auto mse = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (y[i] - fitted[i]) * (y[i] - fitted[i]);
    return s / static_cast<double>(n);
  };
  model.train_mse.push_back(mse());
  const ColumnOrder order(x);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - fitted[i];
    model.trees.push_back(fit_tree(x, order, residual, params.tree));
    const auto& tree = model.trees.back();
    for (std::size_t i = 0; i < n; ++i) fitted[i] += model.learning_rate * tree_predict(tree, x.row(i));
    model.train_mse.push_back(mse());
  }
  return model;
}

double gbdt_predict(const GbdtModel& model, std::span<const double> row) {
  double sum = 0.0;
  for (const auto& t : model.trees) sum += tree_predict(t, row);
  return model.base + model.learning_rate * sum;
}

double r2_score(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::DimensionMismatch, "R^2 inputs differ in length");
  if (truth.size() < 2) throw Error(ErrorCode::TooFewRows, "R^2 needs at least 2 values");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw Error(ErrorCode::ConstantTruth, "R^2 undefined for constant truth");
  return 1.0 - ss_res / ss_tot;
}

const char* model_name(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::Cart: return "CART";
    case ModelKind::Forest: return "Random Forest";
    case ModelKind::Gbdt: return "GBDT";
  }
  return "?";
}

const char* model_short_name(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::Cart: return "cart";
    case ModelKind::Forest: return "rf";
    case ModelKind::Gbdt: return "gbdt";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "cart" || s == "CART") return ModelKind::Cart;
  if (s == "rf" || s == "forest" || s == "random_forest" || s == "Random Forest") return ModelKind::Forest;
  if (s == "gbdt" || s == "GBDT") return ModelKind::Gbdt;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(s) + "'");
}

Model fit_model(const ModelSpec& spec, const Matrix& x, std::span<const double> y, std::uint64_t seed) {
  switch (spec.kind) {
    case ModelKind::Cart: return cart_fit(x, y, spec.cart);
    case ModelKind::Forest: return forest_fit(x, y, spec.forest, seed);
    case ModelKind::Gbdt: return gbdt_fit(x, y, spec.gbdt, seed);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model kind");
}

double predict(const Model& model, std::span<const double> row) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RegressionTree>) return tree_predict(m, row);
        else if constexpr (std::is_same_v<T, ForestModel>) return forest_predict(m, row);
        else return gbdt_predict(m, row);
      },
      model);
}

std::vector<double> predict(const Model& model, const Matrix& x) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(model, x.row(i));
  return out;
}

// --- Serialization -----------------------------------------------------------

namespace {

json tree_to_json(const RegressionTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.n_samples});
  return nodes;
}

RegressionTree tree_from_json(const json& j) {
  RegressionTree t;
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::SchemaViolation, "tree must be a non-empty node array");
  for (const auto& nj : j) {
    if (!nj.is_array() || nj.size() != 6) throw Error(ErrorCode::SchemaViolation, "tree node must have 6 fields");
    TreeNode n;
    n.feature = nj[0].get<int>();
    n.threshold = nj[1].get<double>();
    n.left = nj[2].get<int>();
    n.right = nj[3].get<int>();
    n.value = nj[4].get<double>();
    n.n_samples = nj[5].get<std::size_t>();
    t.nodes.push_back(n);
  }
  const int count = static_cast<int>(t.nodes.size());
  for (const auto& n : t.nodes)
    if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
      throw Error(ErrorCode::SchemaViolation, "tree child index out of range");
  return t;
}

json trees_to_json(const std::vector<RegressionTree>& trees) {
  json arr = json::array();
  for (const auto& t : trees) arr.push_back(tree_to_json(t));
  return arr;
}

std::vector<RegressionTree> trees_from_json(const json& j) {
  std::vector<RegressionTree> out;
  for (const auto& t : j) out.push_back(tree_from_json(t));
  return out;
}

}  // namespace

std::string serialize_model(const Model& model) {
  json doc;
  doc["format"] = "fuselearn-model";
  doc["version"] = kModelFormatVersion;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RegressionTree>) {
          doc["kind"] = "cart";
          doc["tree"] = tree_to_json(m);
        } else if constexpr (std::is_same_v<T, ForestModel>) {
          doc["kind"] = "forest";
          doc["feature_subsample"] = m.feature_subsample;
          doc["bootstrap"] = m.bootstrap;
          doc["tree_seeds"] = m.tree_seeds;
          doc["trees"] = trees_to_json(m.trees);
        } else {
          doc["kind"] = "gbdt";
          doc["base"] = m.base;
          doc["learning_rate"] = m.learning_rate;
          doc["train_mse"] = m.train_mse;
          doc["trees"] = trees_to_json(m.trees);
        }
      },
      model);
  return doc.dump() + "\n";
}

Model deserialize_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("model JSON does not parse: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != "fuselearn-model")
      throw Error(ErrorCode::SchemaViolation, "not a fuselearn model document");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw Error(ErrorCode::SchemaViolation, "unsupported model version " + std::to_string(version) +
                                                  " (expected " + std::to_string(kModelFormatVersion) + ")");
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "cart") return tree_from_json(doc.at("tree"));
    if (kind == "forest") {
      ForestModel m;
      m.feature_subsample = doc.at("feature_subsample").get<std::size_t>();
      m.bootstrap = doc.at("bootstrap").get<bool>();
      m.tree_seeds = doc.at("tree_seeds").get<std::vector<std::uint64_t>>();
      m.trees = trees_from_json(doc.at("trees"));
      if (m.trees.empty() || m.trees.size() != m.tree_seeds.size())
        throw Error(ErrorCode::SchemaViolation, "forest tree/seed count mismatch");
      return m;
    }
    if (kind == "gbdt") {
      GbdtModel m;
      m.base = doc.at("base").get<double>();
      m.learning_rate = doc.at("learning_rate").get<double>();
      m.train_mse = doc.at("train_mse").get<std::vector<double>>();
      m.trees = trees_from_json(doc.at("trees"));
      return m;
    }
    throw Error(ErrorCode::SchemaViolation, "unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("model JSON: ") + e.what());
  }
}

// --- Cross-validation --------------------------------------------------------

FoldAssignment make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (n < k) throw Error(ErrorCode::TooFewRows, "need at least k rows for k-fold CV");
  FoldAssignment fa;
  fa.order.resize(n);
  std::iota(fa.order.begin(), fa.order.end(), 0);
  Rng rng(derive_seed(seed, 0));
  rng.shuffle(fa.order);
  fa.fold_of_row.assign(n, 0);
  fa.test_rows.assign(k, {});
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i, ++pos) {
      fa.fold_of_row[fa.order[pos]] = f;
      fa.test_rows[f].push_back(fa.order[pos]);
    }
    std::sort(fa.test_rows[f].begin(), fa.test_rows[f].end());
  }
  return fa;
}

CvResult kfold_cv(std::span<const std::pair<Channel, FeatureMatrix>> channels, std::span<const double> labels,
                  const ModelSpec& spec, const CvOptions& options) {
  if (channels.empty()) throw Error(ErrorCode::InvalidArgument, "no channels given to kfold_cv");
  const std::size_t n = labels.size();
  for (const auto& [ch, m] : channels) {
    if (m.rows() != n) throw Error(ErrorCode::RowMismatch, std::string(channel_name(ch)) + " rows != labels");
    if (m.row_ids != channels.front().second.row_ids)
      throw Error(ErrorCode::RowMismatch, "channel row ids disagree");
  }
  CvResult result;
  result.folds = make_folds(n, options.k, options.seed);
  result.fold_r2.assign(options.k, 0.0);

  parallel_for(options.k, options.threads, [&](std::size_t f) {
    const auto& test = result.folds.test_rows[f];
    std::vector<std::size_t> train;
    train.reserve(n - test.size());
    for (std::size_t i = 0; i < n; ++i)
      if (result.folds.fold_of_row[i] != f) train.push_back(i);
    std::vector<double> y_train, y_test;
    for (auto i : train) y_train.push_back(labels[i]);
    for (auto i : test) y_test.push_back(labels[i]);

    FitObserver stage_observer;
    if (options.observer)
      stage_observer = [&](std::string_view stage, std::span<const std::string> ids) { options.observer(f, stage, ids); };

    std::vector<std::pair<Channel, FeatureMatrix>> train_parts, test_parts;
    for (const auto& [ch, m] : channels) {
      const auto train_m = m.select_rows(train);
      const auto pipeline = ChannelPipeline::fit(ch, train_m, y_train, options.pipeline, stage_observer);
      train_parts.emplace_back(ch, pipeline.transform(train_m));
      test_parts.emplace_back(ch, pipeline.transform(m.select_rows(test)));
    }
    const auto fused_train = fuse(std::move(train_parts));
    const auto fused_test = fuse(std::move(test_parts));
    if (options.observer) options.observer(f, "model", fused_train.row_ids);
    const auto model = fit_model(spec, fused_train.values, y_train,
                                 derive_seed(options.seed, 0x6d6f64656cULL, f));
    result.fold_r2[f] = r2_score(y_test, predict(model, fused_test.values));
  });
  result.mean_r2 = std::accumulate(result.fold_r2.begin(), result.fold_r2.end(), 0.0) /
                   static_cast<double>(options.k);
  return result;
}

}  // namespace fuselearn
