#pragma once

#include <climits>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fuselearn/fusion.hpp"
#include "fuselearn/matrix.hpp"

namespace fuselearn {

inline constexpr int kUnlimitedDepth = INT_MAX;

struct CartParams {
  int max_depth = 8;
  std::size_t min_leaf = 2;
  std::size_t min_split = 4;
  double min_impurity_decrease = 0.0;  // absolute SSE decrease a split must exceed

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean of training targets reaching the node
  std::size_t n_samples = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Nodes are stored flat; nodes[0] is the root.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  std::size_t depth() const;
  std::size_t leaf_count() const;
  // Smallest input width the tree can route.
  std::size_t required_width() const;
  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

// Greedy SSE-reduction CART. Thresholds are midpoints between consecutive
// distinct values; x[f] <= threshold goes left. Ties go to the lowest
// feature index, then the lowest threshold.
RegressionTree cart_fit(const Matrix& x, std::span<const double> y, const CartParams& params = {});
double tree_predict(const RegressionTree& tree, std::span<const double> row);

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t feature_subsample = 0;  // 0: max(1, floor(p/3))
  bool bootstrap = true;
  CartParams tree{};
  unsigned threads = 1;
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  std::vector<std::uint64_t> tree_seeds;
  std::size_t feature_subsample = 1;
  bool bootstrap = true;
  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

ForestModel forest_fit(const Matrix& x, std::span<const double> y, const ForestParams& params,
                       std::uint64_t seed);
double forest_predict(const ForestModel& model, std::span<const double> row);

struct GbdtParams {
  std::size_t n_trees = 200;
  double learning_rate = 0.1;
  CartParams tree{3, 2, 4, 0.0};
};

struct GbdtModel {
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  std::vector<double> train_mse;  // train_mse[t] after t trees; train_mse[0] is the base model
  friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

// Squared-loss boosting; `seed` is accepted for interface symmetry, the fit
// itself is deterministic.
GbdtModel gbdt_fit(const Matrix& x, std::span<const double> y, const GbdtParams& params,
                   std::uint64_t seed = 0);
double gbdt_predict(const GbdtModel& model, std::span<const double> row);

double r2_score(std::span<const double> truth, std::span<const double> pred);

enum class ModelKind { Cart, Forest, Gbdt };
const char* model_name(ModelKind k) noexcept;         // "CART", "Random Forest", "GBDT"
const char* model_short_name(ModelKind k) noexcept;   // "cart", "rf", "gbdt"
ModelKind parse_model_kind(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::Gbdt;
  CartParams cart{};
  ForestParams forest{};
  GbdtParams gbdt{};
};

using Model = std::variant<RegressionTree, ForestModel, GbdtModel>;

Model fit_model(const ModelSpec& spec, const Matrix& x, std::span<const double> y, std::uint64_t seed);
double predict(const Model& model, std::span<const double> row);
std::vector<double> predict(const Model& model, const Matrix& x);

inline constexpr int kModelFormatVersion = 1;
std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view text);

// --- Cross-validation ------------------------------------------------------

struct FoldAssignment {
  std::vector<std::size_t> order;                 // shuffled row order
  std::vector<std::size_t> fold_of_row;           // fold index per row
  std::vector<std::vector<std::size_t>> test_rows;  // ascending row indices per fold
};

// Fisher-Yates shuffle driven by Rng(derive_seed(seed, 0)); folds are
// contiguous runs of the shuffled order, the first n % k one row longer.
FoldAssignment make_folds(std::size_t n, std::size_t k, std::uint64_t seed);

// Observer for CV hygiene checks; called from worker threads, so it must be
// thread-safe. Stages: filter, scaler, pca, model.
using CvObserver =
    std::function<void(std::size_t fold, std::string_view stage, std::span<const std::string> row_ids)>;

struct CvOptions {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  PipelineOptions pipeline{};
  unsigned threads = 1;
  CvObserver observer;
};

struct CvResult {
  std::vector<double> fold_r2;
  double mean_r2 = 0.0;
  FoldAssignment folds;
};

// For each fold, fits one ChannelPipeline per channel and the model on the
// other k-1 folds only, fuses, and scores R^2 on the held-out fold.
CvResult kfold_cv(std::span<const std::pair<Channel, FeatureMatrix>> channels, std::span<const double> labels,
                  const ModelSpec& spec, const CvOptions& options);

}  // namespace fuselearn
