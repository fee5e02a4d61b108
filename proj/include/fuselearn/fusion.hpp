#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fuselearn/ingest.hpp"
#include "fuselearn/matrix.hpp"

namespace fuselearn {

// Pearson correlation; 0 when either side has zero variance.
double pearson_r(std::span<const double> a, std::span<const double> b);
// Two-sided p-value of the t-test on a correlation r with n samples (df = n-2).
double correlation_p_value(double r, std::size_t n);
// Zero range, or a standard deviation negligible against the magnitude.
bool is_constant_column(std::span<const double> column);

struct FilterMask {
  Channel channel = Channel::Eye;
  double alpha = 0.05;
  std::vector<std::string> columns;  // all input columns
  std::vector<double> p_values;      // per input column; 1 for constant columns
  std::vector<std::size_t> kept;     // indices into columns, ascending
  bool fallback = false;             // nothing passed alpha; kept the smallest p

  std::vector<std::string> kept_names() const;
};

FilterMask hypothesis_filter(const FeatureMatrix& matrix, std::span<const double> labels, double alpha,
                             Channel channel = Channel::Eye);

struct Scaler {
  std::vector<double> mean;
  std::vector<double> sd;  // n-1 denominator
};

Scaler scaler_fit(const Matrix& m);
Matrix scaler_apply(const Scaler& s, const Matrix& m);

struct PcaModel {
  std::vector<double> mean;          // per input column, from the fit data
  Matrix components;                 // k x p, orthonormal rows
  std::vector<double> explained;     // share of every nonzero singular direction
  double retention = 0.95;
  std::size_t k = 0;
  std::size_t rank = 0;

  double retained_share() const;
};

// SVD of the centered matrix. k is the smallest prefix whose cumulative
// share reaches `retention` (capped at the numerical rank). Each component's
// largest-magnitude entry is made positive.
PcaModel pca_fit(const Matrix& m, double retention);
Matrix pca_transform(const PcaModel& model, const Matrix& m);

// Observer for fitting stages; receives the row ids each fit saw.
using FitObserver = std::function<void(std::string_view stage, std::span<const std::string> row_ids)>;

struct PipelineOptions {
  double alpha = 0.05;
  double retention = 0.95;
};

// Filter -> scale -> PCA for one channel. Immutable once fitted.
class ChannelPipeline {
 public:
  static ChannelPipeline fit(Channel channel, const FeatureMatrix& train, std::span<const double> labels,
                             const PipelineOptions& options, const FitObserver& observer = {});

  // Output columns are pc1..pck; row ids are carried through.
  FeatureMatrix transform(const FeatureMatrix& m) const;

  Channel channel() const noexcept { return channel_; }
  const FilterMask& filter() const noexcept { return filter_; }
  const Scaler& scaler() const noexcept { return scaler_; }
  const PcaModel& pca() const noexcept { return pca_; }
  std::size_t output_dim() const noexcept { return pca_.k; }

  std::string to_json() const;
  static ChannelPipeline from_json(std::string_view text);

 private:
  Channel channel_ = Channel::Eye;
  FilterMask filter_;
  Scaler scaler_;
  PcaModel pca_;
};

// Column-wise concatenation in (video, eye, mouse) order; columns are
// prefixed "<channel>.".
FeatureMatrix fuse(std::vector<std::pair<Channel, FeatureMatrix>> parts);

struct ChannelSpan {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

// Spans of consecutive columns sharing the prefix before the first '.'.
std::vector<ChannelSpan> channel_spans(const FeatureMatrix& fused);

struct ChannelPairCorrelation {
  std::string a;
  std::string b;
  double mean_abs_r = 0.0;  // over the whole cross-channel block
  double max_abs_r = 0.0;
  // Mean |r| between column i of a and column i of b; only when widths match.
  std::optional<double> matched_mean_abs_r;
};

struct CorrelationSummary {
  std::vector<std::string> columns;
  Matrix r;
  std::vector<ChannelPairCorrelation> pairs;
};

CorrelationSummary cross_channel_correlation(const FeatureMatrix& fused, std::span<const ChannelSpan> spans);
std::string correlation_to_csv(const CorrelationSummary& c);
std::string correlation_pairs_json(const CorrelationSummary& c);

}  // namespace fuselearn
