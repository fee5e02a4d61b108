#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fuselearn/features.hpp"
#include "fuselearn/fusion.hpp"
#include "fuselearn/ingest.hpp"
#include "fuselearn/labeling.hpp"
#include "fuselearn/models.hpp"

namespace fuselearn {

// Treats 0 as "all hardware threads".
unsigned resolve_threads(unsigned requested) noexcept;

// "30s", "60000ms", "1m", "1.5m"; a bare number is seconds.
Millis parse_interval(std::string_view text);
// "gaze=30,mouse=20,frames=15"; channel aliases accepted, omitted channels keep their value.
void parse_rates(std::string_view text, FeatureConfig& config);

// --- featurize -------------------------------------------------------------

struct FeaturizeOptions {
  FeatureConfig features{};
  LabelWeights weights{};
  unsigned threads = 1;

  std::string to_json() const;
  // Missing keys keep their defaults.
  static FeaturizeOptions from_json(std::string_view text);
};

struct FeatureSet {
  std::array<AssembledMatrix, 3> channels;  // indexed by Channel
  std::vector<LusLabel> labels;             // aligned with the matrix rows
  std::size_t unknown_gaze_types = 0;
  std::string options_json;
};

FeatureSet featurize(const Session& session, std::span<const GazeEvent> gaze, std::span<const MouseEvent> mouse,
                     std::span<const FrameSample> frames, const FeaturizeOptions& options);
FeatureSet featurize_manifest(const std::filesystem::path& manifest, const FeaturizeOptions& options);

// <channel>.csv and <channel>.json per channel, labels.csv, featurize.json.
void write_feature_set(const FeatureSet& set, const std::filesystem::path& out_dir);

std::string labels_to_csv(std::span<const LusLabel> labels);

struct LoadedFeatures {
  std::vector<std::pair<Channel, FeatureMatrix>> channels;  // fusion order
  std::vector<std::string> unit_ids;
  std::vector<double> labels;
};

// Reads the channel CSVs present in `dir` and joins labels.csv by unit_id.
LoadedFeatures read_feature_dir(const std::filesystem::path& dir);

// --- evaluate --------------------------------------------------------------

using Combination = std::vector<Channel>;

// The seven rows of the comparison table: singles, pairs, triple.
std::vector<Combination> table_combinations();
std::string combination_name(std::span<const Channel> channels);  // "video+eye"
Combination parse_combination(std::string_view text);
// "all" or a comma list of '+'-joined combinations.
std::vector<Combination> parse_combinations(std::string_view text);
// "all" or a comma list of model names (cart, rf, gbdt).
std::vector<ModelKind> parse_models(std::string_view text);

struct EvaluateOptions {
  std::vector<Combination> combinations = table_combinations();
  std::vector<ModelKind> models{ModelKind::Cart, ModelKind::Forest, ModelKind::Gbdt};
  ModelSpec params{};  // kind is ignored
  std::size_t k = 10;
  std::uint64_t seed = 0;
  PipelineOptions pipeline{};
  unsigned threads = 1;
  CvObserver observer;

  // Canonical form of everything that affects results (threads excluded).
  std::string to_json() const;
  static EvaluateOptions from_json(std::string_view text);
};

struct EvaluationEntry {
  Combination channels;
  ModelKind model = ModelKind::Gbdt;
  std::vector<double> fold_r2;
  double mean_r2 = 0.0;
};

struct ChannelSummary {
  Channel channel = Channel::Eye;
  std::size_t input_features = 0;
  std::size_t kept_features = 0;
  bool fallback = false;
  std::size_t components = 0;
  double retained_share = 0.0;
};

struct EvaluationReport {
  std::vector<EvaluationEntry> entries;  // combination-major, models in requested order
  std::vector<Combination> combinations;
  std::vector<ModelKind> models;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<std::string> row_ids;
  FoldAssignment folds;
  std::string options_json;
  std::string config_hash;
  std::vector<ChannelSummary> channel_summaries;  // full-data pipelines
  std::optional<CorrelationSummary> correlation;  // when two or more channels are used

  const EvaluationEntry& entry(std::span<const Channel> channels, ModelKind model) const;
};

// Per fold, each channel pipeline is fitted once on the training rows and
// shared by every combination and model. Results match kfold_cv entry by entry.
EvaluationReport evaluate(std::span<const std::pair<Channel, FeatureMatrix>> channels, std::span<const double> labels,
                          const EvaluateOptions& options);

std::string r2_table_csv(const EvaluationReport& report);
std::string evaluation_json(const EvaluationReport& report);
// r2_table.csv, evaluation.json and, with a correlation summary,
// correlation.csv and correlation_pairs.json.
void write_evaluation(const EvaluationReport& report, const std::filesystem::path& out_dir);

// --- report ----------------------------------------------------------------

enum class ReportFormat { Text, Csv, Json };
ReportFormat parse_report_format(std::string_view text);

struct RenderedReport {
  std::string summary;   // in the requested format
  std::string plot_csv;  // long-form rows for plotting: channels,model,fold,r2
};

// Reads an evaluation directory; never writes to it.
RenderedReport render_report(const std::filesystem::path& report_dir, ReportFormat format);

}  // namespace fuselearn
