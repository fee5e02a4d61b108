#include "fuselearn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "fuselearn/error.hpp"
#include "fuselearn/parallel.hpp"
#include "fuselearn/random.hpp"
#include "fuselearn/text.hpp"

namespace fuselearn {

using nlohmann::json;
namespace fs = std::filesystem;

unsigned resolve_threads(unsigned requested) noexcept {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

Millis parse_interval(std::string_view s) {
  s = text::trim(s);
  double scale = 1000.0;
  std::string_view number = s;
  if (s.ends_with("ms")) {
    scale = 1.0;
    number = s.substr(0, s.size() - 2);
  } else if (s.ends_with("s")) {
    number = s.substr(0, s.size() - 1);
  } else if (s.ends_with("m")) {
    scale = 60'000.0;
    number = s.substr(0, s.size() - 1);
  }
  const auto v = text::parse_double(text::trim(number));
  if (!v || !std::isfinite(*v) || *v <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "invalid interval '" + std::string(s) + "'");
  const double ms = std::round(*v * scale);
  if (ms < 1.0) throw Error(ErrorCode::InvalidArgument, "interval must be at least 1 ms");
  return static_cast<Millis>(ms);
}

void parse_rates(std::string_view s, FeatureConfig& config) {
  for (auto item : text::split(s, ',')) {
    item = text::trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::InvalidArgument, "rate '" + std::string(item) + "' is not channel=hz");
    const auto v = text::parse_double(text::trim(item.substr(eq + 1)));
    if (!v || !std::isfinite(*v) || *v <= 0.0)
      throw Error(ErrorCode::InvalidArgument, "invalid rate in '" + std::string(item) + "'");
    switch (parse_channel(text::trim(item.substr(0, eq)))) {
      case Channel::Eye: config.gaze_rate_hz = *v; break;
      case Channel::Mouse: config.mouse_rate_hz = *v; break;
      case Channel::Video: config.frame_rate_hz = *v; break;
    }
  }
}

// --- featurize -------------------------------------------------------------

std::string FeaturizeOptions::to_json() const {
  json j = {{"interval_ms", features.interval_ms},
            {"rates",
             {{"gaze", features.gaze_rate_hz}, {"mouse", features.mouse_rate_hz}, {"frames", features.frame_rate_hz}}},
            {"max_wavelet_levels", features.max_wavelet_levels},
            {"weights", {weights.mastery(), weights.self_eval(), weights.class_eval()}}};
  return j.dump(2) + "\n";
}

FeaturizeOptions FeaturizeOptions::from_json(std::string_view s) {
  FeaturizeOptions o;
  if (text::trim(s).empty()) return o;
  try {
    const auto j = json::parse(s);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "featurize options must be a JSON object");
    o.features.interval_ms = j.value("interval_ms", o.features.interval_ms);
    if (j.contains("rates")) {
      const auto& r = j["rates"];
      o.features.gaze_rate_hz = r.value("gaze", o.features.gaze_rate_hz);
      o.features.mouse_rate_hz = r.value("mouse", o.features.mouse_rate_hz);
      o.features.frame_rate_hz = r.value("frames", o.features.frame_rate_hz);
    }
    o.features.max_wavelet_levels = j.value("max_wavelet_levels", o.features.max_wavelet_levels);
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      if (!w.is_array() || w.size() != 3) throw Error(ErrorCode::InvalidConfig, "weights must have three entries");
      o.weights = LabelWeights(w[0].get<double>(), w[1].get<double>(), w[2].get<double>());
    }
    o.threads = j.value("threads", o.threads);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("featurize options: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    throw Error(ErrorCode::InvalidConfig, std::string("featurize options: ") + e.what());
  }
  if (o.features.interval_ms <= 0) throw Error(ErrorCode::InvalidConfig, "interval_ms must be positive");
  for (double r : {o.features.gaze_rate_hz, o.features.mouse_rate_hz, o.features.frame_rate_hz})
    if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorCode::InvalidConfig, "rates must be positive");
  if (o.features.max_wavelet_levels < 1) throw Error(ErrorCode::InvalidConfig, "max_wavelet_levels must be >= 1");
  return o;
}

namespace {

template <TimedEvent E>
std::vector<E> sorted_stream(std::span<const E> stream) {
  std::vector<E> out(stream.begin(), stream.end());
  std::stable_sort(out.begin(), out.end(), [](const E& a, const E& b) { return timestamp_of(a) < timestamp_of(b); });
  return out;
}

template <TimedEvent E>
UnitRow unit_row(const std::vector<E>& sorted, const LearningUnit& unit, Channel channel,
                 const FeatureConfig& config) {
  auto lo = std::lower_bound(sorted.begin(), sorted.end(), unit.start,
                             [](const E& e, Millis t) { return timestamp_of(e) < t; });
  auto hi = std::lower_bound(lo, sorted.end(), unit.end, [](const E& e, Millis t) { return timestamp_of(e) < t; });
  const auto events = slice_unit(std::span<const E>(&*sorted.begin() + (lo - sorted.begin()), hi - lo), unit);
  const auto windows = cut_windows(std::span<const E>(events), unit, config.interval_ms, channel);
  std::vector<FeatureVector> per_window;
  per_window.reserve(windows.size());
  for (const auto& w : windows) per_window.push_back(channel_features(w, config));
  UnitRow row;
  row.unit_id = unit.unit_id;
  row.start = unit.start;
  row.features = unit_features(per_window);
  row.features.provenance = std::string(channel_name(channel)) + ":" + unit.unit_id;
  return row;
}

}  // namespace

FeatureSet featurize(const Session& session, std::span<const GazeEvent> gaze, std::span<const MouseEvent> mouse,
                     std::span<const FrameSample> frames, const FeaturizeOptions& options) {
  if (session.units.empty()) throw Error(ErrorCode::SchemaViolation, "session has no learning units");
  const auto g = sorted_stream(gaze);
  const auto m = sorted_stream(mouse);
  const auto f = sorted_stream(frames);
  const auto& units = session.units;
  std::array<std::vector<UnitRow>, 3> rows;
  for (auto& r : rows) r.resize(units.size());
  parallel_for(units.size(), resolve_threads(options.threads), [&](std::size_t i) {
    rows[static_cast<int>(Channel::Video)][i] = unit_row(f, units[i], Channel::Video, options.features);
    rows[static_cast<int>(Channel::Eye)][i] = unit_row(g, units[i], Channel::Eye, options.features);
    rows[static_cast<int>(Channel::Mouse)][i] = unit_row(m, units[i], Channel::Mouse, options.features);
  });
  FeatureSet set;
  for (std::size_t c = 0; c < 3; ++c) set.channels[c] = assemble_matrix(rows[c]);

  std::vector<const LearningUnit*> ordered;
  for (const auto& u : units) ordered.push_back(&u);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->start < b->start; });
  for (const auto* u : ordered) set.labels.push_back(lus_label(*u, options.weights));
  for (std::size_t i = 0; i < set.labels.size(); ++i)
    if (set.labels[i].unit_id != set.channels[0].matrix.row_ids[i])
      throw Error(ErrorCode::RowMismatch, "label order disagrees with feature rows");
  set.options_json = options.to_json();
  return set;
}

FeatureSet featurize_manifest(const fs::path& manifest, const FeaturizeOptions& options) {
  const Session session = load_manifest_file(manifest);
  auto with_file = [](const std::string& path, auto&& parse) {
    try {
      return parse(text::read_file(path));
    } catch (const Error& e) {
      const std::string where = e.line() ? path + ":" + std::to_string(e.line()) : path;
      throw Error(e.code(), where + ": " + e.what(), e.line());
    }
  };
  const auto gaze = with_file(session.channels.gaze, [](const std::string& t) { return parse_gaze(t); });
  const auto mouse = with_file(session.channels.mouse, [](const std::string& t) { return parse_mouse(t); });
  const auto frames = with_file(session.channels.frames, [](const std::string& t) { return parse_frames(t); });
  auto set = featurize(session, gaze.events, mouse, frames, options);
  set.unknown_gaze_types = gaze.unknown_event_types;
  return set;
}

std::string labels_to_csv(std::span<const LusLabel> labels) {
  std::string out = "unit_id,lus,mastery_norm,self_eval_norm,class_eval_norm\n";
  for (const auto& l : labels) {
    out += l.unit_id + "," + text::format_double(l.value);
    for (double c : l.components) out += "," + text::format_double(c);
    out += "\n";
  }
  return out;
}

void write_feature_set(const FeatureSet& set, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  for (Channel c : kAllChannels) {
    const auto& m = set.channels[static_cast<int>(c)];
    const std::string name = channel_name(c);
    text::write_file(out_dir / (name + ".csv"), matrix_to_csv(m.matrix));
    text::write_file(out_dir / (name + ".json"), assembly_sidecar_json(m));
  }
  text::write_file(out_dir / "labels.csv", labels_to_csv(set.labels));
  auto meta = json::parse(set.options_json.empty() ? "{}" : set.options_json);
  meta["unknown_gaze_event_types"] = set.unknown_gaze_types;
  meta["units"] = set.labels.size();
  text::write_file(out_dir / "featurize.json", meta.dump(2) + "\n");
}

LoadedFeatures read_feature_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "feature directory not found: " + dir.string());
  LoadedFeatures out;
  for (Channel c : kAllChannels) {
    const fs::path p = dir / (std::string(channel_name(c)) + ".csv");
    if (!fs::exists(p)) continue;
    try {
      out.channels.emplace_back(c, matrix_from_csv(text::read_file(p)));
    } catch (const Error& e) {
      throw Error(e.code(), p.string() + ": " + e.what(), e.line());
    }
  }
  if (out.channels.empty()) throw Error(ErrorCode::MissingChannelFile, "no channel matrices in " + dir.string());
  out.unit_ids = out.channels.front().second.row_ids;
  for (const auto& [c, m] : out.channels)
    if (m.row_ids != out.unit_ids)
      throw Error(ErrorCode::RowMismatch, std::string(channel_name(c)) + ".csv rows disagree with other channels");

  const fs::path lp = dir / "labels.csv";
  if (!fs::exists(lp)) throw Error(ErrorCode::MissingChannelFile, "labels file not found: " + lp.string());
  const std::string body = text::read_file(lp);
  const auto ls = text::lines(body);
  if (ls.empty()) throw Error(ErrorCode::MalformedLine, lp.string() + ": empty labels file", 1);
  const auto header = text::split(ls[0]);
  std::size_t id_col = header.size(), lus_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (text::trim(header[i]) == "unit_id") id_col = i;
    if (text::trim(header[i]) == "lus") lus_col = i;
  }
  if (id_col == header.size() || lus_col == header.size())
    throw Error(ErrorCode::MalformedLine, lp.string() + ": header needs unit_id and lus", 1);
  std::map<std::string, double, std::less<>> by_id;
  for (std::size_t li = 1; li < ls.size(); ++li) {
    if (text::trim(ls[li]).empty()) continue;
    const auto f = text::split(ls[li]);
    const auto line = li + 1;
    if (f.size() != header.size())
      throw Error(ErrorCode::MalformedLine, lp.string() + ":" + std::to_string(line) + ": wrong field count", line);
    const auto v = text::parse_double(text::trim(f[lus_col]));
    if (!v) throw Error(ErrorCode::MalformedLine, lp.string() + ":" + std::to_string(line) + ": bad label", line);
    if (!std::isfinite(*v))
      throw Error(ErrorCode::NonFiniteTarget, lp.string() + ":" + std::to_string(line) + ": label not finite", line);
    if (!by_id.emplace(std::string(text::trim(f[id_col])), *v).second)
      throw Error(ErrorCode::MalformedLine, lp.string() + ":" + std::to_string(line) + ": duplicate unit_id", line);
  }
  for (const auto& id : out.unit_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::RowMismatch, "no label for unit " + id);
    out.labels.push_back(it->second);
  }
  return out;
}

// --- evaluate --------------------------------------------------------------

std::vector<Combination> table_combinations() {
  using enum Channel;
  return {{Video}, {Eye}, {Mouse}, {Video, Eye}, {Eye, Mouse}, {Video, Mouse}, {Video, Eye, Mouse}};
}

std::string combination_name(std::span<const Channel> channels) {
  std::string out;
  for (Channel c : channels) {
    if (!out.empty()) out += "+";
    out += channel_name(c);
  }
  return out;
}

Combination parse_combination(std::string_view s) {
  Combination out;
  for (auto part : text::split(text::trim(s), '+')) {
    const Channel c = parse_channel(text::trim(part));
    if (std::find(out.begin(), out.end(), c) != out.end())
      throw Error(ErrorCode::InvalidArgument, "channel repeated in '" + std::string(s) + "'");
    out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Combination> parse_combinations(std::string_view s) {
  if (text::trim(s) == "all") return table_combinations();
  std::vector<Combination> out;
  for (auto item : text::split(s, ',')) {
    if (text::trim(item).empty()) continue;
    auto c = parse_combination(item);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no channel combinations given");
  return out;
}

std::vector<ModelKind> parse_models(std::string_view s) {
  if (text::trim(s) == "all") return {ModelKind::Cart, ModelKind::Forest, ModelKind::Gbdt};
  std::vector<ModelKind> out;
  for (auto item : text::split(s, ',')) {
    if (text::trim(item).empty()) continue;
    const auto k = parse_model_kind(text::trim(item));
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no models given");
  return out;
}

namespace {

json cart_json(const CartParams& p) {
  return {{"max_depth", p.max_depth},
          {"min_leaf", p.min_leaf},
          {"min_split", p.min_split},
          {"min_impurity_decrease", p.min_impurity_decrease}};
}

CartParams cart_from(const json& j, CartParams p) {
  p.max_depth = j.value("max_depth", p.max_depth);
  p.min_leaf = j.value("min_leaf", p.min_leaf);
  p.min_split = j.value("min_split", p.min_split);
  p.min_impurity_decrease = j.value("min_impurity_decrease", p.min_impurity_decrease);
  return p;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string EvaluateOptions::to_json() const {
  json combos = json::array();
  for (const auto& c : combinations) combos.push_back(combination_name(c));
  json ms = json::array();
  for (auto m : models) ms.push_back(model_short_name(m));
  json j = {{"channels", combos},
            {"models", ms},
            {"k", k},
            {"seed", seed},
            {"alpha", pipeline.alpha},
            {"retention", pipeline.retention},
            {"cart", cart_json(params.cart)},
            {"forest",
             {{"n_trees", params.forest.n_trees},
              {"feature_subsample", params.forest.feature_subsample},
              {"bootstrap", params.forest.bootstrap},
              {"tree", cart_json(params.forest.tree)}}},
            {"gbdt",
             {{"n_trees", params.gbdt.n_trees},
              {"learning_rate", params.gbdt.learning_rate},
              {"tree", cart_json(params.gbdt.tree)}}}};
  return j.dump(2) + "\n";
}

EvaluateOptions EvaluateOptions::from_json(std::string_view s) {
  EvaluateOptions o;
  if (text::trim(s).empty()) return o;
  try {
    const auto j = json::parse(s);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "evaluate options must be a JSON object");
    if (j.contains("channels")) {
      const auto& c = j["channels"];
      if (c.is_string()) {
        o.combinations = parse_combinations(c.get<std::string>());
      } else {
        o.combinations.clear();
        for (const auto& item : c) {
          auto combo = parse_combination(item.get<std::string>());
          if (std::find(o.combinations.begin(), o.combinations.end(), combo) == o.combinations.end())
            o.combinations.push_back(std::move(combo));
        }
        if (o.combinations.empty()) throw Error(ErrorCode::InvalidConfig, "no channel combinations given");
      }
    }
    if (j.contains("models")) {
      const auto& m = j["models"];
      if (m.is_string()) {
        o.models = parse_models(m.get<std::string>());
      } else {
        std::string joined;
        for (const auto& item : m) joined += item.get<std::string>() + ",";
        o.models = parse_models(joined);
      }
    }
    o.k = j.value("k", o.k);
    o.seed = j.value("seed", o.seed);
    o.pipeline.alpha = j.value("alpha", o.pipeline.alpha);
    o.pipeline.retention = j.value("retention", o.pipeline.retention);
    o.threads = j.value("threads", o.threads);
    if (j.contains("cart")) o.params.cart = cart_from(j["cart"], o.params.cart);
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      o.params.forest.n_trees = f.value("n_trees", o.params.forest.n_trees);
      o.params.forest.feature_subsample = f.value("feature_subsample", o.params.forest.feature_subsample);
      o.params.forest.bootstrap = f.value("bootstrap", o.params.forest.bootstrap);
      if (f.contains("tree")) o.params.forest.tree = cart_from(f["tree"], o.params.forest.tree);
    }
    if (j.contains("gbdt")) {
      const auto& g = j["gbdt"];
      o.params.gbdt.n_trees = g.value("n_trees", o.params.gbdt.n_trees);
      o.params.gbdt.learning_rate = g.value("learning_rate", o.params.gbdt.learning_rate);
      if (g.contains("tree")) o.params.gbdt.tree = cart_from(g["tree"], o.params.gbdt.tree);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("evaluate options: ") + e.what());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidArgument) throw;
    throw Error(ErrorCode::InvalidConfig, std::string("evaluate options: ") + e.what());
  }
  if (!(o.pipeline.alpha > 0.0 && o.pipeline.alpha <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1]");
  if (!(o.pipeline.retention > 0.0 && o.pipeline.retention <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "retention must lie in (0, 1]");
  if (o.k < 2) throw Error(ErrorCode::InvalidConfig, "k must be at least 2");
  if (!(o.params.gbdt.learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be positive");
  try {
    o.params.cart.validate();
    o.params.forest.tree.validate();
    o.params.gbdt.tree.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return o;
}

const EvaluationEntry& EvaluationReport::entry(std::span<const Channel> channels, ModelKind model) const {
  for (const auto& e : entries)
    if (e.model == model && std::equal(e.channels.begin(), e.channels.end(), channels.begin(), channels.end()))
      return e;
  throw Error(ErrorCode::InvalidArgument, "no entry for " + combination_name(channels) + " / " + model_name(model));
}

EvaluationReport evaluate(std::span<const std::pair<Channel, FeatureMatrix>> channels, std::span<const double> labels,
                          const EvaluateOptions& options) {
  if (options.combinations.empty() || options.models.empty())
    throw Error(ErrorCode::InvalidArgument, "nothing to evaluate");
  std::array<const FeatureMatrix*, 3> by_channel{};
  for (const auto& [c, m] : channels) {
    if (by_channel[static_cast<int>(c)]) throw Error(ErrorCode::InvalidArgument, "channel given twice");
    by_channel[static_cast<int>(c)] = &m;
  }
  std::set<Channel> used;
  for (const auto& combo : options.combinations) {
    if (combo.empty()) throw Error(ErrorCode::InvalidArgument, "empty channel combination");
    for (Channel c : combo) {
      if (!by_channel[static_cast<int>(c)])
        throw Error(ErrorCode::MissingChannelFile, std::string("no feature matrix for channel ") + channel_name(c));
      used.insert(c);
    }
  }
  const std::size_t n = labels.size();
  const auto& row_ids = by_channel[static_cast<int>(*used.begin())]->row_ids;
  for (Channel c : used) {
    const auto& m = *by_channel[static_cast<int>(c)];
    if (m.rows() != n) throw Error(ErrorCode::RowMismatch, std::string(channel_name(c)) + " rows != labels");
    if (m.row_ids != row_ids) throw Error(ErrorCode::RowMismatch, "channel row ids disagree");
  }
  for (double y : labels)
    if (!std::isfinite(y)) throw Error(ErrorCode::NonFiniteTarget, "labels must be finite");

  EvaluationReport report;
  report.combinations = options.combinations;
  report.models = options.models;
  report.seed = options.seed;
  report.k = options.k;
  report.row_ids = row_ids;
  report.folds = make_folds(n, options.k, options.seed);
  report.options_json = options.to_json();
  report.config_hash = hex64(text::fnv1a64(report.options_json));

  const std::size_t n_models = options.models.size();
  const std::size_t n_entries = options.combinations.size() * n_models;
  std::vector<std::vector<double>> r2(n_entries, std::vector<double>(options.k, 0.0));
  ModelSpec base = options.params;
  base.forest.threads = 1;

  parallel_for(options.k, resolve_threads(options.threads), [&](std::size_t f) {
    const auto& test = report.folds.test_rows[f];
    std::vector<std::size_t> train;
    train.reserve(n - test.size());
    for (std::size_t i = 0; i < n; ++i)
      if (report.folds.fold_of_row[i] != f) train.push_back(i);
    std::vector<double> y_train, y_test;
    for (auto i : train) y_train.push_back(labels[i]);
    for (auto i : test) y_test.push_back(labels[i]);

    FitObserver stage_observer;
    if (options.observer)
      stage_observer = [&](std::string_view stage, std::span<const std::string> ids) { options.observer(f, stage, ids); };

    std::array<std::optional<std::pair<FeatureMatrix, FeatureMatrix>>, 3> reduced;
    for (Channel c : used) {
      const auto& m = *by_channel[static_cast<int>(c)];
      const auto train_m = m.select_rows(train);
      const auto pipeline = ChannelPipeline::fit(c, train_m, y_train, options.pipeline, stage_observer);
      reduced[static_cast<int>(c)].emplace(pipeline.transform(train_m), pipeline.transform(m.select_rows(test)));
    }
    for (std::size_t ci = 0; ci < options.combinations.size(); ++ci) {
      std::vector<std::pair<Channel, FeatureMatrix>> train_parts, test_parts;
      for (Channel c : options.combinations[ci]) {
        train_parts.emplace_back(c, reduced[static_cast<int>(c)]->first);
        test_parts.emplace_back(c, reduced[static_cast<int>(c)]->second);
      }
      const auto fused_train = fuse(std::move(train_parts));
      const auto fused_test = fuse(std::move(test_parts));
      for (std::size_t mi = 0; mi < n_models; ++mi) {
        ModelSpec spec = base;
        spec.kind = options.models[mi];
        if (options.observer) options.observer(f, "model", fused_train.row_ids);
        const auto model = fit_model(spec, fused_train.values, y_train, derive_seed(options.seed, 0x6d6f64656cULL, f));
        r2[ci * n_models + mi][f] = r2_score(y_test, predict(model, fused_test.values));
      }
    }
  });

  for (std::size_t ci = 0; ci < options.combinations.size(); ++ci)
    for (std::size_t mi = 0; mi < n_models; ++mi) {
      EvaluationEntry e;
      e.channels = options.combinations[ci];
      e.model = options.models[mi];
      e.fold_r2 = r2[ci * n_models + mi];
      e.mean_r2 = std::accumulate(e.fold_r2.begin(), e.fold_r2.end(), 0.0) / static_cast<double>(options.k);
      report.entries.push_back(std::move(e));
    }

  // Full-data pipelines describe each channel and feed the correlation summary.
  std::vector<std::pair<Channel, FeatureMatrix>> parts;
  for (Channel c : used) {
    const auto& m = *by_channel[static_cast<int>(c)];
    const auto pipeline = ChannelPipeline::fit(c, m, labels, options.pipeline);
    report.channel_summaries.push_back({c, m.cols(), pipeline.filter().kept.size(), pipeline.filter().fallback,
                                        pipeline.output_dim(), pipeline.pca().retained_share()});
    parts.emplace_back(c, pipeline.transform(m));
  }
  if (parts.size() >= 2) {
    const auto fused = fuse(std::move(parts));
    const auto spans = channel_spans(fused);
    report.correlation = cross_channel_correlation(fused, spans);
  }
  return report;
}

std::string r2_table_csv(const EvaluationReport& report) {
  std::string out = "channels";
  for (auto m : report.models) out += std::string(",") + model_name(m);
  out += "\n";
  for (const auto& combo : report.combinations) {
    out += combination_name(combo);
    for (auto m : report.models) out += "," + text::format_double(report.entry(combo, m).mean_r2);
    out += "\n";
  }
  return out;
}

std::string evaluation_json(const EvaluationReport& report) {
  json table = json::array();
  for (const auto& combo : report.combinations) {
    json models = json::object();
    for (auto m : report.models) {
      const auto& e = report.entry(combo, m);
      models[model_name(m)] = {{"mean_r2", e.mean_r2}, {"fold_r2", e.fold_r2}};
    }
    table.push_back({{"channels", combination_name(combo)}, {"models", models}});
  }
  json folds = json::array();
  for (const auto& rows : report.folds.test_rows) {
    json ids = json::array();
    for (auto i : rows) ids.push_back(report.row_ids[i]);
    folds.push_back(ids);
  }
  json summaries = json::array();
  for (const auto& s : report.channel_summaries)
    summaries.push_back({{"channel", channel_name(s.channel)},
                         {"input_features", s.input_features},
                         {"kept_features", s.kept_features},
                         {"filter_fallback", s.fallback},
                         {"components", s.components},
                         {"retained_share", s.retained_share}});
  json models = json::array();
  for (auto m : report.models) models.push_back(model_name(m));
  json doc = {{"format", "fuselearn-evaluation"},
              {"version", 1},
              {"seed", report.seed},
              {"k", report.k},
              {"units", report.row_ids.size()},
              {"config_hash", report.config_hash},
              {"options", json::parse(report.options_json)},
              {"models", models},
              {"table", table},
              {"channels", summaries},
              {"folds", folds}};
  if (report.correlation) doc["pairs"] = json::parse(correlation_pairs_json(*report.correlation)).at("pairs");
  return doc.dump(2) + "\n";
}

void write_evaluation(const EvaluationReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  text::write_file(out_dir / "r2_table.csv", r2_table_csv(report));
  text::write_file(out_dir / "evaluation.json", evaluation_json(report));
  if (report.correlation) {
    text::write_file(out_dir / "correlation.csv", correlation_to_csv(*report.correlation));
    text::write_file(out_dir / "correlation_pairs.json", correlation_pairs_json(*report.correlation));
  }
}

// --- report ----------------------------------------------------------------

ReportFormat parse_report_format(std::string_view s) {
  if (s == "text") return ReportFormat::Text;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw Error(ErrorCode::InvalidArgument, "unknown report format '" + std::string(s) + "' (text, csv, json)");
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

RenderedReport render_report(const fs::path& dir, ReportFormat format) {
  const fs::path path = dir / "evaluation.json";
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "no evaluation.json in " + dir.string());
  json doc;
  try {
    doc = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
  }
  try {
    if (doc.value("format", "") != "fuselearn-evaluation")
      throw Error(ErrorCode::SchemaViolation, path.string() + ": not an evaluation report");
    const auto models = doc.at("models").get<std::vector<std::string>>();
    const auto& table = doc.at("table");

    std::string best_combo, best_model;
    double best = -std::numeric_limits<double>::infinity();
    std::string plot = "channels,model,fold,r2\n";
    for (const auto& row : table) {
      const auto combo = row.at("channels").get<std::string>();
      for (const auto& m : models) {
        const auto& cell = row.at("models").at(m);
        const double v = cell.at("mean_r2").get<double>();
        if (v > best) {
          best = v;
          best_combo = combo;
          best_model = m;
        }
        const auto folds = cell.at("fold_r2").get<std::vector<double>>();
        for (std::size_t f = 0; f < folds.size(); ++f)
          plot += combo + "," + m + "," + std::to_string(f + 1) + "," + text::format_double(folds[f]) + "\n";
      }
    }
    const json pairs = doc.contains("pairs") ? doc["pairs"] : json::array();

    RenderedReport out;
    out.plot_csv = plot;
    switch (format) {
      case ReportFormat::Json: {
        json t = json::array();
        for (const auto& row : table) {
          json r = {{"channels", row.at("channels")}};
          for (const auto& m : models) r[m] = row.at("models").at(m).at("mean_r2");
          t.push_back(r);
        }
        json p = json::array();
        for (const auto& pr : pairs)
          p.push_back({{"a", pr.at("a")}, {"b", pr.at("b")}, {"mean_abs_r", pr.at("mean_abs_r")}});
        json s = {{"seed", doc.at("seed")},
                  {"k", doc.at("k")},
                  {"units", doc.at("units")},
                  {"config_hash", doc.at("config_hash")},
                  {"table", t},
                  {"pairs", p},
                  {"best", {{"channels", best_combo}, {"model", best_model}, {"mean_r2", best}}}};
        out.summary = s.dump(2) + "\n";
        break;
      }
      case ReportFormat::Csv: {
        std::string s = "channels";
        for (const auto& m : models) s += "," + m;
        s += "\n";
        for (const auto& row : table) {
          s += row.at("channels").get<std::string>();
          for (const auto& m : models) s += "," + fixed(row.at("models").at(m).at("mean_r2").get<double>(), 6);
          s += "\n";
        }
        out.summary = s;
        break;
      }
      case ReportFormat::Text: {
        std::string s = "R^2, " + std::to_string(doc.at("k").get<std::size_t>()) + "-fold CV over " +
                        std::to_string(doc.at("units").get<std::size_t>()) + " units (seed " +
                        std::to_string(doc.at("seed").get<std::uint64_t>()) + ", config " +
                        doc.at("config_hash").get<std::string>() + ")\n\n";
        char line[256];
        std::snprintf(line, sizeof line, "%-18s", "channels");
        s += line;
        for (const auto& m : models) {
          std::snprintf(line, sizeof line, "%15s", m.c_str());
          s += line;
        }
        s += "\n";
        for (const auto& row : table) {
          std::snprintf(line, sizeof line, "%-18s", row.at("channels").get<std::string>().c_str());
          s += line;
          for (const auto& m : models) {
            std::snprintf(line, sizeof line, "%15.4f", row.at("models").at(m).at("mean_r2").get<double>());
            s += line;
          }
          s += "\n";
        }
        if (!pairs.empty()) {
          s += "\nchannel pair      mean |r|\n";
          for (const auto& pr : pairs) {
            const std::string name = pr.at("a").get<std::string>() + "-" + pr.at("b").get<std::string>();
            std::snprintf(line, sizeof line, "%-18s%8.4f\n", name.c_str(), pr.at("mean_abs_r").get<double>());
            s += line;
          }
        }
        s += "\nbest: " + best_model + " on " + best_combo + " (mean R^2 " + fixed(best, 4) + ")\n";
        out.summary = s;
        break;
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
  }
}

}  // namespace fuselearn
