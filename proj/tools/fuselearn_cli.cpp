#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fuselearn/fuselearn.h"

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int report_failure(fl_status s) {
  std::cerr << "fuselearn: " << fl_last_error() << " [" << fl_last_error_kind() << "]\n";
  return s == FL_ERROR_INTERNAL ? 3 : static_cast<int>(s);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

void take_string(fl_status s, char* text, std::string& out) {
  if (s != FL_OK) return;
  out = text;
  fl_string_free(text);
}

struct Common {
  std::string config;
  std::string out;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  auto* out = cmd->add_option("--out,-o", c.out, "Output directory")->envname("FUSELEARN_OUT");
  if (out_required) out->required();
  cmd->add_option("--config,-c", c.config, "JSON config file")->envname("FUSELEARN_CONFIG");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->envname("FUSELEARN_THREADS");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-channel feature fusion for learning-unit-state regression"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fl_version());

  Common synth_opts;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic session with ground truth");
  add_common(synth, synth_opts, true);
  synth->add_option("--seed", synth_seed, "Random seed")->envname("FUSELEARN_SEED");

  Common feat_opts;
  std::string manifest, interval, rates, weights;
  auto* featurize = app.add_subcommand("featurize", "Extract per-channel feature matrices and labels");
  featurize->add_option("manifest", manifest, "Session manifest JSON")->required();
  add_common(featurize, feat_opts, true);
  featurize->add_option("--interval", interval, "Window length, e.g. 60s, 30000ms, 1m")->envname("FUSELEARN_INTERVAL");
  featurize->add_option("--rates", rates, "Resampling rates, e.g. gaze=30,mouse=20,frames=15")
      ->envname("FUSELEARN_RATES");
  featurize->add_option("--weights", weights, "Label weights mastery,self,class")->envname("FUSELEARN_WEIGHTS");

  Common eval_opts;
  std::string features_dir, channels, models;
  std::optional<double> alpha, retention;
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> eval_seed;
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validate models over channel combinations");
  evaluate->add_option("features", features_dir, "Directory written by featurize")->required();
  add_common(evaluate, eval_opts, true);
  evaluate->add_option("--channels", channels, "all, or combinations such as video,eye+mouse")
      ->envname("FUSELEARN_CHANNELS");
  evaluate->add_option("--models", models, "all, or a list of cart,rf,gbdt")->envname("FUSELEARN_MODELS");
  evaluate->add_option("--k", k, "Number of folds (default 10)")->envname("FUSELEARN_K");
  evaluate->add_option("--seed", eval_seed, "Random seed")->envname("FUSELEARN_SEED");
  evaluate->add_option("--alpha", alpha, "Filter significance level (default 0.05)")->envname("FUSELEARN_ALPHA");
  evaluate->add_option("--retention", retention, "PCA variance retention (default 0.95)")
      ->envname("FUSELEARN_RETENTION");

  std::string report_dir, format = "text", plot_out;
  auto* report = app.add_subcommand("report", "Summarize an evaluation directory");
  report->add_option("report", report_dir, "Directory written by evaluate")->required();
  report->add_option("--format", format, "text, csv or json")
      ->check(CLI::IsMember({"text", "csv", "json"}))
      ->envname("FUSELEARN_FORMAT");
  report->add_option("--out,-o", plot_out, "Directory for the plot-ready CSV")->envname("FUSELEARN_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      json cfg = synth_opts.config.empty() ? json::object() : read_json_file(synth_opts.config);
      if (synth_seed) cfg["seed"] = *synth_seed;
      const fl_status s = fl_synth_run(cfg.dump().c_str(), synth_opts.out.c_str());
      if (s != FL_OK) return report_failure(s);
      return 0;
    }

    if (*featurize) {
      json cfg = feat_opts.config.empty() ? json::object() : read_json_file(feat_opts.config);
      if (!interval.empty()) {
        std::int64_t ms = 0;
        const fl_status s = fl_parse_interval_ms(interval.c_str(), &ms);
        if (s != FL_OK) return report_failure(s);
        cfg["interval_ms"] = ms;
      }
      if (!weights.empty()) {
        json w = json::array();
        std::stringstream ss(weights);
        std::string item;
        while (std::getline(ss, item, ',')) {
          try {
            std::size_t used = 0;
            w.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
          } catch (const std::exception&) {
            throw UsageError("invalid --weights '" + weights + "'");
          }
        }
        if (w.size() != 3) throw UsageError("--weights needs three values: mastery,self,class");
        cfg["weights"] = w;
      }
      if (feat_opts.threads) cfg["threads"] = *feat_opts.threads;
      else if (!cfg.contains("threads")) cfg["threads"] = 0;
      std::string options = cfg.dump();
      if (!rates.empty()) {
        char* merged = nullptr;
        const fl_status s = fl_featurize_options_with_rates(options.c_str(), rates.c_str(), &merged);
        if (s != FL_OK) return report_failure(s);
        take_string(s, merged, options);
      }
      const fl_status s = fl_featurize_run(manifest.c_str(), feat_opts.out.c_str(), options.c_str());
      if (s != FL_OK) return report_failure(s);
      return 0;
    }

    if (*evaluate) {
      json cfg = eval_opts.config.empty() ? json::object() : read_json_file(eval_opts.config);
      if (!channels.empty()) cfg["channels"] = channels;
      if (!models.empty()) cfg["models"] = models;
      if (k) cfg["k"] = *k;
      if (eval_seed) cfg["seed"] = *eval_seed;
      if (alpha) cfg["alpha"] = *alpha;
      if (retention) cfg["retention"] = *retention;
      if (eval_opts.threads) cfg["threads"] = *eval_opts.threads;
      else if (!cfg.contains("threads")) cfg["threads"] = 0;
      const fl_status s = fl_evaluate_run(features_dir.c_str(), eval_opts.out.c_str(), cfg.dump().c_str());
      if (s != FL_OK) return report_failure(s);
      return 0;
    }

    if (*report) {
      char* summary = nullptr;
      char* plot = nullptr;
      const fl_status s = fl_report_render(report_dir.c_str(), format.c_str(), &summary, &plot);
      if (s != FL_OK) return report_failure(s);
      std::string text, plot_csv;
      take_string(s, summary, text);
      take_string(s, plot, plot_csv);
      std::cout << text;
      if (!plot_out.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(plot_out, ec);
        const auto path = std::filesystem::path(plot_out) / "r2_folds.csv";
        std::ofstream out(path, std::ios::binary);
        if (!out || !(out << plot_csv)) throw DataError("cannot write " + path.string());
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "fuselearn: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "fuselearn: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
