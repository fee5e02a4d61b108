#include "fuselearn/fuselearn.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "fuselearn/error.hpp"
#include "fuselearn/labeling.hpp"
#include "fuselearn/models.hpp"
#include "fuselearn/pipeline.hpp"
#include "fuselearn/synth.hpp"
#include "fuselearn/text.hpp"

struct fl_model {
  fuselearn::Model model;
};

namespace {

using namespace fuselearn;

struct LastError {
  std::string message;
  std::string kind;
  std::size_t line = 0;
};

thread_local LastError g_error;

fl_status fail(fl_status status, std::string message, std::string kind, std::size_t line = 0) {
  g_error = {std::move(message), std::move(kind), line};
  return status;
}

template <class Fn>
fl_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    return FL_OK;
  } catch (const Error& e) {
    fl_status s = FL_ERROR_INTERNAL;
    switch (e.category()) {
      case ErrorCategory::Usage: s = FL_ERROR_USAGE; break;
      case ErrorCategory::Data: s = FL_ERROR_DATA; break;
      case ErrorCategory::Numeric: s = FL_ERROR_NUMERIC; break;
    }
    return fail(s, e.what(), to_string(e.code()), e.line());
  } catch (const std::bad_alloc&) {
    return fail(FL_ERROR_INTERNAL, "out of memory", "OutOfMemory");
  } catch (const std::exception& e) {
    return fail(FL_ERROR_INTERNAL, e.what(), "Internal");
  } catch (...) {
    return fail(FL_ERROR_INTERNAL, "unknown failure", "Internal");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string_view opt(const char* s) { return s ? std::string_view(s) : std::string_view(); }

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

}  // namespace

extern "C" {

const char* fl_version(void) { return "1.0.0"; }
const char* fl_last_error(void) { return g_error.message.c_str(); }
const char* fl_last_error_kind(void) { return g_error.kind.c_str(); }
size_t fl_last_error_line(void) { return g_error.line; }
void fl_string_free(char* s) { std::free(s); }

fl_status fl_synth_run(const char* config_json, const char* out_dir) {
  return guarded([&] {
    require(out_dir && *out_dir, "output directory is required");
    const auto config = text::trim(opt(config_json)).empty() ? SynthConfig{} : SynthConfig::from_json(opt(config_json));
    write_session(generate_session(config), out_dir);
  });
}

fl_status fl_synth_default_config(char** out_json) {
  return guarded([&] {
    require(out_json, "output pointer is required");
    *out_json = dup_string(SynthConfig{}.to_json());
  });
}

fl_status fl_featurize_run(const char* manifest_path, const char* out_dir, const char* options_json) {
  return guarded([&] {
    require(manifest_path && *manifest_path, "manifest path is required");
    require(out_dir && *out_dir, "output directory is required");
    const auto options = FeaturizeOptions::from_json(opt(options_json));
    write_feature_set(featurize_manifest(manifest_path, options), out_dir);
  });
}

fl_status fl_evaluate_run(const char* features_dir, const char* out_dir, const char* options_json) {
  return guarded([&] {
    require(features_dir && *features_dir, "features directory is required");
    require(out_dir && *out_dir, "output directory is required");
    const auto options = EvaluateOptions::from_json(opt(options_json));
    const auto data = read_feature_dir(features_dir);
    write_evaluation(evaluate(data.channels, data.labels, options), out_dir);
  });
}

fl_status fl_report_render(const char* report_dir, const char* format, char** out_summary, char** out_plot_csv) {
  return guarded([&] {
    require(report_dir && *report_dir, "report directory is required");
    require(out_summary, "output pointer is required");
    const auto fmt = parse_report_format(format ? format : "text");
    const auto r = render_report(report_dir, fmt);
    char* summary = dup_string(r.summary);
    if (out_plot_csv) {
      try {
        *out_plot_csv = dup_string(r.plot_csv);
      } catch (...) {
        std::free(summary);
        throw;
      }
    }
    *out_summary = summary;
  });
}

fl_status fl_parse_interval_ms(const char* s, int64_t* out_ms) {
  return guarded([&] {
    require(s && out_ms, "interval and output pointer are required");
    *out_ms = parse_interval(s);
  });
}

fl_status fl_featurize_options_with_rates(const char* options_json, const char* rates, char** out_json) {
  return guarded([&] {
    require(rates && out_json, "rates and output pointer are required");
    auto o = FeaturizeOptions::from_json(opt(options_json));
    parse_rates(rates, o.features);
    auto j = nlohmann::json::parse(o.to_json());
    j["threads"] = o.threads;
    *out_json = dup_string(j.dump());
  });
}

fl_status fl_model_fit(const char* kind, const char* params_json, const double* x, size_t rows, size_t cols,
                       const double* y, uint64_t seed, fl_model** out) {
  return guarded([&] {
    require(kind && x && y && out, "kind, x, y and output pointer are required");
    auto params = EvaluateOptions::from_json(opt(params_json)).params;
    params.kind = parse_model_kind(kind);
    Matrix m(rows, cols);
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) m(r, c) = x[r * cols + c];
    auto* handle = new fl_model{fit_model(params, m, std::span<const double>(y, rows), seed)};
    *out = handle;
  });
}

fl_status fl_model_predict(const fl_model* model, const double* x, size_t rows, size_t cols, double* out) {
  return guarded([&] {
    require(model && (x || rows == 0) && (out || rows == 0), "model, x and output are required");
    for (size_t r = 0; r < rows; ++r) out[r] = predict(model->model, std::span<const double>(x + r * cols, cols));
  });
}

fl_status fl_model_to_json(const fl_model* model, char** out_json) {
  return guarded([&] {
    require(model && out_json, "model and output pointer are required");
    *out_json = dup_string(serialize_model(model->model));
  });
}

fl_status fl_model_from_json(const char* json, fl_model** out) {
  return guarded([&] {
    require(json && out, "json and output pointer are required");
    *out = new fl_model{deserialize_model(json)};
  });
}

void fl_model_free(fl_model* model) { delete model; }

fl_status fl_lus_label(double mastery, double self_eval, double class_eval, const double* weights3, double* out) {
  return guarded([&] {
    require(out, "output pointer is required");
    const LabelWeights w = weights3 ? LabelWeights(weights3[0], weights3[1], weights3[2]) : LabelWeights{};
    LearningUnit u;
    u.unit_id = "unit";
    u.mastery = mastery;
    u.self_eval = self_eval;
    u.class_eval = class_eval;
    *out = lus_label(u, w).value;
  });
}

fl_status fl_r2_score(const double* truth, const double* pred, size_t n, double* out) {
  return guarded([&] {
    require(truth && pred && out, "truth, pred and output pointer are required");
    *out = r2_score(std::span<const double>(truth, n), std::span<const double>(pred, n));
  });
}

}  // extern "C"
