#include "fuselearn/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include <fftw3.h>
#include <json.hpp>

#include "fuselearn/error.hpp"
#include "fuselearn/text.hpp"

namespace fuselearn {

void FeatureVector::push(std::string name, double value) {
  names.push_back(std::move(name));
  values.push_back(value);
}

void FeatureVector::append(std::string_view prefix, const FeatureVector& other) {
  for (std::size_t i = 0; i < other.size(); ++i) {
    std::string name(prefix);
    name += '.';
    name += other.names[i];
    push(std::move(name), other.values[i]);
  }
}

double FeatureVector::at(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw Error(ErrorCode::InvalidArgument, "no feature named '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Statistical battery

const std::vector<std::string>& stat_feature_names() {
  static const std::vector<std::string> names{
      "count",    "mean",         "std",           "variance", "min",      "max",
      "range",    "median",       "q1",            "q3",       "iqr",      "skewness",
      "kurtosis", "rms",          "mean_abs_dev",  "zero_cross_rate",      "energy",
      "diff_mean", "diff_std",    "diff_abs_mean", "autocorr_lag1"};
  return names;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

FeatureVector stat_features(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorCode::EmptySeries, "stat_features on an empty series");
  const std::size_t n = x.size();
  const double dn = static_cast<double>(n);
  const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn_it, hi = *mx_it;
  const bool constant = lo == hi;
  const double mean = constant ? lo : mean_of(x);

  double s2 = 0, s3 = 0, s4 = 0, abs_dev = 0, energy = 0, lag1 = 0;
  std::size_t crossings = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = constant ? 0.0 : x[i] - mean;
    s2 += c * c;
    s3 += c * c * c;
    s4 += c * c * c * c;
    abs_dev += std::abs(c);
    energy += x[i] * x[i];
    if (i + 1 < n) {
      const double next = constant ? 0.0 : x[i + 1] - mean;
      lag1 += c * next;
      if (c * next < 0.0) ++crossings;
    }
  }
  const double variance = n > 1 ? s2 / (dn - 1.0) : 0.0;
  const double m2 = s2 / dn, m3 = s3 / dn, m4 = s4 / dn;
  const double skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = quantile_sorted(sorted, 0.5);
  const double q1 = quantile_sorted(sorted, 0.25);
  const double q3 = quantile_sorted(sorted, 0.75);

  double diff_mean = 0, diff_std = 0, diff_abs = 0;
  if (n > 1) {
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) d[i] = x[i + 1] - x[i];
    diff_mean = mean_of(d);
    for (double v : d) diff_abs += std::abs(v);
    diff_abs /= static_cast<double>(d.size());
    if (d.size() > 1) {
      double ss = 0;
      for (double v : d) ss += (v - diff_mean) * (v - diff_mean);
      diff_std = std::sqrt(ss / static_cast<double>(d.size() - 1));
    }
  }

  FeatureVector fv;
  const auto& names = stat_feature_names();
  const double values[] = {dn,
                           mean,
                           std::sqrt(variance),
                           variance,
                           lo,
                           hi,
                           hi - lo,
                           median,
                           q1,
                           q3,
                           q3 - q1,
                           skewness,
                           kurtosis,
                           std::sqrt(energy / dn),
                           abs_dev / dn,
                           n > 1 ? static_cast<double>(crossings) / (dn - 1.0) : 0.0,
                           energy,
                           diff_mean,
                           diff_std,
                           diff_abs,
                           s2 > 0.0 ? lag1 / s2 : 0.0};
  for (std::size_t i = 0; i < names.size(); ++i) fv.push(names[i], values[i]);
  return fv;
}

// ---------------------------------------------------------------------------
// Haar wavelet

std::size_t haar_levels(std::size_t n) noexcept {
  if (n < 2) return 0;
  std::size_t l = 0;
  while ((std::size_t{2} << l) <= n) ++l;
  return std::min<std::size_t>(5, l);
}

HaarPyramid haar_dwt(std::span<const double> series) { return haar_dwt(series, haar_levels(series.size())); }

HaarPyramid haar_dwt(std::span<const double> series, std::size_t levels) {
  if (series.empty()) throw Error(ErrorCode::EmptySeries, "haar_dwt on an empty series");
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  HaarPyramid out;
  std::vector<double> a(series.begin(), series.end());
  for (std::size_t level = 0; level < levels; ++level) {
    if (a.size() % 2 == 1) a.push_back(a.back());
    const std::size_t half = a.size() / 2;
    std::vector<double> approx(half), detail(half);
    for (std::size_t i = 0; i < half; ++i) {
      approx[i] = (a[2 * i] + a[2 * i + 1]) * inv_sqrt2;
      detail[i] = (a[2 * i] - a[2 * i + 1]) * inv_sqrt2;
    }
    out.details.push_back(std::move(detail));
    a = std::move(approx);
  }
  out.approx = std::move(a);
  return out;
}

std::vector<std::string> wavelet_feature_names(std::size_t levels) {
  std::vector<std::string> names;
  for (std::size_t j = 1; j <= levels; ++j) {
    names.push_back("d" + std::to_string(j) + "_energy");
    names.push_back("d" + std::to_string(j) + "_log_energy");
  }
  names.emplace_back("approx_energy");
  names.emplace_back("d1_ratio");
  return names;
}

namespace {

double sum_sq(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

FeatureVector wavelet_from_pyramid(const HaarPyramid& p, std::size_t reported_levels) {
  const auto names = wavelet_feature_names(reported_levels);
  FeatureVector fv;
  double total = sum_sq(p.approx);
  std::vector<double> energies;
  for (const auto& d : p.details) {
    energies.push_back(sum_sq(d));
    total += energies.back();
  }
  std::size_t k = 0;
  for (std::size_t j = 0; j < reported_levels; ++j) {
    if (j < energies.size()) {
      fv.push(names[k++], energies[j]);
      fv.push(names[k++], std::log(energies[j] + 1e-12));
    } else {
      fv.push(names[k++], kMissing);
      fv.push(names[k++], kMissing);
    }
  }
  const bool complete = p.levels() == reported_levels;
  fv.push(names[k++], complete ? sum_sq(p.approx) : kMissing);
  const double d1 = energies.empty() ? 0.0 : energies[0];
  fv.push(names[k++], energies.empty() ? kMissing : (total > 0.0 ? d1 / total : 0.0));
  return fv;
}

}  // namespace

FeatureVector wavelet_features(std::span<const double> series) {
  const auto p = haar_dwt(series);
  return wavelet_from_pyramid(p, p.levels());
}

FeatureVector wavelet_features(std::span<const double> series, std::size_t levels) {
  if (series.empty()) throw Error(ErrorCode::EmptySeries, "wavelet_features on an empty series");
  const auto p = haar_dwt(series, std::min(levels, haar_levels(series.size())));
  return wavelet_from_pyramid(p, levels);
}

// ---------------------------------------------------------------------------
// Fourier

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface
// is. Plans are cached per length for the lifetime of the process.
class FftPlans {
 public:
  fftw_plan get(int n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* in = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, plan);
    return plan;
  }

  ~FftPlans() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<int, fftw_plan> plans_;
};

FftPlans& fft_plans() {
  static FftPlans plans;
  return plans;
}

}  // namespace

std::vector<double> one_sided_power(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n == 0) throw Error(ErrorCode::EmptySeries, "power spectrum of an empty series");
  std::vector<double> power(n / 2 + 1, 0.0);
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) {
    // Exact DC-only spectrum; the FFT would leave rounding noise in k >= 1.
    const double sum = *lo * static_cast<double>(n);
    power[0] = sum * sum / static_cast<double>(n);
    return power;
  }
  const int ni = static_cast<int>(n);
  fftw_plan plan = fft_plans().get(ni);
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  std::copy(series.begin(), series.end(), in);
  fftw_execute_dft_r2c(plan, in, out);
  for (std::size_t k = 0; k <= n / 2; ++k)
    power[k] = (out[k][0] * out[k][0] + out[k][1] * out[k][1]) / static_cast<double>(n);
  fftw_free(in);
  fftw_free(out);
  return power;
}

const std::vector<std::string>& fourier_feature_names() {
  static const std::vector<std::string> names{
      "total_power",          "dc_power",           "dominant_freq_hz", "dominant_power",
      "spectral_centroid_hz", "spectral_spread_hz", "spectral_entropy", "band1_power",
      "band2_power",          "band3_power",        "band4_power"};
  return names;
}

FeatureVector fourier_features(std::span<const double> series, double rate_hz) {
  if (series.size() < 2)
    throw Error(ErrorCode::SeriesTooShort, "fourier_features needs at least 2 samples");
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling rate must be positive");
  const auto power = one_sided_power(series);
  const double n = static_cast<double>(series.size());
  const double nyquist = rate_hz / 2.0;
  auto freq = [&](std::size_t k) { return static_cast<double>(k) * rate_hz / n; };

  double total = 0.0;
  for (double p : power) total += p;
  double ac = 0.0, centroid = 0.0, dom_power = 0.0;
  std::size_t dom_k = 0;
  double bands[4] = {0, 0, 0, 0};
  for (std::size_t k = 1; k < power.size(); ++k) {
    ac += power[k];
    centroid += freq(k) * power[k];
    if (power[k] > dom_power) {
      dom_power = power[k];
      dom_k = k;
    }
    const double f = freq(k);
    const int band = f <= nyquist / 8 ? 0 : f <= nyquist / 4 ? 1 : f <= nyquist / 2 ? 2 : 3;
    bands[band] += power[k];
  }
  double spread = 0.0, entropy = 0.0;
  if (ac > 0.0) {
    centroid /= ac;
    for (std::size_t k = 1; k < power.size(); ++k) {
      const double d = freq(k) - centroid;
      spread += d * d * power[k];
      const double p = power[k] / ac;
      if (p > 0.0) entropy -= p * std::log2(p);
    }
    spread = std::sqrt(spread / ac);
  } else {
    centroid = 0.0;
  }

  FeatureVector fv;
  const auto& names = fourier_feature_names();
  const double values[] = {total,    power[0], dom_k ? freq(dom_k) : 0.0, dom_power, centroid,
                           spread,   entropy,  bands[0],                  bands[1],  bands[2],
                           bands[3]};
  for (std::size_t i = 0; i < names.size(); ++i) fv.push(names[i], values[i]);
  return fv;
}

// ---------------------------------------------------------------------------
// Gaze subjective features

FeatureVector gaze_subjective(std::span<const GazeEvent> events) {
  FeatureVector fv;
  double path = 0.0, horizontal = 0.0;
  for (std::size_t i = 1; i < events.size(); ++i) {
    const double dx = events[i].x - events[i - 1].x;
    const double dy = events[i].y - events[i - 1].y;
    path += std::sqrt(dx * dx + dy * dy);
    horizontal += std::abs(dx);
  }
  const bool enough = events.size() >= 2;
  fv.push("avg_move_dist", enough ? path / static_cast<double>(events.size() - 1) : 0.0);
  fv.push("horizontal_mobility", enough && path > 0.0 ? std::min(1.0, horizontal / path) : 0.0);
  return fv;
}

// ---------------------------------------------------------------------------
// Channel battery

double FeatureConfig::rate_for(Channel c) const noexcept {
  switch (c) {
    case Channel::Video: return frame_rate_hz;
    case Channel::Eye: return gaze_rate_hz;
    case Channel::Mouse: return mouse_rate_hz;
  }
  return gaze_rate_hz;
}

std::size_t FeatureConfig::wavelet_levels_for(Channel c) const noexcept {
  const double full = static_cast<double>(interval_ms) / 1000.0 * rate_for(c);
  const auto n = static_cast<std::size_t>(std::floor(full + 1e-9)) + 1;
  return std::min(max_wavelet_levels, haar_levels(n));
}

namespace {

void push_missing(FeatureVector& fv, const std::string& prefix, const std::vector<std::string>& names) {
  for (const auto& n : names) fv.push(prefix + "." + n, kMissing);
}

// Statistical features on the raw event-derived values, wavelet and Fourier
// features on the uniformly resampled series.
void general_battery(FeatureVector& fv, const std::string& prefix, std::span<const TimedValue> points,
                     Millis start, Millis end, double rate_hz, std::size_t levels) {
  if (points.empty()) {
    push_missing(fv, prefix, stat_feature_names());
    push_missing(fv, prefix + ".wavelet", wavelet_feature_names(levels));
    push_missing(fv, prefix + ".fourier", fourier_feature_names());
    return;
  }
  std::vector<double> raw;
  raw.reserve(points.size());
  for (const auto& p : points) raw.push_back(p.value);
  fv.append(prefix, stat_features(raw));

  const auto uniform = resample_uniform(points, start, end, rate_hz);
  fv.append(prefix + ".wavelet", wavelet_features(uniform.values, levels));
  if (uniform.values.size() >= 2)
    fv.append(prefix + ".fourier", fourier_features(uniform.values, rate_hz));
  else
    push_missing(fv, prefix + ".fourier", fourier_feature_names());
}

template <class E, class XY>
void motion_series(std::span<const E> events, XY&& xy, std::vector<TimedValue>& xs,
                   std::vector<TimedValue>& ys, std::vector<TimedValue>& steps,
                   std::vector<TimedValue>& speeds) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto [x, y] = xy(events[i]);
    const Millis t = timestamp_of(events[i]);
    xs.push_back({t, x});
    ys.push_back({t, y});
    if (i == 0) continue;
    const auto [px, py] = xy(events[i - 1]);
    const double d = std::hypot(x - px, y - py);
    const double dt = std::max<double>(1.0, static_cast<double>(t - timestamp_of(events[i - 1]))) / 1000.0;
    steps.push_back({t, d});
    speeds.push_back({t, d / dt});
  }
}

std::string window_tag(Channel c, Millis start) {
  return std::string(channel_name(c)) + "@" + std::to_string(start);
}

}  // namespace

FeatureVector channel_features(const Window<GazeEvent>& w, const FeatureConfig& cfg) {
  const std::string p = channel_name(Channel::Eye);
  const double rate = cfg.gaze_rate_hz;
  const auto levels = cfg.wavelet_levels_for(Channel::Eye);
  FeatureVector fv;
  fv.provenance = window_tag(Channel::Eye, w.start);
  std::vector<TimedValue> xs, ys, steps, speeds;
  motion_series(std::span<const GazeEvent>(w.events),
                [](const GazeEvent& e) { return std::pair{e.x, e.y}; }, xs, ys, steps, speeds);
  general_battery(fv, p + ".x", xs, w.start, w.end, rate, levels);
  general_battery(fv, p + ".y", ys, w.start, w.end, rate, levels);
  general_battery(fv, p + ".step_distance", steps, w.start, w.end, rate, levels);
  general_battery(fv, p + ".speed", speeds, w.start, w.end, rate, levels);
  if (w.events.empty()) {
    push_missing(fv, p, {"avg_move_dist", "horizontal_mobility"});
  } else {
    fv.append(p, gaze_subjective(w.events));
  }
  return fv;
}

FeatureVector channel_features(const Window<MouseEvent>& w, const FeatureConfig& cfg) {
  const std::string p = channel_name(Channel::Mouse);
  const double rate = cfg.mouse_rate_hz;
  const auto levels = cfg.wavelet_levels_for(Channel::Mouse);
  FeatureVector fv;
  fv.provenance = window_tag(Channel::Mouse, w.start);
  std::vector<TimedValue> xs, ys, steps, speeds, wheel;
  motion_series(std::span<const MouseEvent>(w.events),
                [](const MouseEvent& e) { return std::pair{e.x, e.y}; }, xs, ys, steps, speeds);
  double cumulative = 0.0;
  for (const auto& e : w.events) {
    cumulative += static_cast<double>(e.wheel);
    wheel.push_back({e.time, cumulative});
  }
  general_battery(fv, p + ".x", xs, w.start, w.end, rate, levels);
  general_battery(fv, p + ".y", ys, w.start, w.end, rate, levels);
  general_battery(fv, p + ".step_distance", steps, w.start, w.end, rate, levels);
  general_battery(fv, p + ".speed", speeds, w.start, w.end, rate, levels);
  general_battery(fv, p + ".wheel_cumulative", wheel, w.start, w.end, rate, levels);

  const std::vector<std::string> counts{"n_moves", "n_left_clicks", "n_right_clicks", "n_wheel",
                                        "mean_inter_click_s"};
  if (w.events.empty()) {
    push_missing(fv, p, counts);
    return fv;
  }
  double moves = 0, left = 0, right = 0, wheels = 0;
  std::vector<Millis> clicks;
  for (const auto& e : w.events) {
    switch (e.message) {
      case MouseMessage::Move: ++moves; break;
      case MouseMessage::LeftDown: ++left; clicks.push_back(e.time); break;
      case MouseMessage::RightDown: ++right; clicks.push_back(e.time); break;
      case MouseMessage::Wheel: ++wheels; break;
      default: break;
    }
  }
  double interval = kMissing;
  if (clicks.size() >= 2)
    interval = static_cast<double>(clicks.back() - clicks.front()) /
               static_cast<double>(clicks.size() - 1) / 1000.0;
  fv.push(p + ".n_moves", moves);
  fv.push(p + ".n_left_clicks", left);
  fv.push(p + ".n_right_clicks", right);
  fv.push(p + ".n_wheel", wheels);
  fv.push(p + ".mean_inter_click_s", interval);
  return fv;
}

FeatureVector channel_features(const Window<FrameSample>& w, const FeatureConfig& cfg) {
  const std::string p = channel_name(Channel::Video);
  const double rate = cfg.frame_rate_hz;
  const auto levels = cfg.wavelet_levels_for(Channel::Video);
  FeatureVector fv;
  fv.provenance = window_tag(Channel::Video, w.start);

  auto series = [&](auto&& pick) {
    std::vector<TimedValue> pts;
    pts.reserve(w.events.size());
    for (const auto& s : w.events) pts.push_back({s.timestamp, pick(s)});
    return pts;
  };
  general_battery(fv, p + ".yaw", series([](const FrameSample& s) { return s.yaw; }), w.start, w.end,
                  rate, levels);
  general_battery(fv, p + ".pitch", series([](const FrameSample& s) { return s.pitch; }), w.start,
                  w.end, rate, levels);
  general_battery(fv, p + ".roll", series([](const FrameSample& s) { return s.roll; }), w.start,
                  w.end, rate, levels);
  for (std::size_t k = 0; k < kEmotionCount; ++k)
    general_battery(fv, p + "." + kEmotionNames[k],
                    series([k](const FrameSample& s) { return s.emotion[k]; }), w.start, w.end, rate,
                    levels);

  std::vector<std::string> summary;
  for (auto* e : kEmotionNames) {
    summary.push_back(std::string("emotion.") + e + "_mean");
    summary.push_back(std::string("emotion.") + e + "_max");
  }
  for (auto* e : kEmotionNames) summary.push_back(std::string("emotion.argmax_") + e);
  if (w.events.empty()) {
    push_missing(fv, p, summary);
    return fv;
  }
  std::array<double, kEmotionCount> sum{}, mx{}, hist{};
  for (const auto& s : w.events) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < kEmotionCount; ++k) {
      sum[k] += s.emotion[k];
      mx[k] = std::max(mx[k], s.emotion[k]);
      if (s.emotion[k] > s.emotion[best]) best = k;
    }
    hist[best] += 1.0;
  }
  const double n = static_cast<double>(w.events.size());
  std::size_t i = 0;
  for (std::size_t k = 0; k < kEmotionCount; ++k) {
    fv.push(p + "." + summary[i++], sum[k] / n);
    fv.push(p + "." + summary[i++], mx[k]);
  }
  for (std::size_t k = 0; k < kEmotionCount; ++k) fv.push(p + "." + summary[i++], hist[k] / n);
  return fv;
}

std::vector<std::string> channel_feature_names(Channel channel, const FeatureConfig& config) {
  switch (channel) {
    case Channel::Eye: {
      Window<GazeEvent> w;
      w.channel = channel;
      return channel_features(w, config).names;
    }
    case Channel::Mouse: {
      Window<MouseEvent> w;
      w.channel = channel;
      return channel_features(w, config).names;
    }
    case Channel::Video: {
      Window<FrameSample> w;
      w.channel = channel;
      return channel_features(w, config).names;
    }
  }
  return {};
}

std::size_t general_battery_size(Channel channel, const FeatureConfig& config) {
  const std::size_t per_series =
      stat_feature_names().size() + 2 * config.wavelet_levels_for(channel) + 2 + fourier_feature_names().size();
  const std::size_t series = channel == Channel::Eye ? 4 : channel == Channel::Mouse ? 5 : 3 + kEmotionCount;
  return series * per_series;
}

// ---------------------------------------------------------------------------
// Aggregation and assembly

FeatureVector unit_features(std::span<const FeatureVector> windows) {
  if (windows.empty()) throw Error(ErrorCode::NoWindows, "unit has no window feature vectors");
  const auto& names = windows.front().names;
  for (const auto& w : windows)
    if (w.names != names) throw Error(ErrorCode::InconsistentNames, "window feature names differ");
  FeatureVector fv;
  for (std::size_t j = 0; j < names.size(); ++j) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& w : windows)
      if (!is_missing(w.values[j])) {
        sum += w.values[j];
        ++n;
      }
    double mean = kMissing, sd = kMissing;
    if (n > 0) {
      mean = sum / static_cast<double>(n);
      double ss = 0.0;
      for (const auto& w : windows)
        if (!is_missing(w.values[j])) ss += (w.values[j] - mean) * (w.values[j] - mean);
      sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    }
    fv.push(names[j] + ".wmean", mean);
    fv.push(names[j] + ".wstd", sd);
  }
  return fv;
}

AssembledMatrix assemble_matrix(std::span<const UnitRow> rows) {
  AssembledMatrix out;
  if (rows.empty()) return out;
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return rows[a].start < rows[b].start; });
  const auto& names = rows.front().features.names;
  for (const auto& r : rows)
    if (r.features.names != names || r.features.values.size() != names.size())
      throw Error(ErrorCode::InconsistentNames,
                  "unit '" + r.unit_id + "' has a different feature name list");

  std::vector<std::size_t> kept;
  std::vector<double> fill;
  for (std::size_t j = 0; j < names.size(); ++j) {
    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& r : rows)
      if (!is_missing(r.features.values[j])) {
        sum += r.features.values[j];
        ++present;
      }
    if (present == 0) {
      out.report.dropped.push_back(names[j]);
      out.report.warnings.push_back("dropped all-missing column " + names[j]);
      continue;
    }
    const double mean = sum / static_cast<double>(present);
    if (present < rows.size()) out.report.imputed.push_back({names[j], rows.size() - present, mean});
    kept.push_back(j);
    fill.push_back(mean);
  }

  auto& m = out.matrix;
  m.values = Matrix(rows.size(), kept.size());
  for (auto j : kept) m.columns.push_back(names[j]);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = rows[order[i]];
    m.row_ids.push_back(r.unit_id);
    for (std::size_t c = 0; c < kept.size(); ++c) {
      const double v = r.features.values[kept[c]];
      m.values(i, c) = is_missing(v) ? fill[c] : v;
    }
  }
  return out;
}

std::string matrix_to_csv(const FeatureMatrix& m) {
  std::string out = "unit_id";
  for (const auto& c : m.columns) {
    out += ',';
    out += c;
  }
  out += '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += m.row_ids[i];
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out += ',';
      out += text::format_double(m.values(i, j));
    }
    out += '\n';
  }
  return out;
}

FeatureMatrix matrix_from_csv(std::string_view csv) {
  auto all = text::lines(csv);
  while (!all.empty() && text::trim(all.back()).empty()) all.pop_back();
  if (all.empty()) throw Error(ErrorCode::SchemaViolation, "feature CSV is empty");
  auto header = text::split(all[0]);
  if (text::trim(header[0]) != "unit_id")
    throw Error(ErrorCode::SchemaViolation, "feature CSV must start with a unit_id column");
  FeatureMatrix m;
  for (std::size_t j = 1; j < header.size(); ++j) m.columns.emplace_back(text::trim(header[j]));
  m.values = Matrix(all.size() - 1, m.columns.size());
  for (std::size_t i = 1; i < all.size(); ++i) {
    auto f = text::split(all[i]);
    if (f.size() != header.size())
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(i + 1) + ": wrong field count", i + 1);
    m.row_ids.emplace_back(text::trim(f[0]));
    for (std::size_t j = 1; j < f.size(); ++j) {
      auto v = text::parse_double(f[j]);
      if (!v) throw Error(ErrorCode::MalformedLine, "line " + std::to_string(i + 1) + ": bad number", i + 1);
      m.values(i - 1, j - 1) = *v;
    }
  }
  return m;
}

std::string assembly_sidecar_json(const AssembledMatrix& m) {
  nlohmann::json doc;
  doc["rows"] = m.matrix.rows();
  doc["columns"] = m.matrix.cols();
  auto imputed = nlohmann::json::array();
  for (const auto& c : m.report.imputed)
    imputed.push_back({{"column", c.column}, {"count", c.count}, {"value", c.value}});
  doc["imputed"] = std::move(imputed);
  doc["dropped"] = m.report.dropped;
  doc["warnings"] = m.report.warnings;
  return doc.dump(2) + "\n";
}

}  // namespace fuselearn
