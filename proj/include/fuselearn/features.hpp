#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuselearn/ingest.hpp"
#include "fuselearn/matrix.hpp"

namespace fuselearn {

// Missing feature values are quiet NaNs; they are imputed in assemble_matrix.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) noexcept { return v != v; }

struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;
  std::string provenance;  // channel plus window or unit id

  std::size_t size() const noexcept { return values.size(); }
  void push(std::string name, double value);
  // Appends every feature of `other` with `prefix` + "." prepended.
  void append(std::string_view prefix, const FeatureVector& other);
  // Value by name; throws InvalidArgument when absent.
  double at(std::string_view name) const;
};

// count, mean, std, variance, min, max, range, median, q1, q3, iqr,
// skewness, kurtosis, rms, mean_abs_dev, zero_cross_rate, energy,
// diff_mean, diff_std, diff_abs_mean, autocorr_lag1.
//
// std/variance use the n-1 denominator. Skewness and excess kurtosis are the
// moment ratios m3/m2^1.5 and m4/m2^2 - 3. Quantiles interpolate linearly at
// position p*(n-1). Any ratio with a zero denominator is reported as 0.
FeatureVector stat_features(std::span<const double> series);
const std::vector<std::string>& stat_feature_names();

struct HaarPyramid {
  std::vector<std::vector<double>> details;  // details[0] is the finest level
  std::vector<double> approx;
  std::size_t levels() const noexcept { return details.size(); }
};

// min(5, floor(log2 n))
std::size_t haar_levels(std::size_t n) noexcept;

// Orthonormal Haar analysis. An odd-length input at any level is extended by
// repeating its last sample.
HaarPyramid haar_dwt(std::span<const double> series);
HaarPyramid haar_dwt(std::span<const double> series, std::size_t levels);

// Per detail level: d<j>_energy and d<j>_log_energy; then approx_energy and
// d1_ratio (finest detail energy over total coefficient energy).
FeatureVector wavelet_features(std::span<const double> series);
// Fixed-size variant: always reports `levels` detail levels, marking as
// missing those the series is too short to support.
FeatureVector wavelet_features(std::span<const double> series, std::size_t levels);
std::vector<std::string> wavelet_feature_names(std::size_t levels);

// P_k = |X_k|^2 / n for k = 0..floor(n/2), X the unnormalized DFT.
std::vector<double> one_sided_power(std::span<const double> series);

// total_power, dc_power, dominant_freq_hz, dominant_power,
// spectral_centroid_hz, spectral_spread_hz, spectral_entropy (bits), and
// band1..band4 power over the octave bands (0, f/8], (f/8, f/4],
// (f/4, f/2], (f/2, f] with f the Nyquist frequency. Everything except
// total_power and dc_power is computed over bins k >= 1.
FeatureVector fourier_features(std::span<const double> series, double rate_hz);
const std::vector<std::string>& fourier_feature_names();

// avg_move_dist and horizontal_mobility over consecutive gaze points.
FeatureVector gaze_subjective(std::span<const GazeEvent> events);

struct FeatureConfig {
  Millis interval_ms = 60'000;
  double gaze_rate_hz = 30.0;
  double mouse_rate_hz = 20.0;
  double frame_rate_hz = 15.0;
  std::size_t max_wavelet_levels = 5;

  double rate_for(Channel c) const noexcept;
  // Detail levels used by the battery: haar_levels of a full window's
  // resampled length, capped by max_wavelet_levels.
  std::size_t wavelet_levels_for(Channel c) const noexcept;
};

FeatureVector channel_features(const Window<GazeEvent>& window, const FeatureConfig& config);
FeatureVector channel_features(const Window<MouseEvent>& window, const FeatureConfig& config);
FeatureVector channel_features(const Window<FrameSample>& window, const FeatureConfig& config);

std::vector<std::string> channel_feature_names(Channel channel, const FeatureConfig& config);
// Number of features produced by the general battery alone for a channel.
std::size_t general_battery_size(Channel channel, const FeatureConfig& config);

// Mean (.wmean) and n-1 std (.wstd) across windows, skipping missing values.
FeatureVector unit_features(std::span<const FeatureVector> windows);

struct UnitRow {
  std::string unit_id;
  Millis start = 0;
  FeatureVector features;
};

struct ImputedColumn {
  std::string column;
  std::size_t count = 0;
  double value = 0.0;
};

struct AssemblyReport {
  std::vector<ImputedColumn> imputed;
  std::vector<std::string> dropped;
  std::vector<std::string> warnings;
};

struct AssembledMatrix {
  FeatureMatrix matrix;
  AssemblyReport report;
};

// Orders rows by unit start, mean-imputes missing entries per column and
// drops columns that are missing everywhere.
AssembledMatrix assemble_matrix(std::span<const UnitRow> rows);

std::string matrix_to_csv(const FeatureMatrix& m);
FeatureMatrix matrix_from_csv(std::string_view text);
std::string assembly_sidecar_json(const AssembledMatrix& m);

}  // namespace fuselearn
