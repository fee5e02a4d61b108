#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fuselearn/ingest.hpp"

namespace fuselearn {

// Generator for sessions whose channel statistics are driven by a latent
// per-unit learning state L ~ U[0.2, 0.95]. Each channel sees its own noisy
// copy of L; `beta` mixes that copy with an independent draw, so beta = 0
// decouples the channel from L entirely.
struct SynthConfig {
  std::size_t n_units = 200;
  Millis min_unit_ms = 5 * 60'000;
  Millis max_unit_ms = 15 * 60'000;
  Millis max_gap_ms = 30'000;
  Millis epoch_ms = 1'530'000'000'000;
  std::uint64_t seed = 1;

  double beta_video = 1.0;
  double beta_eye = 1.0;
  double beta_mouse = 1.0;

  // Per-unit standard deviation of each channel's view of L.
  double noise_video = 0.10;
  double noise_eye = 0.20;
  double noise_mouse = 0.12;
  // Evaluation noise as a fraction of each evaluation's scale.
  double noise_label = 0.05;

  // Raw event rates of the generated streams.
  double gaze_event_hz = 4.0;
  double mouse_move_hz = 6.0;
  double frame_hz = 5.0;

  void validate() const;
  std::string to_json() const;
  static SynthConfig from_json(std::string_view text);
};

struct SynthSession {
  Session session;
  std::vector<GazeEvent> gaze;
  std::vector<MouseEvent> mouse;
  std::vector<FrameSample> frames;
  std::vector<double> latent;  // per unit, in unit order
};

SynthSession generate_session(const SynthConfig& config);

// Writes manifest.json, gaze.csv, mouse.csv, frames.csv and ground_truth.csv.
void write_session(const SynthSession& s, const std::filesystem::path& out_dir);

}  // namespace fuselearn
