#include "fuselearn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "fuselearn/error.hpp"
#include "fuselearn/random.hpp"
#include "fuselearn/text.hpp"

namespace fuselearn {

using nlohmann::json;

void SynthConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (n_units < 1) fail("n_units must be >= 1");
  if (min_unit_ms <= 0 || max_unit_ms < min_unit_ms) fail("unit duration range is invalid");
  if (max_gap_ms < 0 || epoch_ms < 0) fail("gap and epoch must be nonnegative");
  for (double b : {beta_video, beta_eye, beta_mouse})
    if (!(b >= 0.0 && b <= 1.0)) fail("coupling strengths must lie in [0,1]");
  for (double s : {noise_video, noise_eye, noise_mouse, noise_label})
    if (!(s >= 0.0) || !std::isfinite(s)) fail("noise scales must be nonnegative");
  for (double r : {gaze_event_hz, mouse_move_hz, frame_hz})
    if (!(r > 0.0) || !std::isfinite(r)) fail("event rates must be positive");
}

std::string SynthConfig::to_json() const {
  json j = {{"n_units", n_units},
            {"min_unit_ms", min_unit_ms},
            {"max_unit_ms", max_unit_ms},
            {"max_gap_ms", max_gap_ms},
            {"epoch_ms", epoch_ms},
            {"seed", seed},
            {"beta", {{"video", beta_video}, {"eye", beta_eye}, {"mouse", beta_mouse}}},
            {"noise", {{"video", noise_video}, {"eye", noise_eye}, {"mouse", noise_mouse}, {"label", noise_label}}},
            {"rates", {{"gaze", gaze_event_hz}, {"mouse", mouse_move_hz}, {"frames", frame_hz}}}};
  return j.dump(2) + "\n";
}

SynthConfig SynthConfig::from_json(std::string_view text) {
  SynthConfig c;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "synth config must be a JSON object");
    c.n_units = j.value("n_units", c.n_units);
    c.min_unit_ms = j.value("min_unit_ms", c.min_unit_ms);
    c.max_unit_ms = j.value("max_unit_ms", c.max_unit_ms);
    c.max_gap_ms = j.value("max_gap_ms", c.max_gap_ms);
    c.epoch_ms = j.value("epoch_ms", c.epoch_ms);
    c.seed = j.value("seed", c.seed);
    if (j.contains("beta")) {
      const auto& b = j["beta"];
      c.beta_video = b.value("video", c.beta_video);
      c.beta_eye = b.value("eye", c.beta_eye);
      c.beta_mouse = b.value("mouse", c.beta_mouse);
    }
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      c.noise_video = n.value("video", c.noise_video);
      c.noise_eye = n.value("eye", c.noise_eye);
      c.noise_mouse = n.value("mouse", c.noise_mouse);
      c.noise_label = n.value("label", c.noise_label);
    }
    if (j.contains("rates")) {
      const auto& r = j["rates"];
      c.gaze_event_hz = r.value("gaze", c.gaze_event_hz);
      c.mouse_move_hz = r.value("mouse", c.mouse_move_hz);
      c.frame_hz = r.value("frames", c.frame_hz);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

constexpr double kScreenW = 1920.0;
constexpr double kScreenH = 1080.0;

double reflect(double v, double hi) {
  while (v < 0.0 || v > hi) v = v < 0.0 ? -v : 2.0 * hi - v;
  return v;
}

// Division by an exact power of ten keeps the printed form short.
double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

// How disengaged the channel looks, in [0, 1]: a noisy view of 1 - L mixed
// with an unrelated draw according to the coupling strength.
double channel_drive(Rng& rng, double latent, double beta, double noise) {
  const double coupled = std::clamp(1.0 - latent + rng.normal(0.0, noise), 0.0, 1.0);
  const double unrelated = std::clamp(1.0 - rng.uniform(0.2, 0.95) + rng.normal(0.0, noise), 0.0, 1.0);
  return beta * coupled + (1.0 - beta) * unrelated;
}

void gaze_stream(Rng& rng, const LearningUnit& u, double d, double rate, std::vector<GazeEvent>& out) {
  double x = kScreenW / 2, y = kScreenH / 2;
  const double mean_gap = 1000.0 / rate * (1.3 - 0.6 * d);
  const double step = 40.0 + 260.0 * d;
  const double vertical = 0.35 + 0.65 * d;
  const double saccade_p = 0.1 + 0.5 * d;
  double t = static_cast<double>(u.start) + rng.uniform(0.0, mean_gap);
  while (t < static_cast<double>(u.end)) {
    GazeEvent e;
    e.timestamp = static_cast<Millis>(t);
    const bool saccade = rng.bernoulli(saccade_p);
    const double scale = saccade ? 2.0 * step : step;
    x = reflect(x + rng.normal(0.0, scale), kScreenW);
    y = reflect(y + rng.normal(0.0, scale * vertical), kScreenH);
    e.type = rng.bernoulli(0.02) ? GazeEventType::Unclassified
             : saccade           ? GazeEventType::Saccade
                                 : GazeEventType::Fixation;
    e.x = round_to(x, 1);
    e.y = round_to(y, 1);
    out.push_back(e);
    t += mean_gap * rng.uniform(0.5, 1.5);
  }
}

void mouse_stream(Rng& rng, const LearningUnit& u, double d, double rate, std::vector<MouseEvent>& out) {
  double x = kScreenW / 2, y = kScreenH / 2;
  const double idle = 0.15 + 0.6 * d;
  const double step = 15.0 + 60.0 * d;
  const double click_rate = 0.04 + 0.12 * (1.0 - d);
  const double wheel_p = 0.02 + 0.15 * d;
  std::vector<MouseEvent> second;
  for (Millis s = u.start; s < u.end; s += 1000) {
    const Millis limit = std::min<Millis>(1000, u.end - s);
    second.clear();
    auto at = [&](double frac) { return s + static_cast<Millis>(frac * static_cast<double>(limit - 1)); };
    if (!rng.bernoulli(idle)) {
      const unsigned moves = rng.poisson(rate * (0.5 + 0.5 * d));
      for (unsigned i = 0; i < moves; ++i) {
        x = reflect(x + rng.normal(0.0, step), kScreenW);
        y = reflect(y + rng.normal(0.0, step), kScreenH);
        second.push_back({MouseMessage::Move, at(rng.uniform()), round_to(x, 1), round_to(y, 1), 0});
      }
      const unsigned clicks = rng.poisson(click_rate);
      for (unsigned i = 0; i < clicks; ++i) {
        const bool right = rng.bernoulli(0.1);
        const Millis down = at(rng.uniform(0.0, 0.8));
        const Millis up = std::min<Millis>(down + 60 + static_cast<Millis>(rng.below(90)), s + limit - 1);
        const double cx = round_to(x, 1), cy = round_to(y, 1);
        second.push_back({right ? MouseMessage::RightDown : MouseMessage::LeftDown, down, cx, cy, 0});
        second.push_back({right ? MouseMessage::RightUp : MouseMessage::LeftUp, up, cx, cy, 0});
      }
    }
    if (rng.bernoulli(wheel_p)) {
      const unsigned burst = 2 + static_cast<unsigned>(rng.below(5));
      const std::int64_t dir = rng.bernoulli(0.7) ? -120 : 120;
      const double t0 = rng.uniform(0.0, 0.6);
      for (unsigned i = 0; i < burst; ++i)
        second.push_back({MouseMessage::Wheel, at(std::min(1.0, t0 + 0.05 * i)), round_to(x, 1), round_to(y, 1), dir});
    }
    std::stable_sort(second.begin(), second.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    out.insert(out.end(), second.begin(), second.end());
  }
}

void frame_stream(Rng& rng, const LearningUnit& u, double d, double rate, std::vector<FrameSample>& out) {
  const double amp = 0.05 + 0.45 * d;
  const double base[kEmotionCount] = {1.0 * (1.0 - d), 0.9 * d, 0.2, 0.6 * d, 0.5 * d, 0.4 * d, 1.5};
  double yaw = 0, pitch = 0, roll = 0;
  double wobble[kEmotionCount] = {};
  const double period = 1000.0 / rate;
  for (double t = static_cast<double>(u.start); t < static_cast<double>(u.end); t += period) {
    yaw = std::clamp(0.9 * yaw + rng.normal(0.0, 0.3 * amp), -1.0, 1.0);
    pitch = std::clamp(0.9 * pitch + rng.normal(0.0, 0.2 * amp), -1.0, 1.0);
    roll = std::clamp(0.8 * roll + rng.normal(0.0, 0.02 + 0.08 * d), -1.0, 1.0);
    FrameSample f;
    f.timestamp = static_cast<Millis>(t);
    f.yaw = round_to(yaw, 4);
    f.pitch = round_to(pitch, 4);
    f.roll = round_to(roll, 4);
    double z = 0.0;
    for (std::size_t k = 0; k < kEmotionCount; ++k) {
      wobble[k] = 0.8 * wobble[k] + rng.normal(0.0, 0.25);
      f.emotion[k] = std::exp(2.0 * base[k] + wobble[k]);
      z += f.emotion[k];
    }
    for (auto& e : f.emotion) e = round_to(e / z, 6);
    out.push_back(f);
  }
}

}  // namespace

SynthSession generate_session(const SynthConfig& cfg) {
  cfg.validate();
  SynthSession s;
  s.session.learner = {"synthetic-" + std::to_string(cfg.seed), "computer science", "unspecified", 20, 50.0};
  s.session.channels = {"gaze.csv", "mouse.csv", "frames.csv"};

  Rng timeline(derive_seed(cfg.seed, 0x74696d65ULL));
  Millis cursor = cfg.epoch_ms;
  for (std::size_t i = 0; i < cfg.n_units; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x756e6974ULL, i));
    const double latent = rng.uniform(0.2, 0.95);
    LearningUnit u;
    char id[32];
    std::snprintf(id, sizeof id, "u%04zu", i + 1);
    u.unit_id = id;
    u.start = cursor;
    u.end = cursor + cfg.min_unit_ms +
            static_cast<Millis>(timeline.below(static_cast<std::uint64_t>(cfg.max_unit_ms - cfg.min_unit_ms) + 1));
    cursor = u.end + static_cast<Millis>(timeline.below(static_cast<std::uint64_t>(cfg.max_gap_ms) + 1));
    u.mastery = round_to(std::clamp(100.0 * latent + rng.normal(0.0, 100.0 * cfg.noise_label), 0.0, 100.0), 1);
    u.self_eval =
        round_to(std::clamp(10.0 + 90.0 * latent + rng.normal(0.0, 90.0 * cfg.noise_label), 10.0, 100.0), 1);
    u.class_eval = round_to(std::clamp(100.0 * latent + rng.normal(0.0, 100.0 * cfg.noise_label), 0.0, 100.0), 1);

    Rng video(derive_seed(cfg.seed, i, 1)), eye(derive_seed(cfg.seed, i, 2)), mouse(derive_seed(cfg.seed, i, 3));
    frame_stream(video, u, channel_drive(video, latent, cfg.beta_video, cfg.noise_video), cfg.frame_hz, s.frames);
    gaze_stream(eye, u, channel_drive(eye, latent, cfg.beta_eye, cfg.noise_eye), cfg.gaze_event_hz, s.gaze);
    mouse_stream(mouse, u, channel_drive(mouse, latent, cfg.beta_mouse, cfg.noise_mouse), cfg.mouse_move_hz,
                 s.mouse);
    s.session.units.push_back(std::move(u));
    s.latent.push_back(latent);
  }
  return s;
}

void write_session(const SynthSession& s, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  text::write_file(out_dir / "manifest.json", format_manifest(s.session));
  text::write_file(out_dir / "gaze.csv", format_gaze(s.gaze));
  text::write_file(out_dir / "mouse.csv", format_mouse(s.mouse));
  text::write_file(out_dir / "frames.csv", format_frames(s.frames));
  std::string truth = "unit_id,latent\n";
  for (std::size_t i = 0; i < s.latent.size(); ++i)
    truth += s.session.units[i].unit_id + "," + text::format_double(s.latent[i]) + "\n";
  text::write_file(out_dir / "ground_truth.csv", truth);
}

}  // namespace fuselearn
