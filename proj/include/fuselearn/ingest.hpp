#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fuselearn {

using Millis = std::int64_t;

// The three modalities, in fusion order.
enum class Channel { Video = 0, Eye = 1, Mouse = 2 };
inline constexpr std::array<Channel, 3> kAllChannels{Channel::Video, Channel::Eye, Channel::Mouse};

const char* channel_name(Channel c) noexcept;  // "video", "eye", "mouse"
// Accepts the channel names plus the file-oriented aliases frames/gaze.
Channel parse_channel(std::string_view name);

enum class GazeEventType { Fixation, Saccade, Unclassified };
enum class MouseMessage { Move, LeftDown, LeftUp, RightDown, RightUp, Wheel };

const char* to_string(GazeEventType t) noexcept;
const char* to_string(MouseMessage m) noexcept;

struct GazeEvent {
  Millis timestamp = 0;
  GazeEventType type = GazeEventType::Unclassified;
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const GazeEvent&, const GazeEvent&) = default;
};

struct MouseEvent {
  MouseMessage message = MouseMessage::Move;
  Millis time = 0;
  double x = 0.0;
  double y = 0.0;
  std::int64_t wheel = 0;
  friend bool operator==(const MouseEvent&, const MouseEvent&) = default;
};

inline constexpr std::size_t kEmotionCount = 7;
inline constexpr std::array<const char*, kEmotionCount> kEmotionNames{
    "happiness", "sadness", "surprise", "fear", "anger", "disgust", "neutral"};

struct FrameSample {
  Millis timestamp = 0;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  std::array<double, kEmotionCount> emotion{};
  friend bool operator==(const FrameSample&, const FrameSample&) = default;
};

inline Millis timestamp_of(const GazeEvent& e) { return e.timestamp; }
inline Millis timestamp_of(const MouseEvent& e) { return e.time; }
inline Millis timestamp_of(const FrameSample& e) { return e.timestamp; }

template <class E>
concept TimedEvent = requires(const E& e) {
  { timestamp_of(e) } -> std::convertible_to<Millis>;
};

struct GazeParse {
  std::vector<GazeEvent> events;
  std::size_t unknown_event_types = 0;  // tokens mapped to Unclassified
};

GazeParse parse_gaze(std::string_view text);
std::vector<MouseEvent> parse_mouse(std::string_view text);
std::vector<FrameSample> parse_frames(std::string_view text);

// Serializers write the canonical header followed by one event per line.
std::string format_gaze(std::span<const GazeEvent> events);
std::string format_mouse(std::span<const MouseEvent> events);
std::string format_frames(std::span<const FrameSample> samples);

struct LearnerProfile {
  std::string name;
  std::string major;
  std::string sex;
  int age = 0;
  double mastery = 0.0;  // [0, 100]
};

struct LearningUnit {
  std::string unit_id;
  Millis start = 0;
  Millis end = 0;
  double self_eval = 10.0;   // [10, 100]
  double class_eval = 0.0;   // [0, 100]
  double mastery = 0.0;      // [0, 100]; learner mastery unless overridden per unit
};

struct ChannelFiles {
  std::string gaze;
  std::string mouse;
  std::string frames;
};

struct Session {
  LearnerProfile learner;
  ChannelFiles channels;
  std::vector<LearningUnit> units;  // sorted by start, non-overlapping
};

Session load_manifest(std::string_view json_text);
// Also resolves channel paths against the manifest directory and checks they exist.
Session load_manifest_file(const std::filesystem::path& path);
std::string format_manifest(const Session& session);

template <TimedEvent E>
std::vector<E> slice_unit(std::span<const E> stream, const LearningUnit& unit) {
  std::vector<E> out;
  for (const auto& e : stream) {
    const Millis t = timestamp_of(e);
    if (t >= unit.start && t < unit.end) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const E& a, const E& b) { return timestamp_of(a) < timestamp_of(b); });
  return out;
}

template <TimedEvent E>
struct Window {
  Channel channel = Channel::Eye;
  Millis start = 0;
  Millis end = 0;
  std::vector<E> events;  // timestamps in [start, end), sorted

  double duration_seconds() const { return static_cast<double>(end - start) / 1000.0; }
};

// Tiles [unit.start, unit.end) with half-open windows of interval_ms; the
// last window may be shorter.
template <TimedEvent E>
std::vector<Window<E>> cut_windows(std::span<const E> unit_stream, const LearningUnit& unit,
                                   Millis interval_ms, Channel channel) {
  std::vector<Window<E>> out;
  if (interval_ms <= 0 || unit.end <= unit.start) return out;
  const Millis span = unit.end - unit.start;
  const Millis count = (span + interval_ms - 1) / interval_ms;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t cursor = 0;
  std::vector<E> sorted(unit_stream.begin(), unit_stream.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const E& a, const E& b) { return timestamp_of(a) < timestamp_of(b); });
  while (cursor < sorted.size() && timestamp_of(sorted[cursor]) < unit.start) ++cursor;
  for (Millis k = 0; k < count; ++k) {
    Window<E> w;
    w.channel = channel;
    w.start = unit.start + k * interval_ms;
    w.end = std::min(w.start + interval_ms, unit.end);
    while (cursor < sorted.size() && timestamp_of(sorted[cursor]) < w.end) {
      w.events.push_back(sorted[cursor]);
      ++cursor;
    }
    out.push_back(std::move(w));
  }
  return out;
}

struct TimedValue {
  Millis t = 0;
  double value = 0.0;
};

struct UniformSeries {
  std::vector<double> values;
  double rate_hz = 0.0;
  bool empty = true;  // no events fell in the window
};

// Samples [start, end] on a 1/rate_hz grid. Points inside the event span are
// linearly interpolated between the bracketing events; outside it the
// nearest event value is held. Points must be sorted by t.
UniformSeries resample_uniform(std::span<const TimedValue> points, Millis start, Millis end,
                               double rate_hz);

template <TimedEvent E, class Selector>
UniformSeries resample_uniform(const Window<E>& window, double rate_hz, Selector&& value_of) {
  std::vector<TimedValue> pts;
  pts.reserve(window.events.size());
  for (const auto& e : window.events) pts.push_back({timestamp_of(e), value_of(e)});
  return resample_uniform(pts, window.start, window.end, rate_hz);
}

}  // namespace fuselearn
