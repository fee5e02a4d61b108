#include "fuselearn/ingest.hpp"

#include <cctype>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "fuselearn/error.hpp"
#include "fuselearn/text.hpp"

namespace fuselearn {

using nlohmann::json;

const char* channel_name(Channel c) noexcept {
  switch (c) {
    case Channel::Video: return "video";
    case Channel::Eye: return "eye";
    case Channel::Mouse: return "mouse";
  }
  return "?";
}

Channel parse_channel(std::string_view name) {
  if (name == "video" || name == "frames" || name == "image") return Channel::Video;
  if (name == "eye" || name == "gaze") return Channel::Eye;
  if (name == "mouse") return Channel::Mouse;
  throw Error(ErrorCode::InvalidArgument, "unknown channel '" + std::string(name) + "'");
}

const char* to_string(GazeEventType t) noexcept {
  switch (t) {
    case GazeEventType::Fixation: return "fixation";
    case GazeEventType::Saccade: return "saccade";
    case GazeEventType::Unclassified: return "unclassified";
  }
  return "unclassified";
}

const char* to_string(MouseMessage m) noexcept {
  switch (m) {
    case MouseMessage::Move: return "move";
    case MouseMessage::LeftDown: return "left_down";
    case MouseMessage::LeftUp: return "left_up";
    case MouseMessage::RightDown: return "right_down";
    case MouseMessage::RightUp: return "right_up";
    case MouseMessage::Wheel: return "wheel";
  }
  return "move";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + why, line_no);
}

// Calls fn(fields, line_no) for every non-blank data line. Line 1 is treated
// as a header when its first field is the expected column name.
template <class Fn>
void for_each_record(std::string_view text, std::string_view header_token, std::size_t arity,
                     Fn&& fn) {
  auto all = text::lines(text);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto line = text::trim(all[i]);
    if (line.empty()) continue;
    auto fields = text::split(line);
    if (i == 0 && lower(text::trim(fields[0])) == header_token) continue;
    if (fields.size() != arity)
      malformed(line_no, "expected " + std::to_string(arity) + " fields, got " +
                             std::to_string(fields.size()));
    fn(fields, line_no);
  }
}

Millis field_time(std::string_view s, std::size_t line_no, const char* what) {
  auto v = text::parse_int(s);
  if (!v) malformed(line_no, std::string("non-integer ") + what);
  if (*v < 0) malformed(line_no, std::string("negative ") + what);
  return *v;
}

double field_real(std::string_view s, std::size_t line_no, const char* what) {
  auto v = text::parse_double(s);
  if (!v || !std::isfinite(*v)) malformed(line_no, std::string("non-numeric ") + what);
  return *v;
}

}  // namespace

GazeParse parse_gaze(std::string_view text) {
  GazeParse out;
  for_each_record(text, "timestamp", 4, [&](const auto& f, std::size_t ln) {
    GazeEvent e;
    e.timestamp = field_time(f[0], ln, "timestamp");
    const auto token = lower(text::trim(f[1]));
    if (token == "fixation") {
      e.type = GazeEventType::Fixation;
    } else if (token == "saccade") {
      e.type = GazeEventType::Saccade;
    } else {
      e.type = GazeEventType::Unclassified;
      if (token != "unclassified") ++out.unknown_event_types;
    }
    e.x = field_real(f[2], ln, "x");
    e.y = field_real(f[3], ln, "y");
    out.events.push_back(e);
  });
  return out;
}

std::vector<MouseEvent> parse_mouse(std::string_view text) {
  std::vector<MouseEvent> out;
  for_each_record(text, "message", 5, [&](const auto& f, std::size_t ln) {
    MouseEvent e;
    const auto token = lower(text::trim(f[0]));
    if (token == "move") e.message = MouseMessage::Move;
    else if (token == "left_down") e.message = MouseMessage::LeftDown;
    else if (token == "left_up") e.message = MouseMessage::LeftUp;
    else if (token == "right_down") e.message = MouseMessage::RightDown;
    else if (token == "right_up") e.message = MouseMessage::RightUp;
    else if (token == "wheel") e.message = MouseMessage::Wheel;
    else malformed(ln, "unknown mouse message '" + token + "'");
    e.time = field_time(f[1], ln, "time");
    e.x = field_real(f[2], ln, "x");
    e.y = field_real(f[3], ln, "y");
    auto wheel = text::parse_int(f[4]);
    if (!wheel) malformed(ln, "non-integer wheel");
    if (*wheel != 0 && e.message != MouseMessage::Wheel)
      malformed(ln, "wheel delta on a non-wheel message");
    e.wheel = *wheel;
    out.push_back(e);
  });
  return out;
}

std::vector<FrameSample> parse_frames(std::string_view text) {
  std::vector<FrameSample> out;
  for_each_record(text, "timestamp", 4 + kEmotionCount, [&](const auto& f, std::size_t ln) {
    FrameSample s;
    s.timestamp = field_time(f[0], ln, "timestamp");
    s.yaw = field_real(f[1], ln, "yaw");
    s.pitch = field_real(f[2], ln, "pitch");
    s.roll = field_real(f[3], ln, "roll");
    for (double a : {s.yaw, s.pitch, s.roll})
      if (std::abs(a) > 1.0)
        throw Error(ErrorCode::PoseOutOfRange,
                    "line " + std::to_string(ln) + ": head pose angle outside [-1,1]", ln);
    double sum = 0.0;
    for (std::size_t k = 0; k < kEmotionCount; ++k) {
      s.emotion[k] = field_real(f[4 + k], ln, "emotion score");
      if (s.emotion[k] < 0.0)
        throw Error(ErrorCode::EmotionNotSimplex,
                    "line " + std::to_string(ln) + ": negative emotion score", ln);
      sum += s.emotion[k];
    }
    if (std::abs(sum - 1.0) > 1e-3)
      throw Error(ErrorCode::EmotionNotSimplex,
                  "line " + std::to_string(ln) + ": emotion scores sum to " +
                      text::format_double(sum),
                  ln);
    for (auto& v : s.emotion) v /= sum;
    out.push_back(s);
  });
  return out;
}

std::string format_gaze(std::span<const GazeEvent> events) {
  std::string out = "timestamp,event_type,x,y\n";
  for (const auto& e : events) {
    out += std::to_string(e.timestamp);
    out += ',';
    out += to_string(e.type);
    out += ',';
    out += text::format_double(e.x);
    out += ',';
    out += text::format_double(e.y);
    out += '\n';
  }
  return out;
}

std::string format_mouse(std::span<const MouseEvent> events) {
  std::string out = "message,time,x,y,wheel\n";
  for (const auto& e : events) {
    out += to_string(e.message);
    out += ',';
    out += std::to_string(e.time);
    out += ',';
    out += text::format_double(e.x);
    out += ',';
    out += text::format_double(e.y);
    out += ',';
    out += std::to_string(e.wheel);
    out += '\n';
  }
  return out;
}

std::string format_frames(std::span<const FrameSample> samples) {
  std::string out = "timestamp,yaw,pitch,roll";
  for (auto* name : kEmotionNames) {
    out += ",e_";
    out += name;
  }
  out += '\n';
  for (const auto& s : samples) {
    out += std::to_string(s.timestamp);
    for (double v : {s.yaw, s.pitch, s.roll}) {
      out += ',';
      out += text::format_double(v);
    }
    for (double v : s.emotion) {
      out += ',';
      out += text::format_double(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

[[noreturn]] void schema(const std::string& why) { throw Error(ErrorCode::SchemaViolation, why); }

void check_range(double v, double lo, double hi, const std::string& what) {
  if (!(v >= lo && v <= hi))
    throw Error(ErrorCode::EvalOutOfRange, what + " = " + text::format_double(v) +
                                               " outside [" + text::format_double(lo) + ", " +
                                               text::format_double(hi) + "]");
}

template <class T>
T get_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) schema(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    schema(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

Session load_manifest(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    schema(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) schema("manifest must be a JSON object");

  Session s;
  if (!doc.contains("learner") || !doc["learner"].is_object()) schema("missing 'learner' object");
  const auto& lj = doc["learner"];
  s.learner.name = lj.value("name", "");
  s.learner.major = lj.value("major", "");
  s.learner.sex = lj.value("sex", "");
  s.learner.age = lj.value("age", 0);
  s.learner.mastery = get_field<double>(lj, "mastery", "learner");
  check_range(s.learner.mastery, 0.0, 100.0, "learner.mastery");

  if (!doc.contains("channels") || !doc["channels"].is_object())
    throw Error(ErrorCode::MissingChannelFile, "missing 'channels' object");
  const auto& cj = doc["channels"];
  auto channel_path = [&](const char* key) {
    if (!cj.contains(key) || !cj[key].is_string() || cj[key].get<std::string>().empty())
      throw Error(ErrorCode::MissingChannelFile, std::string("no file given for channel '") + key + "'");
    return cj[key].get<std::string>();
  };
  s.channels.gaze = channel_path("gaze");
  s.channels.mouse = channel_path("mouse");
  s.channels.frames = channel_path("frames");

  if (!doc.contains("units") || !doc["units"].is_array()) schema("missing 'units' array");
  for (std::size_t i = 0; i < doc["units"].size(); ++i) {
    const auto& uj = doc["units"][i];
    const std::string where = "units[" + std::to_string(i) + "]";
    if (!uj.is_object()) schema(where + " must be an object");
    LearningUnit u;
    u.unit_id = get_field<std::string>(uj, "unit_id", where);
    u.start = get_field<Millis>(uj, "start_ms", where);
    u.end = get_field<Millis>(uj, "end_ms", where);
    u.self_eval = get_field<double>(uj, "self_eval", where);
    u.class_eval = get_field<double>(uj, "class_eval", where);
    u.mastery = uj.contains("mastery") ? get_field<double>(uj, "mastery", where) : s.learner.mastery;
    if (u.unit_id.empty()) schema(where + ": empty unit_id");
    if (u.start < 0 || u.end <= u.start) schema(where + ": requires 0 <= start_ms < end_ms");
    check_range(u.self_eval, 10.0, 100.0, u.unit_id + ".self_eval");
    check_range(u.class_eval, 0.0, 100.0, u.unit_id + ".class_eval");
    check_range(u.mastery, 0.0, 100.0, u.unit_id + ".mastery");
    s.units.push_back(std::move(u));
  }
  std::stable_sort(s.units.begin(), s.units.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < s.units.size(); ++i) {
    if (s.units[i].start < s.units[i - 1].end)
      throw Error(ErrorCode::OverlappingUnits,
                  "unit '" + s.units[i - 1].unit_id + "' overlaps '" + s.units[i].unit_id + "'");
  }
  std::vector<std::string> ids;
  for (const auto& u : s.units) ids.push_back(u.unit_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) schema("duplicate unit_id");
  return s;
}

Session load_manifest_file(const std::filesystem::path& path) {
  Session s = load_manifest(text::read_file(path));
  const auto base = path.parent_path();
  for (auto* p : {&s.channels.gaze, &s.channels.mouse, &s.channels.frames}) {
    std::filesystem::path resolved = *p;
    if (resolved.is_relative()) resolved = base / resolved;
    if (!std::filesystem::is_regular_file(resolved))
      throw Error(ErrorCode::MissingChannelFile, "channel file not found: " + resolved.string());
    *p = resolved.string();
  }
  return s;
}

std::string format_manifest(const Session& session) {
  json doc;
  doc["learner"] = {{"name", session.learner.name},
                    {"major", session.learner.major},
                    {"sex", session.learner.sex},
                    {"age", session.learner.age},
                    {"mastery", session.learner.mastery}};
  doc["channels"] = {{"gaze", session.channels.gaze},
                     {"mouse", session.channels.mouse},
                     {"frames", session.channels.frames}};
  json units = json::array();
  for (const auto& u : session.units) {
    json uj = {{"unit_id", u.unit_id},   {"start_ms", u.start},
               {"end_ms", u.end},        {"self_eval", u.self_eval},
               {"class_eval", u.class_eval}};
    if (u.mastery != session.learner.mastery) uj["mastery"] = u.mastery;
    units.push_back(std::move(uj));
  }
  doc["units"] = std::move(units);
  return doc.dump(2) + "\n";
}

UniformSeries resample_uniform(std::span<const TimedValue> points, Millis start, Millis end,
                               double rate_hz) {
  UniformSeries out;
  out.rate_hz = rate_hz;
  if (points.empty() || rate_hz <= 0.0 || end < start) return out;
  out.empty = false;
  const double duration_s = static_cast<double>(end - start) / 1000.0;
  const auto n = static_cast<std::size_t>(std::floor(duration_s * rate_hz + 1e-9)) + 1;
  const double step_ms = 1000.0 / rate_hz;
  out.values.resize(n);
  std::size_t j = 0;  // first point with t > grid time
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(start) + static_cast<double>(i) * step_ms;
    while (j < points.size() && static_cast<double>(points[j].t) <= t) ++j;
    if (j == 0) {
      out.values[i] = points.front().value;
    } else if (j == points.size()) {
      out.values[i] = points.back().value;
    } else {
      const auto& a = points[j - 1];
      const auto& b = points[j];
      const double frac = (t - static_cast<double>(a.t)) / static_cast<double>(b.t - a.t);
      out.values[i] = a.value + frac * (b.value - a.value);
    }
  }
  return out;
}

}  // namespace fuselearn
