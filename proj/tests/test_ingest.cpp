#include <doctest.h>

#include <filesystem>
#include <random>

#include "fuselearn/error.hpp"
#include "fuselearn/ingest.hpp"
#include "fuselearn/random.hpp"
#include "fuselearn/text.hpp"

using namespace fuselearn;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

std::size_t line_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.line();
  }
  return 0;
}

const char* kManifest = R"({
  "learner": {"name": "a", "major": "cs", "sex": "f", "age": 21, "mastery": 60},
  "channels": {"gaze": "gaze.csv", "mouse": "mouse.csv", "frames": "frames.csv"},
  "units": [
    {"unit_id": "u2", "start_ms": 600000, "end_ms": 1200000, "self_eval": 70, "class_eval": 80},
    {"unit_id": "u1", "start_ms": 0, "end_ms": 600000, "self_eval": 40, "class_eval": 55},
    {"unit_id": "u3", "start_ms": 1300000, "end_ms": 1900000, "self_eval": 100, "class_eval": 0, "mastery": 10}
  ]
})";

}  // namespace

TEST_CASE("gaze lines parse in field order") {
  const auto r = parse_gaze("1530000000123,fixation,512,384");
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0] == GazeEvent{1530000000123, GazeEventType::Fixation, 512.0, 384.0});
  CHECK(r.unknown_event_types == 0);
}

TEST_CASE("empty gaze text gives no events") {
  CHECK(parse_gaze("").events.empty());
  CHECK(parse_gaze("\n\n").events.empty());
}

TEST_CASE("gaze arity violation reports line 1") {
  CHECK(code_of([] { parse_gaze("abc,fixation,1"); }) == ErrorCode::MalformedLine);
  CHECK(line_of([] { parse_gaze("abc,fixation,1"); }) == 1);
}

TEST_CASE("gaze header, CRLF and unknown event types") {
  const auto r = parse_gaze("timestamp,event_type,x,y\r\n10,saccade,1,2\r\n20,blink,3,4\r\n");
  REQUIRE(r.events.size() == 2);
  CHECK(r.events[0].type == GazeEventType::Saccade);
  CHECK(r.events[1].type == GazeEventType::Unclassified);
  CHECK(r.unknown_event_types == 1);
  CHECK(line_of([] { parse_gaze("timestamp,event_type,x,y\n10,fixation,1,2\n20,fixation,x,2\n"); }) == 3);
  CHECK(code_of([] { parse_gaze("-5,fixation,1,2"); }) == ErrorCode::MalformedLine);
}

TEST_CASE("mouse lines parse in field order") {
  const auto m = parse_mouse("move,1530000000200,100,200,0");
  REQUIRE(m.size() == 1);
  CHECK(m[0] == MouseEvent{MouseMessage::Move, 1530000000200, 100.0, 200.0, 0});
  const auto w = parse_mouse("wheel,1530000000300,100,200,-120");
  REQUIRE(w.size() == 1);
  CHECK(w[0].message == MouseMessage::Wheel);
  CHECK(w[0].wheel == -120);
}

TEST_CASE("mouse malformed lines") {
  CHECK(code_of([] { parse_mouse("move,xx,1,2,0"); }) == ErrorCode::MalformedLine);
  CHECK(line_of([] { parse_mouse("move,xx,1,2,0"); }) == 1);
  CHECK(code_of([] { parse_mouse("move,10,1,2,120"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] { parse_mouse("hover,10,1,2,0"); }) == ErrorCode::MalformedLine);
  CHECK(parse_mouse("message,time,x,y,wheel\nleft_down,5,1,1,0\n").size() == 1);
}

TEST_CASE("frame lines validate pose and emotion simplex") {
  const auto f = parse_frames("1000,0.1,-0.2,0.0,0.9,0.02,0.02,0.02,0.02,0.01,0.01");
  REQUIRE(f.size() == 1);
  CHECK(f[0].timestamp == 1000);
  CHECK(f[0].yaw == doctest::Approx(0.1));
  double sum = 0;
  for (double e : f[0].emotion) sum += e;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  CHECK(code_of([] { parse_frames("1000,1.5,0,0,0.9,0.02,0.02,0.02,0.02,0.01,0.01"); }) == ErrorCode::PoseOutOfRange);
  CHECK(code_of([] { parse_frames("1000,0,0,0,0.2,0.1,0.05,0.05,0.05,0.03,0.02"); }) ==
        ErrorCode::EmotionNotSimplex);
  CHECK(code_of([] { parse_frames("1000,0,0,0,0.5"); }) == ErrorCode::MalformedLine);
}

TEST_CASE("frame emotions within tolerance are renormalized") {
  const auto f = parse_frames("0,0,0,0,0.9005,0.02,0.02,0.02,0.02,0.01,0.01");
  double sum = 0;
  for (double e : f[0].emotion) sum += e;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("serialize then parse round-trips events") {
  Rng rng(11);
  std::vector<GazeEvent> g;
  std::vector<MouseEvent> m;
  std::vector<FrameSample> f;
  for (int i = 0; i < 200; ++i) {
    g.push_back({static_cast<Millis>(rng.below(1u << 30)), static_cast<GazeEventType>(rng.below(3)),
                 rng.uniform(0, 1920), rng.uniform(-5, 1080)});
    const auto msg = static_cast<MouseMessage>(rng.below(6));
    m.push_back({msg, static_cast<Millis>(rng.below(1u << 30)), rng.uniform(0, 1920), rng.uniform(0, 1080),
                 msg == MouseMessage::Wheel ? static_cast<std::int64_t>(rng.below(480)) - 240 : 0});
    FrameSample s;
    s.timestamp = static_cast<Millis>(i * 66);
    s.yaw = rng.uniform(-1, 1);
    s.pitch = rng.uniform(-1, 1);
    s.roll = rng.uniform(-1, 1);
    double z = 0;
    for (auto& e : s.emotion) z += (e = rng.uniform());
    for (auto& e : s.emotion) e /= z;
    f.push_back(s);
  }
  CHECK(parse_gaze(format_gaze(g)).events == g);
  CHECK(parse_mouse(format_mouse(m)) == m);
  const auto back = parse_frames(format_frames(f));
  REQUIRE(back.size() == f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(back[i].yaw == f[i].yaw);
    for (std::size_t k = 0; k < kEmotionCount; ++k) CHECK(back[i].emotion[k] == doctest::Approx(f[i].emotion[k]).epsilon(1e-12));
  }
}

TEST_CASE("manifest loads, sorts and validates units") {
  const auto s = load_manifest(kManifest);
  REQUIRE(s.units.size() == 3);
  CHECK(s.units[0].unit_id == "u1");
  CHECK(s.units[1].unit_id == "u2");
  CHECK(s.units[0].mastery == 60.0);
  CHECK(s.units[2].mastery == 10.0);
  CHECK(s.learner.age == 21);
  CHECK(s.channels.mouse == "mouse.csv");
}

TEST_CASE("manifest errors") {
  std::string bad_self = kManifest;
  bad_self.replace(bad_self.find("\"self_eval\": 40"), 15, "\"self_eval\": 5");
  CHECK(code_of([&] { load_manifest(bad_self); }) == ErrorCode::EvalOutOfRange);

  const char* overlap = R"({"learner": {"mastery": 50}, "channels": {"gaze": "g", "mouse": "m", "frames": "f"},
    "units": [{"unit_id": "a", "start_ms": 0, "end_ms": 60000, "self_eval": 50, "class_eval": 50},
              {"unit_id": "b", "start_ms": 30000, "end_ms": 90000, "self_eval": 50, "class_eval": 50}]})";
  CHECK(code_of([&] { load_manifest(overlap); }) == ErrorCode::OverlappingUnits);

  const char* no_frames = R"({"learner": {"mastery": 50}, "channels": {"gaze": "g", "mouse": "m"}, "units": []})";
  CHECK(code_of([&] { load_manifest(no_frames); }) == ErrorCode::MissingChannelFile);
  CHECK(code_of([&] { load_manifest("{\"learner\": "); }) == ErrorCode::SchemaViolation);

  const auto dir = std::filesystem::temp_directory_path() / "fuselearn_manifest_test";
  std::filesystem::create_directories(dir);
  text::write_file(dir / "manifest.json", kManifest);
  text::write_file(dir / "gaze.csv", "");
  text::write_file(dir / "mouse.csv", "");
  std::filesystem::remove(dir / "frames.csv");
  CHECK(code_of([&] { load_manifest_file(dir / "manifest.json"); }) == ErrorCode::MissingChannelFile);
  text::write_file(dir / "frames.csv", "");
  const auto s = load_manifest_file(dir / "manifest.json");
  CHECK(std::filesystem::path(s.channels.frames) == dir / "frames.csv");
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest format round-trips") {
  const auto s = load_manifest(kManifest);
  const auto again = load_manifest(format_manifest(s));
  REQUIRE(again.units.size() == s.units.size());
  for (std::size_t i = 0; i < s.units.size(); ++i) {
    CHECK(again.units[i].unit_id == s.units[i].unit_id);
    CHECK(again.units[i].mastery == s.units[i].mastery);
    CHECK(again.units[i].end == s.units[i].end);
  }
}

TEST_CASE("slice_unit keeps the half-open interval, sorted") {
  std::vector<GazeEvent> ev{{130000, GazeEventType::Fixation, 0, 0},
                            {70000, GazeEventType::Fixation, 1, 0},
                            {10000, GazeEventType::Fixation, 2, 0}};
  LearningUnit u{"u", 60000, 120000};
  const auto s = slice_unit(std::span<const GazeEvent>(ev), u);
  REQUIRE(s.size() == 1);
  CHECK(s[0].timestamp == 70000);
  LearningUnit none{"n", 200000, 260000};
  CHECK(slice_unit(std::span<const GazeEvent>(ev), none).empty());
  LearningUnit all{"a", 0, 200000};
  const auto sorted = slice_unit(std::span<const GazeEvent>(ev), all);
  REQUIRE(sorted.size() == 3);
  CHECK(sorted[0].timestamp == 10000);
  CHECK(sorted[2].timestamp == 130000);
}

TEST_CASE("slice_unit count matches a brute-force filter") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MouseEvent> ev;
    for (int i = 0; i < 300; ++i) ev.push_back({MouseMessage::Move, static_cast<Millis>(rng.below(10000)), 0, 0, 0});
    const Millis a = static_cast<Millis>(rng.below(5000));
    LearningUnit u{"u", a, a + 1 + static_cast<Millis>(rng.below(5000))};
    std::size_t expect = 0;
    for (const auto& e : ev) expect += (e.time >= u.start && e.time < u.end);
    const auto s = slice_unit(std::span<const MouseEvent>(ev), u);
    CHECK(s.size() == expect);
    CHECK(std::is_sorted(s.begin(), s.end(), [](auto& x, auto& y) { return x.time < y.time; }));
  }
}

TEST_CASE("cut_windows tiles the unit") {
  std::vector<GazeEvent> none;
  auto span = std::span<const GazeEvent>(none);
  CHECK(cut_windows(span, LearningUnit{"u", 0, 120000}, 60000, Channel::Eye).size() == 2);
  const auto w = cut_windows(span, LearningUnit{"u", 0, 90000}, 60000, Channel::Eye);
  REQUIRE(w.size() == 2);
  CHECK(w[0].end - w[0].start == 60000);
  CHECK(w[1].end - w[1].start == 30000);
  CHECK(cut_windows(span, LearningUnit{"u", 0, 600000}, 60000, Channel::Eye).size() == 10);

  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Millis start = static_cast<Millis>(rng.below(100000));
    LearningUnit u{"u", start, start + 1 + static_cast<Millis>(rng.below(1000000))};
    const Millis interval = 1 + static_cast<Millis>(rng.below(100000));
    std::vector<GazeEvent> ev;
    for (int i = 0; i < 50; ++i)
      ev.push_back({u.start + static_cast<Millis>(rng.below(static_cast<std::uint64_t>(u.end - u.start))),
                    GazeEventType::Fixation, 0, 0});
    const auto ws = cut_windows(std::span<const GazeEvent>(ev), u, interval, Channel::Eye);
    REQUIRE(!ws.empty());
    CHECK(ws.front().start == u.start);
    CHECK(ws.back().end == u.end);
    std::size_t total = 0;
    for (std::size_t k = 0; k < ws.size(); ++k) {
      if (k + 1 < ws.size()) {
        CHECK(ws[k].end == ws[k + 1].start);
        CHECK(ws[k].end - ws[k].start == interval);
      }
      for (const auto& e : ws[k].events) CHECK((e.timestamp >= ws[k].start && e.timestamp < ws[k].end));
      total += ws[k].events.size();
    }
    CHECK(total == ev.size());
  }
}

TEST_CASE("resample_uniform interpolates and holds") {
  std::vector<TimedValue> pts{{0, 0.0}, {1000, 10.0}};
  const auto s = resample_uniform(pts, 0, 1000, 10.0);
  REQUIRE(s.values.size() == 11);
  CHECK(s.values[5] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_FALSE(s.empty);

  std::vector<TimedValue> one{{400, 3.5}};
  const auto c = resample_uniform(one, 0, 1000, 10.0);
  for (double v : c.values) CHECK(v == 3.5);

  const auto e = resample_uniform(std::span<const TimedValue>(), 0, 1000, 10.0);
  CHECK(e.empty);

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Millis dur = 1 + static_cast<Millis>(rng.below(120000));
    const double rate = rng.uniform(0.5, 40.0);
    std::vector<TimedValue> p{{static_cast<Millis>(rng.below(static_cast<std::uint64_t>(dur))), 2.0}};
    const auto r = resample_uniform(p, 0, dur, rate);
    CHECK(r.values.size() ==
          static_cast<std::size_t>(std::floor(static_cast<double>(dur) / 1000.0 * rate + 1e-9)) + 1);
  }
}
