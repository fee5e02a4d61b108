#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "fuselearn/error.hpp"
#include "fuselearn/ingest.hpp"
#include "fuselearn/labeling.hpp"
#include "fuselearn/synth.hpp"
#include "oracles.hpp"

using namespace fuselearn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("fuselearn_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = static_cast<double>(oracle::mean(a)), mb = static_cast<double>(oracle::mean(b));
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("synth output is byte-identical for a seed") {
  SynthConfig c;
  c.n_units = 6;
  c.seed = 9;
  TempDir a("synth_a"), b("synth_b");
  write_session(generate_session(c), a.path);
  write_session(generate_session(c), b.path);
  for (const char* f : {"manifest.json", "gaze.csv", "mouse.csv", "frames.csv", "ground_truth.csv"}) {
    INFO(f);
    CHECK(!slurp(a.path / f).empty());
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
  c.seed = 10;
  TempDir other("synth_c");
  write_session(generate_session(c), other.path);
  CHECK(slurp(a.path / "gaze.csv") != slurp(other.path / "gaze.csv"));
}

TEST_CASE("synth files parse cleanly through ingest") {
  SynthConfig c;
  c.n_units = 8;
  c.seed = 3;
  const auto s = generate_session(c);
  TempDir dir("synth_parse");
  write_session(s, dir.path);
  const auto session = load_manifest_file(dir.path / "manifest.json");
  CHECK(session.units.size() == 8);
  const auto gaze = parse_gaze(slurp(dir.path / "gaze.csv"));
  CHECK(gaze.unknown_event_types == 0);
  CHECK(gaze.events.size() == s.gaze.size());
  CHECK(parse_mouse(slurp(dir.path / "mouse.csv")).size() == s.mouse.size());
  // Emotion rows are renormalized on parse, so values match only closely.
  const auto frames = parse_frames(slurp(dir.path / "frames.csv"));
  REQUIRE(frames.size() == s.frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].timestamp == s.frames[i].timestamp);
    CHECK(frames[i].yaw == s.frames[i].yaw);
    for (std::size_t e = 0; e < kEmotionCount; ++e) CHECK(std::abs(frames[i].emotion[e] - s.frames[i].emotion[e]) <= 1e-5);
  }
  for (std::size_t i = 0; i + 1 < session.units.size(); ++i) CHECK(session.units[i].end <= session.units[i + 1].start);
  for (const auto& u : session.units) {
    const auto d = u.end - u.start;
    CHECK(d >= c.min_unit_ms);
    CHECK(d <= c.max_unit_ms);
  }
  const auto truth = slurp(dir.path / "ground_truth.csv");
  CHECK(truth.rfind("unit_id,latent\n", 0) == 0);
  for (double l : s.latent) {
    CHECK(l >= 0.2);
    CHECK(l <= 0.95);
  }
}

TEST_CASE("labels track the latent state at default noise") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig c;
    c.seed = seed;
    const auto s = generate_session(c);
    std::vector<double> lus;
    for (const auto& u : s.session.units) lus.push_back(lus_label(u).value);
    const double r = pearson(s.latent, lus);
    INFO("seed " << seed << " r " << r);
    CHECK(r >= 0.9);
  }
}

TEST_CASE("synth config validation and json") {
  auto code = [](auto mutate) {
    SynthConfig c;
    mutate(c);
    try {
      c.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code([](SynthConfig& c) { c.n_units = 0; }) == ErrorCode::InvalidConfig);
  CHECK(code([](SynthConfig& c) { c.beta_eye = 1.5; }) == ErrorCode::InvalidConfig);
  CHECK(code([](SynthConfig& c) { c.beta_mouse = -0.1; }) == ErrorCode::InvalidConfig);
  CHECK(code([](SynthConfig& c) { c.min_unit_ms = c.max_unit_ms + 1; }) == ErrorCode::InvalidConfig);
  CHECK(code([](SynthConfig& c) { c.noise_eye = -1; }) == ErrorCode::InvalidConfig);

  SynthConfig c;
  c.seed = 77;
  c.beta_video = 0.25;
  c.n_units = 12;
  const auto back = SynthConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.seed == 77);
  CHECK(back.beta_video == 0.25);
  CHECK_THROWS_AS(SynthConfig::from_json(R"({"beta": {"eye": 3}})"), Error);
  CHECK_THROWS_AS(SynthConfig::from_json("{not json"), Error);
}
