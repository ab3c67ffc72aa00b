#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "mrhom/config.hpp"

using namespace mrhom;

namespace {

std::string write_temp(const std::string& contents) {
  static int counter = 0;
  std::string path = "config_test_" + std::to_string(counter++) + ".cfg";
  std::ofstream f(path);
  f << contents;
  return path;
}

}  // namespace

TEST_CASE("scan grid parsing and expansion") {
  const ScanGrid g = ScanGrid::parse("0:2:0.05");
  CHECK(g.start_mm == 0.0);
  CHECK(g.stop_mm == 2.0);
  CHECK(g.step_mm == 0.05);
  CHECK(g.points().size() == 41);
  CHECK(g.points().front() == 0.0);
  CHECK(g.points().back() == doctest::Approx(2.0));

  CHECK_THROWS_AS(ScanGrid::parse("0:2"), ValidationError);
  CHECK_THROWS_AS(ScanGrid::parse("junk"), ValidationError);
  ScanGrid bad;
  bad.step_mm = -1.0;
  CHECK_THROWS_AS(bad.points(), ValidationError);
}

TEST_CASE("defaults validate and the digest is stable") {
  RunConfig cfg;
  cfg.validate();
  CHECK(cfg.digest() == RunConfig{}.digest());
  CHECK(cfg.digest().size() == 16);

  RunConfig other;
  other.seed = cfg.seed + 1;
  CHECK(other.digest() != cfg.digest());
}

TEST_CASE("delta mode selects the sensitivity source") {
  RunConfig cfg;
  cfg.delta_mode = DeltaMode::fitted;
  CHECK(cfg.delta_inv_mm() == doctest::Approx(1.7));
  cfg.delta_mode = DeltaMode::geometric;
  CHECK(cfg.delta_inv_mm() == doctest::Approx(1.97).epsilon(1e-3));
  CHECK_THROWS_AS(delta_mode_from_name("nope"), ValidationError);
}

TEST_CASE("config file round trip") {
  RunConfig cfg;
  cfg.source.visibility = 0.42;
  cfg.seed = 777;
  cfg.scan = ScanGrid::parse("0.1:1.1:0.1");
  cfg.delta_mode = DeltaMode::geometric;
  const std::string path = write_temp(format_config(cfg));
  const RunConfig back = RunConfig::from_file(path);
  CHECK(back.digest() == cfg.digest());
  CHECK(back.source.visibility == 0.42);
  CHECK(back.seed == 777);
  std::remove(path.c_str());
}

TEST_CASE("config file parsing: comments, spacing, unknown keys") {
  const std::string path = write_temp(
      "# comment line\n"
      "source.visibility = 0.5   # inline comment\n"
      "\n"
      "seed=123\n");
  const RunConfig cfg = RunConfig::from_file(path);
  CHECK(cfg.source.visibility == 0.5);
  CHECK(cfg.seed == 123);
  std::remove(path.c_str());

  const std::string bad = write_temp("nosuch.key = 1\nsource.visibility = abc\n");
  try {
    RunConfig::from_file(bad);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    // Both problems reported together, with line numbers.
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("nosuch.key") != std::string::npos);
  }
  std::remove(bad.c_str());

  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/path.cfg"), IoError);
}

TEST_CASE("validation collects every violation") {
  RunConfig cfg;
  cfg.source.visibility = 2.0;                    // out of [0, 1]
  cfg.repeats = 1;                                // needs >= 2
  cfg.windows.antibunching_center_ns = 0.2;       // overlapping windows
  cfg.delta_fitted_inv_mm = 50.0;                 // >= momentum pitch
  try {
    cfg.validate();
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("visibility") != std::string::npos);
    CHECK(msg.find("repeats") != std::string::npos);
    CHECK(msg.find("windows overlap") != std::string::npos);
    CHECK(msg.find("momentum pitch") != std::string::npos);
  }
}

TEST_CASE("emit_timetags requires the same-pixel antibunching mask") {
  RunConfig cfg;
  cfg.emit_timetags = true;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.mask_antibunching_same_pixel = true;
  cfg.validate();
  const DetectorArray a = cfg.make_array();
  CHECK(a.is_masked(Branch::antibunching, 3, 3));
  CHECK(!a.is_masked(Branch::antibunching, 2, 3));
}

TEST_CASE("make_array applies the default masks") {
  RunConfig cfg;
  const DetectorArray a = cfg.make_array();
  CHECK(a.n_pixels() == 8);
  CHECK(a.delta == doctest::Approx(1.7));
  CHECK(a.is_masked(Branch::bunching, 4, 4));
  CHECK(a.is_masked(Branch::bunching, 4, 5));
  CHECK(!a.is_masked(Branch::bunching, 4, 6));
  CHECK(!a.is_masked(Branch::antibunching, 4, 4));

  cfg.default_masks = false;
  CHECK(!cfg.make_array().is_masked(Branch::bunching, 4, 4));
}
