#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "glkpz/cli_io.hpp"
#include "glkpz/errors.hpp"

using namespace glkpz;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("glkpz_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing") {
  const auto s = parse_config("experiment = invariance\nseed = 7\n[sim]\nN = 16, 32\ntheta = 0.1\n");
  CHECK(s.experiment == "invariance");
  CHECK(s.seed == 7);
  CHECK(s.N == std::vector<int>{16, 32});
  CHECK(s.theta == 0.1);
  CHECK_NOTHROW(parse_config("[experiment]\nname = constants\n"));

  CHECK(config_error("[sim]\ntheta = 0.5\n").find("sim.theta") != std::string::npos);
  CHECK(config_error("[sim]\nN = 16\nbogus = 1\n").find(":3:") != std::string::npos);
  CHECK(config_error("[sim]\nN = 16\nN = 32\n").find("duplicate") != std::string::npos);
  CHECK(config_error("[sim]\nN = abc\n").find("sim.N") != std::string::npos);
  CHECK(config_error("experiment = nope\n").find("unknown experiment") != std::string::npos);
  CHECK(config_error("experiment = invariance\nreplicas = 5\n").find("replicas") != std::string::npos);
}

TEST_CASE("config round trip") {
  for (const auto& name : experiment_names()) {
    const ExperimentSpec s = default_spec(name);
    const std::string text = write_config(s);
    const ExperimentSpec t = parse_config(text);
    CHECK(write_config(t) == text);
    CHECK(spec_to_json(t).dump() == spec_to_json(s).dump());
  }
}

TEST_CASE("manifest") {
  ExperimentSpec s = default_spec("invariance");
  s.N = {16, 64, 1024};
  s.delta_S = 0.1;
  const RunManifest m = make_manifest(s);
  REQUIRE(m.derived.size() == 3);
  CHECK(m.derived[2]["n_av"] == 363);
  CHECK(m.derived[2]["n_av_unrounded"].get<double>() < 363.0);
  const Json j = manifest_to_json(m);
  CHECK(j["seed"] == s.seed);
  CHECK(j["version"] == kArtifactVersion);
  CHECK(parse_config(j["config"].get<std::string>()).N == s.N);
}

TEST_CASE("report serialization") {
  const Report r = run_experiment(default_spec("constants"));
  const Json j = report_to_json(r);
  CHECK(j["schema_version"] == kReportSchemaVersion);
  CHECK(j["pass"] == r.pass());
  const Report back = report_from_json(Json::parse(j.dump()));
  CHECK(report_to_json(back).dump() == j.dump());

  Report empty;
  empty.experiment = "x";
  empty.tables.push_back({"t", {"a", "b"}, {}});
  CHECK(table_to_csv(empty.tables[0]) == "a,b\n");
  CHECK(checks_to_csv(empty).find('\n') == checks_to_csv(empty).size() - 1);
  CHECK(format_number(0.1) == "0.10000000000000001");

  const auto dir = scratch("report");
  const auto files = write_report(r, dir, false);
  CHECK(files.size() >= 2);
  const auto first = slurp(dir / "constants.json");
  CHECK_THROWS_AS(write_report(r, dir, false), Error);
  CHECK_NOTHROW(write_report(run_experiment(default_spec("constants")), dir, true));
  CHECK(slurp(dir / "constants.json") == first);
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".tmp");
  fs::remove_all(dir);
}

TEST_CASE("trajectory round trip") {
  const auto dir = scratch("traj");
  const fs::path p = dir / "trajectory.bin";
  {
    TrajectoryWriter w(p, 4, 8, 3, false);
    FieldState s;
    for (int k = 0; k < 5; ++k) {
      s.t = 0.1 * k;
      s.j0 = -0.5 * k;
      s.phi.assign(8, 0.0);
      for (int i = 0; i < 8; ++i) s.phi[i] = k + 0.125 * i;
      w.write(s);
    }
    w.close();
    CHECK(w.records() == 5);
  }
  const Trajectory t = read_trajectory(p);
  CHECK(t.version == kTrajectoryVersion);
  CHECK(t.N == 4);
  CHECK(t.M == 8);
  CHECK(t.stride == 3);
  REQUIRE(t.records.size() == 5);
  CHECK(t.records[3].t == 0.1 * 3);
  CHECK(t.records[3].j0 == -1.5);
  CHECK(t.records[4].phi[7] == 4.875);
  CHECK_THROWS_AS(TrajectoryWriter(p, 4, 8, 3, false), Error);

  std::ofstream(dir / "junk.bin") << "not a trajectory";
  CHECK_THROWS_AS(read_trajectory(dir / "junk.bin"), Error);
  fs::remove_all(dir);
}
