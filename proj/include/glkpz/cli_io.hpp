#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "glkpz/experiments.hpp"
#include "glkpz/lattice.hpp"

namespace glkpz {

inline constexpr const char* kArtifactVersion = "glkpz 1.0.0";
inline constexpr int kReportSchemaVersion = 1;

// ---- configuration: flat key = value lines grouped in [section] blocks

// default_experiment supplies the defaults when the text has no experiment name
ExperimentSpec parse_config(const std::string& text, const std::string& origin = "<string>",
                            const std::string& default_experiment = "jet_suite");
ExperimentSpec load_config(const std::filesystem::path& path, const std::string& default_experiment = "jet_suite");
std::string write_config(const ExperimentSpec& spec);
// Raises config errors naming the offending key.
void validate_spec(const ExperimentSpec& spec);

// ---- manifest

struct RunManifest {
  std::string config;  // write_config snapshot
  std::uint64_t seed = 0;
  std::string version = kArtifactVersion;
  std::string started, finished;  // UTC, ISO 8601
  std::vector<std::string> outputs;
  Json derived;   // derived averaging scales per N
  Json platform;  // compiler, standard library, system
};

RunManifest make_manifest(const ExperimentSpec& spec);
Json manifest_to_json(const RunManifest& m);
std::string utc_now();

// ---- reports

Json report_to_json(const Report& r);
Report report_from_json(const Json& j);
// CSV with a header row; floats carry 17 significant digits
std::string table_to_csv(const Table& t);
std::string checks_to_csv(const Report& r);
std::string format_number(double v);

// Writes text to path through a temporary file and rename. Refuses to replace an
// existing file unless force is set.
void write_atomic(const std::filesystem::path& path, const std::string& text, bool force);

// Writes <dir>/<experiment>.json, <dir>/<experiment>_checks.csv and one CSV per table.
std::vector<std::string> write_report(const Report& r, const std::filesystem::path& dir, bool force);

// ---- binary trajectories: magic "GLTRAJ\0\0", u32 version, u64 N, M, stride, then
// little-endian f64 records (t, phi[0..M), j0)

inline constexpr std::uint32_t kTrajectoryVersion = 1;

class TrajectoryWriter {
public:
  TrajectoryWriter(const std::filesystem::path& path, int N, int M, std::uint64_t stride, bool force);
  ~TrajectoryWriter();
  TrajectoryWriter(const TrajectoryWriter&) = delete;
  TrajectoryWriter& operator=(const TrajectoryWriter&) = delete;
  void write(const FieldState& s);
  // flushes and moves the file into place
  void close();
  std::uint64_t records() const { return records_; }

private:
  std::filesystem::path path_, tmp_;
  int M_;
  std::ofstream out_;
  std::uint64_t records_ = 0;
  bool closed_ = false;
};

struct TrajectoryRecord {
  double t = 0.0;
  std::vector<double> phi;
  double j0 = 0.0;
};

struct Trajectory {
  std::uint32_t version = 0;
  std::uint64_t N = 0, M = 0, stride = 0;
  std::vector<TrajectoryRecord> records;
};

Trajectory read_trajectory(const std::filesystem::path& path);

}  // namespace glkpz
