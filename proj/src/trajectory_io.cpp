#include <array>
#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "glkpz/cli_io.hpp"
#include "glkpz/errors.hpp"

namespace glkpz {

static_assert(std::endian::native == std::endian::little, "trajectory files are written in host order");

namespace {

constexpr std::array<char, 8> kMagic{'G', 'L', 'T', 'R', 'A', 'J', '\0', '\0'};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& p) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) fail(ErrorKind::io, fmt::format("'{}': truncated header", p.string()));
  return v;
}

}  // namespace

TrajectoryWriter::TrajectoryWriter(const std::filesystem::path& path, int N, int M, std::uint64_t stride, bool force)
    : path_(path), tmp_(path), M_(M) {
  if (N < 1 || M < 1) fail(ErrorKind::domain, "TrajectoryWriter: N and M must be positive");
  if (std::filesystem::exists(path) && !force)
    fail(ErrorKind::io, fmt::format("refusing to overwrite '{}' (use --force)", path.string()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  tmp_ += ".tmp";
  out_.open(tmp_, std::ios::binary | std::ios::trunc);
  if (!out_) fail(ErrorKind::io, fmt::format("cannot open '{}'", tmp_.string()));
  out_.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out_, kTrajectoryVersion);
  put<std::uint64_t>(out_, static_cast<std::uint64_t>(N));
  put<std::uint64_t>(out_, static_cast<std::uint64_t>(M));
  put<std::uint64_t>(out_, stride);
}

TrajectoryWriter::~TrajectoryWriter() {
  if (!closed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_, ec);
  }
}

void TrajectoryWriter::write(const FieldState& s) {
  if (closed_) fail(ErrorKind::io, "TrajectoryWriter: already closed");
  if (static_cast<int>(s.phi.size()) != M_)
    fail(ErrorKind::shape, fmt::format("TrajectoryWriter: field of {} sites, file holds {}", s.phi.size(), M_));
  put<double>(out_, s.t);
  out_.write(reinterpret_cast<const char*>(s.phi.data()), static_cast<std::streamsize>(s.phi.size() * sizeof(double)));
  put<double>(out_, s.j0);
  if (!out_) fail(ErrorKind::io, fmt::format("write to '{}' failed", tmp_.string()));
  ++records_;
}

void TrajectoryWriter::close() {
  if (closed_) return;
  out_.flush();
  out_.close();
  if (!out_) fail(ErrorKind::io, fmt::format("closing '{}' failed", tmp_.string()));
  std::error_code ec;
  std::filesystem::rename(tmp_, path_, ec);
  if (ec) fail(ErrorKind::io, fmt::format("cannot move '{}' into place: {}", path_.string(), ec.message()));
  closed_ = true;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, fmt::format("cannot open '{}'", path.string()));
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) fail(ErrorKind::io, fmt::format("'{}': not a trajectory file", path.string()));
  Trajectory t;
  t.version = get<std::uint32_t>(in, path);
  if (t.version != kTrajectoryVersion)
    fail(ErrorKind::io, fmt::format("'{}': unsupported version {}", path.string(), t.version));
  t.N = get<std::uint64_t>(in, path);
  t.M = get<std::uint64_t>(in, path);
  t.stride = get<std::uint64_t>(in, path);
  if (t.M == 0 || t.M > (1u << 28)) fail(ErrorKind::io, fmt::format("'{}': implausible M {}", path.string(), t.M));
  const std::size_t rec_bytes = (t.M + 2) * sizeof(double);
  std::vector<double> buf(t.M + 2);
  while (true) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(rec_bytes));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    if (got != rec_bytes) fail(ErrorKind::io, fmt::format("'{}': truncated record", path.string()));
    TrajectoryRecord r;
    r.t = buf[0];
    r.phi.assign(buf.begin() + 1, buf.begin() + 1 + static_cast<std::ptrdiff_t>(t.M));
    r.j0 = buf[t.M + 1];
    t.records.push_back(std::move(r));
  }
  return t;
}

}  // namespace glkpz
