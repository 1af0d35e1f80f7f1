#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "glkpz/cli_io.hpp"
#include "glkpz/errors.hpp"

namespace glkpz {

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_cell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_string()) return csv_escape(v.get<std::string>());
  return csv_escape(v.dump());
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  return s + "\n";
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

Json report_to_json(const Report& r) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["experiment"] = r.experiment;
  j["seed"] = r.seed;
  j["pass"] = r.pass();
  j["spec"] = r.spec;
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"values", c.values}});
  j["checks"] = checks;
  Json tables = Json::array();
  for (const auto& t : r.tables) {
    Json rows = Json::array();
    for (const auto& row : t.rows) rows.push_back(row);
    tables.push_back({{"name", t.name}, {"columns", t.columns}, {"rows", rows}});
  }
  j["tables"] = tables;
  j["diagnostics"] = r.diagnostics;
  return j;
}

Report report_from_json(const Json& j) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kReportSchemaVersion)
    fail(ErrorKind::io, "report: missing or unsupported schema_version");
  Report r;
  r.experiment = j.at("experiment").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.spec = j.at("spec");
  for (const auto& c : j.at("checks")) r.checks.push_back({c.at("name"), c.at("pass"), c.at("values")});
  for (const auto& t : j.at("tables")) {
    Table tb;
    tb.name = t.at("name").get<std::string>();
    tb.columns = t.at("columns").get<std::vector<std::string>>();
    for (const auto& row : t.at("rows")) tb.rows.push_back(row.get<std::vector<Json>>());
    r.tables.push_back(std::move(tb));
  }
  r.diagnostics = j.value("diagnostics", Json::object());
  return r;
}

std::string table_to_csv(const Table& t) {
  std::vector<std::string> head;
  for (const auto& c : t.columns) head.push_back(csv_escape(c));
  std::string s = csv_line(head);
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size())
      fail(ErrorKind::shape, fmt::format("table '{}': row of {} cells under {} columns", t.name, row.size(),
                                         t.columns.size()));
    std::vector<std::string> cells;
    for (const auto& v : row) cells.push_back(csv_cell(v));
    s += csv_line(cells);
  }
  return s;
}

std::string checks_to_csv(const Report& r) {
  Table t{"checks", {"name", "pass", "values"}, {}};
  for (const auto& c : r.checks) t.rows.push_back({c.name, c.pass, c.values});
  return table_to_csv(t);
}

void write_atomic(const std::filesystem::path& path, const std::string& text, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(path) && !force)
    fail(ErrorKind::io, fmt::format("refusing to overwrite '{}' (use --force)", path.string()));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, fmt::format("cannot open '{}' for writing", tmp.string()));
    out << text;
    out.flush();
    if (!out) fail(ErrorKind::io, fmt::format("write to '{}' failed", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorKind::io, fmt::format("cannot move '{}' into place: {}", path.string(), ec.message()));
  }
}

std::vector<std::string> write_report(const Report& r, const std::filesystem::path& dir, bool force) {
  std::vector<std::filesystem::path> paths;
  paths.push_back(dir / (r.experiment + ".json"));
  paths.push_back(dir / (r.experiment + "_checks.csv"));
  for (const auto& t : r.tables) paths.push_back(dir / (r.experiment + "_" + t.name + ".csv"));
  // check every target first so that a collision leaves no partial output behind
  if (!force)
    for (const auto& p : paths)
      if (std::filesystem::exists(p))
        fail(ErrorKind::io, fmt::format("refusing to overwrite '{}' (use --force)", p.string()));
  write_atomic(paths[0], report_to_json(r).dump(2) + "\n", force);
  write_atomic(paths[1], checks_to_csv(r), force);
  for (std::size_t i = 0; i < r.tables.size(); ++i) write_atomic(paths[i + 2], table_to_csv(r.tables[i]), force);
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

}  // namespace glkpz
