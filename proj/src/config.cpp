#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <sys/utsname.h>

#include "glkpz/cli_io.hpp"
#include "glkpz/errors.hpp"

namespace glkpz {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct ValueError {
  std::string msg;
};

double to_double(const std::string& v) {
  std::size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (...) {
    throw ValueError{fmt::format("'{}' is not a number", v)};
  }
  if (pos != v.size()) throw ValueError{fmt::format("'{}' is not a number", v)};
  return d;
}

long long to_integer(const std::string& v) {
  std::size_t pos = 0;
  long long d;
  try {
    d = std::stoll(v, &pos);
  } catch (...) {
    throw ValueError{fmt::format("'{}' is not an integer", v)};
  }
  if (pos != v.size()) throw ValueError{fmt::format("'{}' is not an integer", v)};
  return d;
}

int to_int(const std::string& v) {
  const long long d = to_integer(v);
  if (d < INT32_MIN || d > INT32_MAX) throw ValueError{fmt::format("'{}' is out of range", v)};
  return static_cast<int>(d);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValueError{fmt::format("'{}' is not a boolean", v)};
}

std::string num(double v) { return format_number(v); }

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += f(v[i]);
  }
  return s;
}

std::string doubles(const std::vector<double>& v) { return join(v, num); }
std::string ints(const std::vector<int>& v) {
  return join(v, [](int x) { return std::to_string(x); });
}
std::vector<double> parse_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(s));
  return out;
}
std::vector<int> parse_ints(const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(s));
  return out;
}

struct Key {
  std::string section, name;
  std::function<std::string(const ExperimentSpec&)> get;
  std::function<void(ExperimentSpec&, const std::string&)> set;
};

#define KEY_D(sec, nm, field)                                                                          \
  Key {                                                                                                \
    sec, nm, [](const ExperimentSpec& s) { return num(s.field); },                                    \
        [](ExperimentSpec& s, const std::string& v) { s.field = to_double(v); }                       \
  }
#define KEY_I(sec, nm, field)                                                                          \
  Key {                                                                                                \
    sec, nm, [](const ExperimentSpec& s) { return std::to_string(s.field); },                         \
        [](ExperimentSpec& s, const std::string& v) { s.field = to_int(v); }                          \
  }
#define KEY_B(sec, nm, field)                                                                          \
  Key {                                                                                                \
    sec, nm, [](const ExperimentSpec& s) { return std::string(s.field ? "true" : "false"); },         \
        [](ExperimentSpec& s, const std::string& v) { s.field = to_bool(v); }                         \
  }
#define KEY_LD(sec, nm, field)                                                                         \
  Key {                                                                                                \
    sec, nm, [](const ExperimentSpec& s) { return doubles(s.field); },                                \
        [](ExperimentSpec& s, const std::string& v) { s.field = parse_doubles(v); }                   \
  }
#define KEY_LI(sec, nm, field)                                                                         \
  Key {                                                                                                \
    sec, nm, [](const ExperimentSpec& s) { return ints(s.field); },                                   \
        [](ExperimentSpec& s, const std::string& v) { s.field = parse_ints(v); }                      \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      Key{"experiment", "name", [](const ExperimentSpec& s) { return s.experiment; },
          [](ExperimentSpec& s, const std::string& v) { s.experiment = v; }},
      Key{"experiment", "seed", [](const ExperimentSpec& s) { return std::to_string(s.seed); },
          [](ExperimentSpec& s, const std::string& v) {
            const long long x = to_integer(v);
            if (x < 0) throw ValueError{"seed must be non-negative"};
            s.seed = static_cast<std::uint64_t>(x);
          }},
      KEY_I("experiment", "threads", threads),
      KEY_I("experiment", "replicas", replicas),
      KEY_I("experiment", "bootstrap", bootstrap),
      Key{"potential", "family",
          [](const ExperimentSpec& s) {
            return std::string(s.potential.family == PotentialFamily::gaussian ? "gaussian" : "perturbed");
          },
          [](ExperimentSpec& s, const std::string& v) {
            if (v == "gaussian")
              s.potential.family = PotentialFamily::gaussian;
            else if (v == "perturbed")
              s.potential.family = PotentialFamily::perturbed;
            else
              throw ValueError{fmt::format("unknown potential family '{}'", v)};
          }},
      KEY_D("potential", "kappa_pert", potential.kappa_pert),
      KEY_D("potential", "curvature", potential.curvature),
      KEY_D("potential", "period", potential.period),
      KEY_LD("potential", "kappa_grid", kappa_grid),
      KEY_LD("model", "betas", betas),
      KEY_LI("sim", "N", N),
      KEY_I("sim", "M", M),
      KEY_I("sim", "M_factor", M_factor),
      KEY_D("sim", "theta", theta),
      KEY_D("sim", "T", T),
      KEY_D("sim", "sigma", sigma),
      KEY_LD("sim", "horizons", horizons),
      KEY_D("av", "delta_S", delta_S),
      Key{"av", "q", [](const ExperimentSpec& s) { return join(s.q, [](const std::string& x) { return x; }); },
          [](ExperimentSpec& s, const std::string& v) { s.q = split_list(v); }},
      KEY_LI("av", "n_grid", n_grid),
      KEY_LD("av", "t_grid", t_grid),
      KEY_B("av", "frozen_weights", frozen_weights),
      KEY_I("av", "stride", stride),
      KEY_I("av", "positions", positions),
      KEY_D("av", "window_factor", window_factor),
      KEY_LI("av", "ell_grid", ell_grid),
      KEY_D("kernel", "zeta", zeta),
      KEY_D("kernel", "zeta_large", zeta_large),
      KEY_D("kernel", "kappa", kappa),
      Key{"kernel", "mode", [](const ExperimentSpec& s) { return s.kernel_mode; },
          [](ExperimentSpec& s, const std::string& v) { s.kernel_mode = v; }},
      KEY_I("kernel", "l_max", l_max),
      KEY_I("kernel", "m_max", m_max),
      KEY_D("kernel", "coef", k_coef),
      KEY_LI("kernel", "tau_exponents", tau_exponents),
      KEY_LI("kernel", "aggregates", aggregates),
      KEY_I("kernel", "norm_replicas", norm_replicas),
      KEY_D("tolerance", "jet", tol.jet),
      KEY_D("tolerance", "ks_p", tol.ks_p),
      KEY_D("tolerance", "corr_se", tol.corr_se),
      KEY_D("tolerance", "mean_se", tol.mean_se),
      KEY_D("tolerance", "clt_slope_lo", tol.clt_slope_lo),
      KEY_D("tolerance", "clt_slope_hi", tol.clt_slope_hi),
      KEY_D("tolerance", "kv_slope_lo", tol.kv_slope_lo),
      KEY_D("tolerance", "kv_slope_hi", tol.kv_slope_hi),
      KEY_D("tolerance", "kv_saturation", tol.kv_saturation),
      KEY_D("tolerance", "psi_exact_se", tol.psi_exact_se),
      KEY_D("tolerance", "psi_bound_se", tol.psi_bound_se),
      KEY_D("tolerance", "she_decrease", tol.she_decrease),
      KEY_D("tolerance", "conservation", tol.conservation),
      KEY_D("tolerance", "hk_row_sum", tol.hk_row_sum),
      KEY_D("tolerance", "hk_semigroup", tol.hk_semigroup),
      KEY_D("tolerance", "hk_envelope_factor", tol.hk_envelope_factor),
      KEY_D("tolerance", "kernel_mean_se", tol.kernel_mean_se),
      KEY_D("tolerance", "kernel_norm_factor", tol.kernel_norm_factor),
      KEY_D("tolerance", "kernel_norm_exponent", tol.kernel_norm_exponent),
      KEY_D("tolerance", "wedge_mass", tol.wedge_mass),
      KEY_D("tolerance", "wedge_tail", tol.wedge_tail),
      KEY_D("tolerance", "wedge_profile", tol.wedge_profile),
  };
  return k;
}

#undef KEY_D
#undef KEY_I
#undef KEY_B
#undef KEY_LD
#undef KEY_LI

// keys accepted before any section header
const std::map<std::string, std::string>& top_level_aliases() {
  static const std::map<std::string, std::string> a{{"experiment", "experiment.name"},
                                                    {"seed", "experiment.seed"},
                                                    {"threads", "experiment.threads"},
                                                    {"replicas", "experiment.replicas"},
                                                    {"potential", "potential.family"}};
  return a;
}

const Key* find_key(const std::string& full) {
  for (const auto& k : keys())
    if (k.section + "." + k.name == full) return &k;
  return nullptr;
}

void require(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) fail(ErrorKind::config, fmt::format("{}: {}", key, msg));
}

}  // namespace

ExperimentSpec parse_config(const std::string& text, const std::string& origin, const std::string& default_experiment) {
  struct Entry {
    std::string key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::stringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3)
        fail(ErrorKind::config, fmt::format("{}:{}: malformed section header '{}'", origin, line, s));
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, fmt::format("{}:{}: expected key = value, got '{}'", origin, line, s));
    const std::string k = trim(s.substr(0, eq)), v = trim(s.substr(eq + 1));
    if (k.empty()) fail(ErrorKind::config, fmt::format("{}:{}: empty key", origin, line));
    std::string full;
    if (section.empty()) {
      const auto it = top_level_aliases().find(k);
      if (it == top_level_aliases().end())
        fail(ErrorKind::config, fmt::format("{}:{}: unknown key '{}' outside any section", origin, line, k));
      full = it->second;
    } else {
      full = section + "." + k;
    }
    if (!find_key(full)) fail(ErrorKind::config, fmt::format("{}:{}: unknown key '{}'", origin, line, full));
    for (const auto& e : entries)
      if (e.key == full)
        fail(ErrorKind::config, fmt::format("{}:{}: duplicate key '{}' (first set on line {})", origin, line, full, e.line));
    entries.push_back({full, v, line});
  }
  std::string name = default_experiment;
  for (const auto& e : entries)
    if (e.key == "experiment.name") name = e.value;
  ExperimentSpec spec;
  try {
    spec = default_spec(name);
  } catch (const Error&) {
    int at = 0;
    for (const auto& e : entries)
      if (e.key == "experiment.name") at = e.line;
    fail(ErrorKind::config, fmt::format("{}:{}: experiment.name: unknown experiment '{}'", origin, at, name));
  }
  for (const auto& e : entries) {
    try {
      find_key(e.key)->set(spec, e.value);
    } catch (const ValueError& ve) {
      fail(ErrorKind::config, fmt::format("{}:{}: {}: {}", origin, e.line, e.key, ve.msg));
    }
  }
  validate_spec(spec);
  return spec;
}

ExperimentSpec load_config(const std::filesystem::path& path, const std::string& default_experiment) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string(), default_experiment);
}

std::string write_config(const ExperimentSpec& spec) {
  std::string out, section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      if (!section.empty()) out += "\n";
      section = k.section;
      out += "[" + section + "]\n";
    }
    out += k.name + " = " + k.get(spec) + "\n";
  }
  return out;
}

void validate_spec(const ExperimentSpec& s) {
  const auto& names = experiment_names();
  require(std::find(names.begin(), names.end(), s.experiment) != names.end(), "experiment.name",
          fmt::format("unknown experiment '{}'", s.experiment));
  require(s.threads >= 1, "experiment.threads", "must be at least 1");
  require(s.replicas >= 1, "experiment.replicas", "must be at least 1");
  if (s.experiment == "invariance")
    require(s.replicas >= 30, "experiment.replicas", "p-value based tests need at least 30 replicas");
  require(s.bootstrap >= 200, "experiment.bootstrap", "need at least 200 bootstrap resamples");
  try {
    s.potential.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, fmt::format("potential: {}", e.what()));
  }
  for (double k : s.kappa_grid) require(k >= 0.0 && k <= 0.5, "potential.kappa_grid", "entries must lie in [0, 0.5]");
  require(!s.betas.empty(), "model.betas", "beta_2 is required");
  for (double b : s.betas) require(std::isfinite(b), "model.betas", "entries must be finite");
  require(!s.N.empty(), "sim.N", "at least one N is required");
  for (int n : s.N) {
    require(n >= 4, "sim.N", fmt::format("must be at least 4 (got {})", n));
    require(s.M_for(n) % 2 == 0, s.M > 0 ? "sim.M" : "sim.M_factor", "ring size must be even");
    require(s.M_for(n) >= 8, s.M > 0 ? "sim.M" : "sim.M_factor", "ring size must be at least 8");
  }
  require(s.M >= 0, "sim.M", "must be non-negative");
  require(s.M_factor >= 1, "sim.M_factor", "must be at least 1");
  require(s.theta > 0.0 && s.theta <= 0.25, "sim.theta",
          fmt::format("must lie in (0, 0.25] for explicit stability (got {})", s.theta));
  require(s.T >= 0.0 && std::isfinite(s.T), "sim.T", "must be finite and non-negative");
  require(std::abs(s.sigma) <= 2.0, "sim.sigma", "must lie in [-2, 2]");
  for (double h : s.horizons) require(h > 0.0 && h <= 1.0, "sim.horizons", "fractions must lie in (0, 1]");
  require(s.delta_S > 0.0 && s.delta_S < 1.0 / 3.0, "av.delta_S", "must lie in (0, 1/3)");
  for (int n : s.n_grid) require(n >= 1, "av.n_grid", "block sizes must be positive");
  for (double t : s.t_grid) require(t > 0.0, "av.t_grid", "averaging times must be positive");
  require(s.stride >= 1, "av.stride", "must be at least 1");
  require(s.positions >= 1, "av.positions", "must be at least 1");
  require(s.window_factor >= 1.0, "av.window_factor", "must be at least 1");
  for (int l : s.ell_grid) require(l >= 1, "av.ell_grid", "block lengths must be positive");
  require(s.zeta > 0.0, "kernel.zeta", "must be positive");
  require(s.zeta_large >= s.zeta, "kernel.zeta_large", "must be at least kernel.zeta");
  require(s.kappa >= 0.0, "kernel.kappa", "must be non-negative");
  require(s.kernel_mode == "B" || s.kernel_mode == "K", "kernel.mode", "must be B or K");
  require(s.l_max >= 1, "kernel.l_max", "must be at least 1");
  require(s.m_max >= 0, "kernel.m_max", "must be non-negative");
  for (int a : s.aggregates) require(a >= 1, "kernel.aggregates", "must be positive");
  require(s.norm_replicas >= 1, "kernel.norm_replicas", "must be at least 1");
  const auto& t = s.tol;
  require(t.jet > 0.0, "tolerance.jet", "must be positive");
  require(t.ks_p > 0.0 && t.ks_p < 1.0, "tolerance.ks_p", "must lie in (0, 1)");
  require(t.clt_slope_lo < t.clt_slope_hi, "tolerance.clt_slope_lo", "must be below clt_slope_hi");
  require(t.kv_slope_lo < t.kv_slope_hi, "tolerance.kv_slope_lo", "must be below kv_slope_hi");
  require(t.kv_saturation >= 0.0 && t.kv_saturation < 1.0, "tolerance.kv_saturation", "must lie in [0, 1)");
  require(t.she_decrease >= 0.0 && t.she_decrease < 1.0, "tolerance.she_decrease", "must lie in [0, 1)");
  require(t.hk_envelope_factor >= 1.0, "tolerance.hk_envelope_factor", "must be at least 1");
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest make_manifest(const ExperimentSpec& spec) {
  RunManifest m;
  m.config = write_config(spec);
  m.seed = spec.seed;
  m.started = utc_now();
  m.derived = Json::array();
  for (int n : spec.N) {
    const AvConfig a = default_scales(n, spec.delta_S);
    m.derived.push_back({{"N", n},
                         {"M", spec.M_for(n)},
                         {"delta_S", spec.delta_S},
                         {"n_av", a.n_av},
                         {"n_av_unrounded", std::pow(static_cast<double>(n), 1.0 - 1.5 * spec.delta_S)},
                         {"t_av", a.t_av}});
  }
  utsname u{};
  std::string sys = "unknown";
  if (uname(&u) == 0) sys = fmt::format("{} {} {}", u.sysname, u.release, u.machine);
  m.platform = {{"compiler", fmt::format("{} {}.{}.{}",
#if defined(__clang__)
                                         "clang", __clang_major__, __clang_minor__, __clang_patchlevel__
#elif defined(__GNUC__)
                                         "gcc", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__
#else
                                         "unknown", 0, 0, 0
#endif
                                         )},
                {"cplusplus", static_cast<long>(__cplusplus)},
                {"system", sys},
                {"pointer_bits", 8 * sizeof(void*)}};
  return m;
}

Json manifest_to_json(const RunManifest& m) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["config"] = m.config;
  j["derived"] = m.derived;
  j["outputs"] = m.outputs;
  j["platform"] = m.platform;
  return j;
}

}  // namespace glkpz
