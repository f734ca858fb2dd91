#pragma once

// Flat `key = value` run configuration. Lines starting with '#' are comments,
// keys carry dotted section prefixes. Numbers are written in shortest
// round-trip form; on input a `2pi*` prefix multiplies by 2 pi, and grid keys
// accept either `start:stop:count` or a comma separated list.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cqed/constants.hpp"
#include "cqed/protocol.hpp"
#include "cqed/qed_core.hpp"

namespace cqed {

inline constexpr std::string_view kVersion = "0.1.0";

struct GridSpec {
  std::vector<double> probe_detunings;  // rad/s, probe minus cavity
  std::vector<double> dipole_powers;    // relative trap power after the trigger
};

/// Everything a figure-producing command depends on, apart from the code.
struct RunConfig {
  SystemParams system = rb85_cavity_params();

  // Shared by all windows.
  double atom_cavity_detuning = kDefaultStarkShift;  // bare Delta = omega_cav - omega_at
  double trap_depth = kDefaultTrapDepth;
  double stark_coeff = kDefaultStarkShift;
  double power_scale = 1.0;

  double monitor_delta_pc = 0.0;
  double monitor_eta = 0.3 * system.kappa;
  double probe_delta_pc = -system.g0;
  double probe_eta = 0.5 * system.kappa;
  double cool_delta_pc = -constants::two_pi * 20.0e6;
  double cool_eta = 0.3 * system.kappa;

  ProtocolConfig protocol;  // drive fields are ignored; see build_protocol()

  GridSpec grid{linspace(-constants::two_pi * 25.0e6, constants::two_pi * 17.0e6, 29), {1.0}};
  std::size_t atoms = 200;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  DiffusionMode mode = DiffusionMode::both;
  std::string output_dir = "out";

  DriveSettings drive(double delta_pc, double eta) const {
    DriveSettings d = DriveSettings::from_detunings(delta_pc, atom_cavity_detuning, eta, trap_depth, stark_coeff);
    d.power_scale = power_scale;
    return d;
  }

  /// Protocol with the three window drives assembled from the shared settings,
  /// at relative trap power `power` after the trigger.
  ProtocolConfig build_protocol(double power) const {
    ProtocolConfig c = protocol;
    c.trap_power_high = power;
    c.monitor_drive = drive(monitor_delta_pc, monitor_eta);
    c.probe_drive = drive(probe_delta_pc, probe_eta);
    c.cool_drive = drive(cool_delta_pc, cool_eta);
    return c.with_mode(mode);
  }
  ProtocolConfig build_protocol() const { return build_protocol(protocol.trap_power_high); }

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> e = system.validation_errors();
    if (grid.probe_detunings.empty()) e.emplace_back("grid.probe_detuning must not be empty");
    if (grid.dipole_powers.empty()) e.emplace_back("grid.dipole_power must not be empty");
    for (double v : grid.probe_detunings)
      if (!std::isfinite(v)) {
        e.emplace_back("grid.probe_detuning values must be finite");
        break;
      }
    for (double v : grid.dipole_powers)
      if (!(v > protocol.trap_power_low) || !std::isfinite(v)) {
        e.emplace_back("grid.dipole_power values must exceed protocol.trap_power_low");
        break;
      }
    if (atoms < 1) e.emplace_back("ensemble.atoms must be >= 1");
    if (jobs < 1) e.emplace_back("ensemble.jobs must be >= 1");
    if (!(power_scale > 0.0)) e.emplace_back("calibration.power_scale must be > 0");
    if (!(trap_depth >= 0.0)) e.emplace_back("trap.depth must be >= 0");
    if (!(monitor_eta > 0.0)) e.emplace_back("monitor.eta must be > 0");
    if (!(probe_eta >= 0.0)) e.emplace_back("probe.eta must be >= 0");
    if (!(cool_eta >= 0.0)) e.emplace_back("cool.eta must be >= 0");
    ProtocolConfig c = build_protocol();
    for (auto& m : c.validation_errors())
      if (m.rfind("monitor.eta", 0) != 0) e.push_back(std::move(m));
    return e;
  }
};

struct ConfigError : std::runtime_error {
  std::vector<std::string> messages;
  explicit ConfigError(std::vector<std::string> m) : std::runtime_error(join(m)), messages(std::move(m)) {}

  static std::string join(const std::vector<std::string>& m) {
    std::string s;
    for (const auto& x : m) s += (s.empty() ? "" : "\n") + x;
    return s;
  }
};

/// Shortest decimal form that parses back to the same double; '.' radix, no
/// locale.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  double scale = 1.0;
  if (!s.empty() && (s.front() == '-' || s.front() == '+') && s.substr(1).rfind("2pi*", 0) == 0) {
    if (s.front() == '-') scale = -1.0;
    s.remove_prefix(1);
  }
  if (s.rfind("2pi*", 0) == 0) {
    scale *= constants::two_pi;
    s.remove_prefix(4);
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v * scale;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  Int v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  return std::nullopt;
}

/// `a:b:n` (inclusive, n >= 1) or `v1, v2, ...`. A leading `2pi*` scales every
/// element.
inline std::optional<std::vector<double>> parse_grid(std::string_view s) {
  s = trim(s);
  double scale = 1.0;
  if (s.rfind("2pi*", 0) == 0) {
    scale = constants::two_pi;
    s.remove_prefix(4);
  }
  std::vector<double> out;
  if (s.find(':') != std::string_view::npos) {
    const auto c1 = s.find(':');
    const auto c2 = s.find(':', c1 + 1);
    if (c2 == std::string_view::npos) return std::nullopt;
    const auto a = parse_real(s.substr(0, c1));
    const auto b = parse_real(s.substr(c1 + 1, c2 - c1 - 1));
    const auto n = parse_int<std::size_t>(s.substr(c2 + 1));
    if (!a || !b || !n || *n == 0) return std::nullopt;
    out = linspace(*a * scale, *b * scale, *n);
    return out;
  }
  while (!s.empty()) {
    const auto comma = s.find(',');
    const auto v = parse_real(s.substr(0, comma));
    if (!v) return std::nullopt;
    out.push_back(*v * scale);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (out.empty()) return std::nullopt;
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  // returns an error description, empty on success
  std::function<std::string(RunConfig&, std::string_view)> set;
};

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    auto real = [&t](std::string key, auto ref) {
      t.push_back({key, [ref](const RunConfig& c) { return format_number(ref(const_cast<RunConfig&>(c))); },
                   [ref](RunConfig& c, std::string_view v) -> std::string {
                     const auto x = parse_real(v);
                     if (!x) return "expected a number";
                     ref(c) = *x;
                     return {};
                   }});
    };
    auto flag = [&t](std::string key, auto ref) {
      t.push_back({key, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
                   [ref](RunConfig& c, std::string_view v) -> std::string {
                     const auto x = parse_bool(v);
                     if (!x) return "expected true or false";
                     ref(c) = *x;
                     return {};
                   }});
    };
    auto integer = [&t](std::string key, auto ref) {
      using Int = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
      t.push_back({key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
                   [ref](RunConfig& c, std::string_view v) -> std::string {
                     const auto x = parse_int<Int>(v);
                     if (!x) return "expected a non-negative integer";
                     ref(c) = *x;
                     return {};
                   }});
    };
    auto grid = [&t](std::string key, auto ref) {
      t.push_back({key, [ref](const RunConfig& c) { return format_list(ref(const_cast<RunConfig&>(c))); },
                   [ref](RunConfig& c, std::string_view v) -> std::string {
                     auto x = parse_grid(v);
                     if (!x) return "expected start:stop:count or a comma separated list";
                     ref(c) = std::move(*x);
                     return {};
                   }});
    };

    real("system.g0", [](RunConfig& c) -> double& { return c.system.g0; });
    real("system.kappa", [](RunConfig& c) -> double& { return c.system.kappa; });
    real("system.gamma", [](RunConfig& c) -> double& { return c.system.gamma; });
    real("system.lambda_probe", [](RunConfig& c) -> double& { return c.system.lambda_probe; });
    real("system.lambda_trap", [](RunConfig& c) -> double& { return c.system.lambda_trap; });
    real("system.waist_probe", [](RunConfig& c) -> double& { return c.system.waist_probe; });
    real("system.waist_trap", [](RunConfig& c) -> double& { return c.system.waist_trap; });
    real("system.cavity_length", [](RunConfig& c) -> double& { return c.system.cavity_length; });
    real("system.mass", [](RunConfig& c) -> double& { return c.system.mass; });

    real("atom.delta", [](RunConfig& c) -> double& { return c.atom_cavity_detuning; });
    real("trap.depth", [](RunConfig& c) -> double& { return c.trap_depth; });
    real("trap.stark_coeff", [](RunConfig& c) -> double& { return c.stark_coeff; });
    real("calibration.power_scale", [](RunConfig& c) -> double& { return c.power_scale; });

    real("monitor.delta_pc", [](RunConfig& c) -> double& { return c.monitor_delta_pc; });
    real("monitor.eta", [](RunConfig& c) -> double& { return c.monitor_eta; });
    real("probe.delta_pc", [](RunConfig& c) -> double& { return c.probe_delta_pc; });
    real("probe.eta", [](RunConfig& c) -> double& { return c.probe_eta; });
    real("cool.delta_pc", [](RunConfig& c) -> double& { return c.cool_delta_pc; });
    real("cool.eta", [](RunConfig& c) -> double& { return c.cool_eta; });

    real("protocol.inject_speed", [](RunConfig& c) -> double& { return c.protocol.inject_speed; });
    real("protocol.inject_distance", [](RunConfig& c) -> double& { return c.protocol.inject_distance; });
    real("protocol.inject_temperature", [](RunConfig& c) -> double& { return c.protocol.inject_temperature; });
    real("protocol.inject_y_spread", [](RunConfig& c) -> double& { return c.protocol.inject_y_spread; });
    real("protocol.inject_z_spread", [](RunConfig& c) -> double& { return c.protocol.inject_z_spread; });
    real("protocol.injection_timeout", [](RunConfig& c) -> double& { return c.protocol.injection_timeout; });
    real("protocol.trigger_threshold", [](RunConfig& c) -> double& { return c.protocol.trigger_threshold; });
    real("protocol.trap_power_low", [](RunConfig& c) -> double& { return c.protocol.trap_power_low; });
    real("protocol.trap_power_high", [](RunConfig& c) -> double& { return c.protocol.trap_power_high; });
    real("protocol.probe_window", [](RunConfig& c) -> double& { return c.protocol.probe_window; });
    real("protocol.cool_window", [](RunConfig& c) -> double& { return c.protocol.cool_window; });
    real("protocol.qualify_threshold", [](RunConfig& c) -> double& { return c.protocol.qualify_threshold; });
    real("protocol.loss_radius", [](RunConfig& c) -> double& { return c.protocol.loss_radius; });
    real("protocol.loss_zmax", [](RunConfig& c) -> double& { return c.protocol.loss_zmax; });
    real("protocol.max_sim_time", [](RunConfig& c) -> double& { return c.protocol.max_sim_time; });

    real("noise.sigma_eps", [](RunConfig& c) -> double& { return c.protocol.sigma_eps; });
    real("noise.dt", [](RunConfig& c) -> double& { return c.protocol.dt_noise; });

    real("integrator.tolerance", [](RunConfig& c) -> double& { return c.protocol.integrator.tolerance; });
    real("integrator.min_step", [](RunConfig& c) -> double& { return c.protocol.integrator.min_step; });
    real("integrator.max_step", [](RunConfig& c) -> double& { return c.protocol.integrator.max_step; });
    integer("integrator.max_retries", [](RunConfig& c) -> int& { return c.protocol.integrator.max_retries; });

    flag("forces.gravity", [](RunConfig& c) -> bool& { return c.protocol.dynamics.forces.gravity; });
    flag("forces.friction", [](RunConfig& c) -> bool& { return c.protocol.dynamics.forces.friction; });
    flag("forces.stark_dipole", [](RunConfig& c) -> bool& { return c.protocol.dynamics.forces.stark_dipole; });
    flag("dynamics.spontaneous_events", [](RunConfig& c) -> bool& { return c.protocol.dynamics.spontaneous_events; });
    flag("dynamics.axial_only_dipole_kicks",
         [](RunConfig& c) -> bool& { return c.protocol.dynamics.axial_only_dipole_kicks; });

    grid("grid.probe_detuning", [](RunConfig& c) -> std::vector<double>& { return c.grid.probe_detunings; });
    grid("grid.dipole_power", [](RunConfig& c) -> std::vector<double>& { return c.grid.dipole_powers; });

    integer("ensemble.atoms", [](RunConfig& c) -> std::size_t& { return c.atoms; });
    integer("ensemble.seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    integer("ensemble.jobs", [](RunConfig& c) -> unsigned& { return c.jobs; });
    t.push_back({"ensemble.mode", [](const RunConfig& c) { return std::string(to_string(c.mode)); },
                 [](RunConfig& c, std::string_view v) -> std::string {
                   const auto m = parse_diffusion_mode(trim(v));
                   if (!m) return "expected both, sp_only or dp_only";
                   c.mode = *m;
                   return {};
                 }});
    t.push_back({"output.dir", [](const RunConfig& c) { return c.output_dir; },
                 [](RunConfig& c, std::string_view v) -> std::string {
                   v = trim(v);
                   if (v.empty()) return "expected a path";
                   c.output_dir = std::string(v);
                   return {};
                 }});
    return t;
  }();
  return table;
}

}  // namespace detail

/// Applies `key = value` lines on top of `cfg`. All problems (syntax, unknown
/// keys, bad values) are collected and thrown together.
inline void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view origin = "<config>") {
  std::vector<std::string> errors;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back(where + "expected `key = value`");
      continue;
    }
    const std::string_view key = detail::trim(line.substr(0, eq));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : detail::fields()) {
      if (f.key != key) continue;
      found = true;
      if (auto msg = f.set(cfg, value); !msg.empty())
        errors.push_back(where + std::string(key) + ": " + msg + " (got `" + std::string(value) + "`)");
      break;
    }
    if (!found) errors.push_back(where + "unknown key `" + std::string(key) + "`");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({path + ": cannot open"});
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

/// Later files override earlier ones. Validation runs once on the merged result.
inline RunConfig load_config(const std::vector<std::string>& paths, RunConfig base = {}) {
  std::vector<std::string> errors;
  for (const auto& p : paths) {
    try {
      apply_config_file(base, p);
    } catch (const ConfigError& e) {
      errors.insert(errors.end(), e.messages.begin(), e.messages.end());
    }
  }
  if (errors.empty()) errors = base.validation_errors();
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return base;
}

/// Canonical text form: every key, fixed order, shortest round-trip numbers.
inline std::string serialize(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that affects results. Thread count and output location
/// are excluded so that they never change output bytes.
inline std::string config_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.jobs = 1;
  c.output_dir.clear();
  char buf[17];
  const auto r = std::to_chars(buf, buf + 16, fnv1a(serialize(c)), 16);
  std::string h(buf, r.ptr);
  return std::string(16 - h.size(), '0') + h;
}

}  // namespace cqed
