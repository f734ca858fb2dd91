// cqed: command-line front end for steady-state maps, trajectory ensembles and
// noise calibration.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/config.hpp"
#include "cqed/io.hpp"
#include "cqed/protocol.hpp"
#include "cqed/qed_core.hpp"
#include "cqed/spectrum.hpp"

namespace fs = std::filesystem;
using namespace cqed;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream os(path, std::ios::binary | std::ios::out | mode);
  if (!os) throw CliError("cannot write " + path.string());
  return os;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw CliError("cannot create output directory " + dir.string());
}

std::vector<double> grid_or_throw(const std::string& text, const char* flag) {
  auto g = detail::parse_grid(text);
  if (!g) throw CliError(std::string(flag) + ": expected start:stop:count or a comma separated list");
  return *g;
}

// ---------------------------------------------------------------------------

struct SpectrumArgs {
  std::vector<std::string> configs;
  std::string grid_delta = "2pi*-40e6:40e6:161";
  std::string grid_probe = "2pi*-40e6:40e6:161";
  std::string out = "maps";
};

int run_spectrum(const SpectrumArgs& a) {
  const RunConfig cfg = load_config(a.configs);
  const auto deltas = grid_or_throw(a.grid_delta, "--grid-delta");
  const auto probes = grid_or_throw(a.grid_probe, "--grid-probe");
  const DriveSettings drive = cfg.drive(0.0, cfg.probe_eta);
  const std::string hash = config_hash(cfg);
  ensure_dir(a.out);
  {
    auto os = open_out(fs::path(a.out) / "transmission.csv");
    write_map_csv(os, transmission_map(deltas, probes, drive, cfg.system), hash, "transmission_norm");
    if (!os) throw CliError("write failed: transmission.csv");
  }
  {
    auto os = open_out(fs::path(a.out) / "excitation.csv");
    write_map_csv(os, excitation_map(deltas, probes, drive, cfg.system), hash, "p_excited");
    if (!os) throw CliError("write failed: excitation.csv");
  }
  std::cout << "wrote " << (fs::path(a.out) / "transmission.csv").string() << " and "
            << (fs::path(a.out) / "excitation.csv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EnsembleArgs {
  std::vector<std::string> configs;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::size_t> atoms;
  std::string out;
  bool resume = false;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Splits into complete lines (each keeps its '\n'); a trailing partial line is
// dropped.
std::vector<std::string> complete_lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto nl = s.find('\n', start);
    if (nl == std::string::npos) break;
    out.push_back(s.substr(start, nl - start + 1));
    start = nl + 1;
  }
  return out;
}

std::string spectrum_preamble(const RunConfig& cfg) {
  std::ostringstream os;
  write_comment_block(os, config_hash(cfg),
                      {"mode " + std::string(to_string(cfg.mode)), "seed " + std::to_string(cfg.seed),
                       "atoms " + std::to_string(cfg.atoms)});
  return os.str();
}

int run_ensemble_cmd(const EnsembleArgs& a) {
  RunConfig cfg = load_config(a.configs);
  if (!a.mode.empty()) {
    auto m = parse_diffusion_mode(a.mode);
    if (!m) throw CliError("--mode: expected both, sp_only or dp_only");
    cfg.mode = *m;
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.jobs) cfg.jobs = *a.jobs;
  if (a.atoms) cfg.atoms = *a.atoms;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (auto errs = cfg.validation_errors(); !errs.empty()) throw ConfigError(std::move(errs));

  const fs::path dir = cfg.output_dir;
  ensure_dir(dir);
  const fs::path spectrum_path = dir / "spectrum.csv";
  const fs::path atoms_path = dir / "atoms.csv";
  const std::string preamble = spectrum_preamble(cfg);
  const std::string spectrum_head = preamble + std::string(kSpectrumHeader) + "\n";
  const std::string atoms_head = preamble + std::string(kAtomsHeader) + "\n";
  const std::size_t n_cols = cfg.grid.probe_detunings.size();
  const std::size_t n_points = n_cols * cfg.grid.dipole_powers.size();

  std::size_t done = 0;
  std::string spectrum_keep = spectrum_head;
  std::string atoms_keep = atoms_head;
  if (a.resume && fs::exists(spectrum_path)) {
    const std::string old = read_file(spectrum_path);
    if (old.rfind(spectrum_head, 0) != 0)
      throw CliError("--resume: " + spectrum_path.string() + " was written with a different configuration");
    for (const auto& line : complete_lines(old.substr(spectrum_head.size()))) {
      if (done >= n_points) break;
      spectrum_keep += line;
      ++done;
    }
    if (fs::exists(atoms_path)) {
      const std::string old_atoms = read_file(atoms_path);
      if (old_atoms.rfind(atoms_head, 0) == 0) {
        for (const auto& line : complete_lines(old_atoms.substr(atoms_head.size()))) {
          std::size_t row = 0;
          std::size_t col = 0;
          if (std::sscanf(line.c_str(), "%zu,%zu,", &row, &col) != 2) continue;
          if (row * n_cols + col < done) atoms_keep += line;
        }
      }
    }
  }
  {
    auto s = open_out(spectrum_path);
    s << spectrum_keep;
    auto t = open_out(atoms_path);
    t << atoms_keep;
  }
  if (done < n_points) {
    auto spectrum = open_out(spectrum_path, std::ios::app);
    auto atoms = open_out(atoms_path, std::ios::app);
    run_grid(
        cfg,
        [&](const SpectrumPoint& p, const std::vector<RunRecord>& dark, const std::vector<RunRecord>& runs) {
          if (p.column == 0) write_atom_rows(atoms, p.row, 0, "dark", dark);
          write_atom_rows(atoms, p.row, p.column, "probe", runs);
          write_spectrum_row(spectrum, p);
          atoms.flush();
          spectrum.flush();
          if (!spectrum || !atoms) throw CliError("write failed in " + dir.string());
          std::cerr << "point " << (p.row * n_cols + p.column + 1) << "/" << n_points
                    << " excess loss " << format_number(p.excess_loss_rate) << " /s\n";
        },
        done);
  }
  std::cout << "wrote " << spectrum_path.string() << " and " << atoms_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::vector<std::string> configs;
  double target = 0.0;
  std::string overlay = "noise.cfg";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::size_t> atoms;
  double sigma_high = 0.5;
};

int run_calibrate(const CalibrateArgs& a) {
  if (!(a.target > 0.0)) throw CliError("--target-dark-time must be > 0 (a zero-noise target is not calibratable)");
  RunConfig cfg = load_config(a.configs);
  if (a.seed) cfg.seed = *a.seed;
  if (a.jobs) cfg.jobs = *a.jobs;
  if (a.atoms) cfg.atoms = *a.atoms;
  CalibrationOptions opt;
  opt.sigma_high = a.sigma_high;
  const CalibrationResult r = calibrate_noise(a.target, cfg, cfg.seed, opt);
  auto os = open_out(a.overlay);
  os << "# noise overlay from cqed calibrate\n# cqed " << kVersion << "\n# target_dark_time "
     << format_number(a.target) << "\n# achieved_dark_time " << format_number(r.storage_time)
     << "\nnoise.sigma_eps = " << format_number(r.sigma_eps) << "\n";
  if (!os) throw CliError("write failed: " + a.overlay);
  std::cout << "sigma_eps = " << format_number(r.sigma_eps) << "\nstorage_time = " << format_number(r.storage_time)
            << "\nevaluations = " << r.evaluations << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrajectoryArgs {
  std::vector<std::string> configs;
  std::uint64_t atom = 0;
  std::optional<std::uint64_t> seed;
  std::optional<double> probe;
  bool dark = false;
  std::string out = "trajectory.csv";
};

int run_trajectory_cmd(const TrajectoryArgs& a) {
  RunConfig cfg = load_config(a.configs);
  if (a.seed) cfg.seed = *a.seed;
  ProtocolConfig pc = cfg.build_protocol(cfg.grid.dipole_powers.front());
  if (a.probe) pc.probe_drive = pc.probe_drive.with_probe_detuning(*a.probe);
  if (a.dark) pc = pc.dark();
  auto os = open_out(a.out);
  write_comment_block(os, config_hash(cfg), {"seed " + std::to_string(cfg.seed), "atom " + std::to_string(a.atom)});
  os << kTrajectoryHeader << "\n";
  RngStream rng(cfg.seed, ensemble_stream_id(0, a.atom));
  const RunRecord rec = run_trajectory(pc, cfg.system, rng, [&](const AtomState& s, double eps, TrajectoryEvent ev) {
    write_trajectory_row(os, s, eps, ev);
  });
  if (!os) throw CliError("write failed: " + a.out);
  std::cout << "captured " << rec.captured << " storage_time " << format_number(rec.storage_time) << " escape "
            << to_string(rec.escape_axis) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cavity QED trapping simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  SpectrumArgs sa;
  auto* sp = app.add_subcommand("spectrum", "steady-state transmission and excitation maps");
  sp->add_option("--config", sa.configs, "config file(s); later files override earlier ones");
  sp->add_option("--grid-delta", sa.grid_delta, "atom-cavity detunings, rad/s (start:stop:count or list, 2pi* prefix)");
  sp->add_option("--grid-probe", sa.grid_probe, "probe-cavity detunings, rad/s");
  sp->add_option("--out", sa.out, "output directory");

  EnsembleArgs ea;
  auto* en = app.add_subcommand("ensemble", "trajectory ensembles over the dipole power x probe detuning grid");
  en->add_option("--config", ea.configs, "config file(s); later files override earlier ones");
  en->add_option("--mode", ea.mode, "both | sp_only | dp_only");
  en->add_option("--seed", ea.seed, "master seed");
  en->add_option("--jobs", ea.jobs, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  en->add_option("--atoms", ea.atoms, "atoms per grid point")->check(CLI::PositiveNumber);
  en->add_option("--out", ea.out, "output directory");
  en->add_flag("--resume", ea.resume, "continue an interrupted grid in --out");

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "fit the trap-noise width to a dark storage time");
  cal->add_option("--config", ca.configs, "config file(s)");
  cal->add_option("--target-dark-time", ca.target, "target mean dark storage time, s")->required();
  cal->add_option("--overlay", ca.overlay, "config overlay to write");
  cal->add_option("--seed", ca.seed, "master seed");
  cal->add_option("--jobs", ca.jobs, "worker threads")->check(CLI::PositiveNumber);
  cal->add_option("--atoms", ca.atoms, "atoms per evaluation (>= 100 recommended)")->check(CLI::PositiveNumber);
  cal->add_option("--sigma-high", ca.sigma_high, "upper end of the search range");

  TrajectoryArgs ta;
  auto* tr = app.add_subcommand("trajectory", "dump one trajectory as CSV");
  tr->add_option("--config", ta.configs, "config file(s)");
  tr->add_option("--seed", ta.seed, "master seed");
  tr->add_option("--atom", ta.atom, "atom index (stream id in family 0)");
  tr->add_option("--probe-detuning", ta.probe, "probe-cavity detuning, rad/s");
  tr->add_flag("--dark", ta.dark, "no probe light");
  tr->add_option("--out", ta.out, "output file");

  std::vector<std::string> show_configs;
  auto* show = app.add_subcommand("config", "print the merged configuration");
  show->add_option("--config", show_configs, "config file(s)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sp) return run_spectrum(sa);
    if (*en) return run_ensemble_cmd(ea);
    if (*cal) return run_calibrate(ca);
    if (*tr) return run_trajectory_cmd(ta);
    if (*show) {
      const RunConfig cfg = load_config(show_configs);
      std::cout << "# config_hash " << config_hash(cfg) << "\n" << serialize(cfg);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid configuration\n";
    for (const auto& m : e.messages) std::cerr << "  " << m << "\n";
    return 2;
  } catch (const CalibrationError& e) {
    std::cerr << "error: calibration failed: " << e.what() << "\n";
    return 3;
  } catch (const IntegrationError& e) {
    std::cerr << "error: integration failed: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
