// Acceptance suite. Prints one PASS/FAIL line per criterion; tolerances are
// fixed here. Usage: cqed_acceptance [criterion ...] (default: all). Criteria
// 7 and 8 share one ensemble run and are always reported together.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cqed/analysis.hpp"
#include "cqed/spectrum.hpp"
#include "cqed/stochastic.hpp"
#include "oracles.hpp"

#ifndef CQED_CLI_PATH
#error "CQED_CLI_PATH must name the cqed executable"
#endif

using namespace cqed;
using constants::two_pi;
namespace fs = std::filesystem;

namespace {

struct Line {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

double mhz(double w) { return w / two_pi / 1e6; }

const SystemParams P = rb85_cavity_params();

// Probe positions of the two transmission maxima nearest to the dressed states.
struct PeakPair {
  double upper = 0.0;
  double lower = 0.0;
};

PeakPair peak_heights(const SpectralMap& m, const DressedPair& ds, double g0) {
  PeakPair h;
  for (std::size_t j = 0; j < m.probe.size(); ++j) {
    const double x = m.probe[j];
    if (std::abs(x - ds.e_plus.real()) < 0.5 * g0) h.upper = std::max(h.upper, m.at(0, j));
    if (std::abs(x - ds.e_minus.real()) < 0.5 * g0) h.lower = std::max(h.lower, m.at(0, j));
  }
  return h;
}

// ---------------------------------------------------------------------------

std::vector<Line> criterion1() {
  Timer t;
  DriveSettings d;
  d.eta = 0.1 * P.kappa;
  const auto probes = linspace(-2 * P.g0, 2 * P.g0, 8001);
  const SpectralMap m = transmission_map(std::vector<double>{0.0}, probes, d, P);
  const auto peaks = local_maxima(m.values);
  bool ok = peaks.size() == 2;
  double ratio = 0.0;
  if (ok) {
    const double split = parabolic_peak(probes, m.values, peaks[1]) - parabolic_peak(probes, m.values, peaks[0]);
    ratio = split / (2 * P.g0);
    ok = std::abs(ratio - 1.0) < 0.02;
  }
  const double s = t.seconds();
  return {{"1", "vacuum-Rabi splitting", ok && s < 1.0,
           fmt("g, kappa, gamma = 2pi x (%.1f, %.2f, %.2f) MHz; %zu peaks; splitting / 2g = %.5f (tol 0.02); %.3f s "
               "(limit 1 s)",
               mhz(P.g0), mhz(P.kappa), mhz(P.gamma), peaks.size(), ratio, s)}};
}

std::vector<Line> criterion2() {
  Timer t;
  DriveSettings d;
  d.eta = 0.1 * P.kappa;
  const auto probes = linspace(-3 * P.g0, 3 * P.g0, 30001);
  double worst_ratio_dev = 0.0;
  double worst_at = 0.0;
  double worst_measured = 0.0;
  double worst_t2 = 0.0;
  double emin = 1e300, emax = 0, tmin = 1e300, tmax = 0;
  for (double D : linspace(-P.g0, P.g0, 9)) {
    const std::vector<double> row{D};
    const DressedPair ds = dressed_states(D, P);
    const PeakPair ht = peak_heights(transmission_map(row, probes, d, P), ds, P.g0);
    const PeakPair he = peak_heights(excitation_map(row, probes, d, P), ds, P.g0);
    if (std::abs(D) > 1e-9 * P.g0) {
      const double t2 = std::pow(std::tan(ds.mixing_angle), 2);
      const double measured = ht.upper / ht.lower;
      const double dev = std::abs(measured / t2 - 1.0);
      if (dev > worst_ratio_dev) {
        worst_ratio_dev = dev;
        worst_at = D;
        worst_measured = measured;
        worst_t2 = t2;
      }
    }
    emin = std::min({emin, he.upper, he.lower});
    emax = std::max({emax, he.upper, he.lower});
    tmin = std::min({tmin, ht.upper, ht.lower});
    tmax = std::max({tmax, ht.upper, ht.lower});
  }
  const double evar = emax / emin - 1.0;
  const double tvar = tmax / tmin - 1.0;
  const double s = t.seconds();
  const bool ok = worst_ratio_dev < 0.05 && evar < 0.25 && tvar > 2.0 && s < 10.0;
  return {{"2", "peak-height laws", ok,
           fmt("worst transmission peak ratio / tan^2(theta) = %.3f / %.3f at Delta = %.1f MHz (deviation %.1f%%, "
               "tol 5%%); excitation peak variation %.1f%% (tol < 25%%); transmission variation %.0f%% (need > "
               "200%%); %.2f s (limit 10 s)",
               worst_measured, worst_t2, mhz(worst_at), 100 * worst_ratio_dev, 100 * evar, 100 * tvar, s)}};
}

std::vector<Line> criterion3() {
  Timer t;
  const DriveSettings d =
      DriveSettings::from_detunings(-P.g0, kDefaultStarkShift, 0.3 * P.kappa, kDefaultTrapDepth, kDefaultStarkShift);
  std::mt19937 gen(2024);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  std::uniform_real_distribution<double> uz(0.0, 0.25);
  double worst = 0.0;
  int checked = 0;
  for (int point = 0; point < 10; ++point) {
    AtomState s;
    s.pos = {u(gen) * P.waist_probe, u(gen) * P.waist_probe, uz(gen) * P.lambda_probe};
    ForceOptions f{false, false, false, false, false, true, true};
    DynamicsOptions opt;
    opt.forces = f;
    opt.freeze_position = true;
    const ForceBreakdown b = total_force_and_noise(s.pos, d, P, 1.0, f);
    // about one spontaneous emission per step keeps the recoil moments well sampled
    const double h = b.d_sp > 0 ? P.hbar_k() * P.hbar_k() / (2 * b.d_sp) : 1e-6;
    StepControl ctrl;
    ctrl.tolerance = 1e3;
    ctrl.min_step = ctrl.max_step = ctrl.next_step = h;
    RngStream rng(77, point);
    NoiseProcess noise;
    const int n = 100000;
    Vec3 sum, sum2;
    for (int i = 0; i < n; ++i) {
      const StepResult r = step(s, d, P, noise, rng, ctrl, opt);
      const Vec3 dp = r.state.mom - s.mom;
      sum += dp;
      for (std::size_t j = 0; j < 3; ++j) sum2[j] += dp[j] * dp[j];
      s.t = r.state.t;
    }
    for (std::size_t j = 0; j < 3; ++j) {
      const double expect = 2 * (b.d_dp_axis[j] + b.d_sp_axis[j]);
      if (!(expect > 0)) continue;
      const double var = sum2[j] / n - std::pow(sum[j] / n, 2);
      worst = std::max(worst, std::abs(var / h / expect - 1.0));
      ++checked;
    }
  }
  const double s = t.seconds();
  return {{"3", "diffusion contract", worst < 0.05 && checked == 30 && s < 30.0,
           fmt("10 points x 3 axes x 1e5 steps: worst |var rate / 2D - 1| = %.2f%% (tol 5%%); %.1f s (limit 30 s)",
               100 * worst, s)}};
}

std::vector<Line> criterion4() {
  Timer t;
  RngStream rng(4, 0);
  const int n = 1000000;
  Vec3 m, m2;
  bool unit = true;
  for (int i = 0; i < n; ++i) {
    const Vec3 u = spontaneous_recoil_direction(rng);
    unit = unit && std::abs(norm(u) - 1.0) < 1e-15;
    for (std::size_t j = 0; j < 3; ++j) {
      m[j] += u[j] * u[j];
      m2[j] += std::pow(u[j], 4);
    }
  }
  const Vec3 expect{0.3, 0.3, 0.4};
  double worst_sigma = 0.0;
  Vec3 mean;
  for (std::size_t j = 0; j < 3; ++j) {
    mean[j] = m[j] / n;
    const double se = std::sqrt((m2[j] / n - mean[j] * mean[j]) / n);
    worst_sigma = std::max(worst_sigma, std::abs(mean[j] - expect[j]) / se);
  }
  const double s = t.seconds();
  return {{"4", "recoil anisotropy", worst_sigma < 3.0 && unit && s < 5.0,
           fmt("E[u_z^2, u_x^2, u_y^2] = (%.5f, %.5f, %.5f) over 1e6 draws; worst deviation %.2f sigma (tol 3); "
               "|u| = 1: %s; %.2f s (limit 5 s)",
               mean.z, mean.x, mean.y, worst_sigma, unit ? "yes" : "no", s)}};
}

std::vector<Line> criterion5() {
  Timer t;
  const DriveSettings d =
      DriveSettings::from_detunings(-P.g0, kDefaultStarkShift, 0.3 * P.kappa, kDefaultTrapDepth, kDefaultStarkShift);
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_real_distribution<double> uz(0.0, 0.25);
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Vec3 r{u(gen) * P.waist_probe, u(gen) * P.waist_probe, uz(gen) * P.lambda_probe};
    const Mat3 lr = friction_tensor(r, d, P);
    for (double v : {1e-3, 1e-2}) worst = std::max(worst, oracle::relative_distance(lr, oracle::time_domain_friction(r, d, P, v)));
  }
  const double s = t.seconds();
  return {{"5", "friction oracle", worst < 0.01 && s < 30.0,
           fmt("5 random points, v = 1 mm/s and 1 cm/s: worst relative tensor distance %.3f%% (tol 1%%); %.1f s "
               "(limit 30 s)",
               100 * worst, s)}};
}

// Cavity D_dp on the lower normal mode at Delta = 0, maximised along the axis,
// against a free-space standing wave with the same spatial profile scaled to
// the local cavity intensity at that point.
std::vector<Line> criterion6() {
  Timer t;
  const DriveSettings d = DriveSettings::from_detunings(-P.g0, 0.0, 0.1 * P.kappa);
  double best = 0.0;
  double best_z = 0.0;
  for (double z : linspace(0.0, 0.25 * P.lambda_probe, 2001)) {
    const double dd = diffusion(Vec3{0, 0, z}, d, P).d_dp();
    if (dd > best) {
      best = dd;
      best_z = z;
    }
  }
  const Vec3 r{0, 0, best_z};
  const double field = std::abs(steady_state(r, d, P).a_mean);
  const double delta_pa = effective_atom_detuning(r, d, P);
  auto sigma_part = [&](bool imag) {
    return [&, imag](const Vec3& x) {
      const complex s = oracle::free_space_sigma(field * coupling_at(x, P), P.gamma, delta_pa);
      return imag ? s.imag() : s.real();
    };
  };
  const Vec3 gr = oracle::gradient(sigma_part(false), r, 1e-12);
  const Vec3 gi = oracle::gradient(sigma_part(true), r, 1e-12);
  const double d_free = constants::hbar * constants::hbar * P.gamma * (dot(gr, gr) + dot(gi, gi));
  const double ratio = best / d_free;
  const double s = t.seconds();
  return {{"6", "cavity enhancement", ratio >= 30 && ratio <= 70 && s < 1.0,
           fmt("D_dp(cavity) / D_dp(free space) = %.1f at z = %.4f lambda (need [30, 70]); %.3f s (limit 1 s)", ratio,
               best_z / P.lambda_probe, s)}};
}

double l2(const std::vector<SpectrumPoint>& a, const std::vector<SpectrumPoint>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(a[i].excess_loss_rate - b[i].excess_loss_rate, 2);
  return std::sqrt(s);
}

std::size_t nearest(const std::vector<SpectrumPoint>& pts, double detuning) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (std::abs(pts[i].probe_detuning - detuning) < std::abs(pts[k].probe_detuning - detuning)) k = i;
  return k;
}

std::vector<Line> criteria7and8() {
  Timer t;
  RunConfig cfg;  // 200 atoms x 29 detunings at Delta = 0 (Stark-shifted resonance), power 1
  cfg.jobs = worker_count();
  const auto both = force_decomposition_run(cfg, DiffusionMode::both);
  const auto sp = force_decomposition_run(cfg, DiffusionMode::sp_only);
  const auto dp = force_decomposition_run(cfg, DiffusionMode::dp_only);

  std::vector<double> x, y, e;
  double g_mean = 0.0, d_mean = 0.0;
  for (const auto& p : both) {
    x.push_back(mhz(p.probe_detuning));
    y.push_back(p.loss_rate);
    e.push_back(std::max(p.loss_rate_error, 1e-9));
    g_mean += p.mean_coupling / both.size();
    d_mean += p.mean_detuning / both.size();
  }
  const DressedPair modes = dressed_states(d_mean, g_mean, P);
  const double pred_lo = mhz(modes.e_minus.real());
  const double pred_hi = mhz(modes.e_plus.real());
  // "near" a normal mode: within that mode's full linewidth
  const double tol_lo = mhz(modes.linewidth_minus());
  const double tol_hi = mhz(modes.linewidth_plus());
  const TwoPeakFit fit = fit_two_peaks(x, y, e, pred_lo, pred_hi, 6.0);

  const bool peaks_near = fit.converged && std::abs(fit.left.center - pred_lo) < tol_lo &&
                          std::abs(fit.right.center - pred_hi) < tol_hi;
  const bool peaks_significant =
      fit.left.amplitude > 3 * fit.left.amplitude_error && fit.right.amplitude > 3 * fit.right.amplitude_error;
  const double dist_dp = l2(dp, both);
  const double dist_sp = l2(sp, both);
  const auto& pl = both[nearest(both, two_pi * 1e6 * fit.left.center)];
  const auto& pr = both[nearest(both, two_pi * 1e6 * fit.right.center)];
  const bool share_ok = pl.dp_share > 0.5 && pr.dp_share > 0.5;
  const double s = t.seconds();

  std::ostringstream extra;
  extra << "scan (MHz: excess both / sp_only / dp_only, dp share, axial escapes):";
  for (std::size_t i = 0; i < both.size(); ++i)
    extra << fmt(" [%.0f: %.0f/%.0f/%.0f, %.2f, %.2f]", x[i], both[i].excess_loss_rate, sp[i].excess_loss_rate,
                 dp[i].excess_loss_rate, both[i].dp_share, both[i].axial_fraction);
  std::printf("  info: %s\n", extra.str().c_str());
  int below = 0;
  for (std::size_t i = 0; i < both.size(); ++i) {
    const double tol_sp = 2 * std::hypot(both[i].loss_rate_error, sp[i].loss_rate_error);
    const double tol_dp = 2 * std::hypot(both[i].loss_rate_error, dp[i].loss_rate_error);
    below += both[i].loss_rate < sp[i].loss_rate - tol_sp || both[i].loss_rate < dp[i].loss_rate - tol_dp;
  }
  double sp_axial = 0.0, sp_lost = 0.0;
  for (const auto& p : sp) {
    sp_axial += p.axial_fraction * p.n_lost;
    sp_lost += p.n_lost;
  }
  std::printf("  info: both-mode rate below a single-mode rate beyond 2 sigma at %d of %zu detunings; sp_only axial "
              "escape fraction %.2f; both-mode axial fraction at the peaks %.2f / %.2f\n",
              below, both.size(), sp_lost > 0 ? sp_axial / sp_lost : 0.0, pl.axial_fraction, pr.axial_fraction);

  const double dw = fit.right.fwhm - fit.left.fwhm;
  const double dw_err = std::hypot(fit.left.fwhm_error, fit.right.fwhm_error);
  return {
      {"7", "loss spectrum shape",
       peaks_near && peaks_significant && dist_dp < dist_sp && share_ok,
       fmt("%zu atoms x %zu detunings; fitted peaks %.2f +- %.2f and %.2f +- %.2f MHz vs predicted %.2f and %.2f MHz "
           "(tol: mode linewidths %.2f and %.2f MHz), amplitudes %.1f and %.1f sigma (need > 3); L2(dp_only, both) = %.0f < "
           "L2(sp_only, both) = %.0f /s; dp share at peaks %.2f / %.2f (need > 0.5); %.0f s for both criteria "
           "(target 1800 s on 8 cores, %u workers here)",
           cfg.atoms, both.size(), fit.left.center, fit.left.center_error, fit.right.center, fit.right.center_error,
           pred_lo, pred_hi, tol_lo, tol_hi, fit.left.amplitude / fit.left.amplitude_error,
           fit.right.amplitude / fit.right.amplitude_error, dist_dp, dist_sp, pl.dp_share, pr.dp_share, s,
           cfg.jobs)},
      {"8", "peak asymmetry", fit.converged && dw > 2 * dw_err,
       fmt("FWHM left %.2f +- %.2f MHz, right %.2f +- %.2f MHz; difference %.2f sigma (need > 2); chi2/dof %.1f/%d",
           fit.left.fwhm, fit.left.fwhm_error, fit.right.fwhm, fit.right.fwhm_error, dw_err > 0 ? dw / dw_err : 0.0,
           fit.chi2, fit.dof)}};
}

// Axial parametric heating on the trap axis (radial motion and gravity absent).
// Each atom sees one standard-normal sequence z_k on the 90 ns noise grid,
// applied as eps = 1 +- w z_k for both widths w and both signs. Mirroring the
// sign cancels the odd orders of the response, which carry most of the
// per-atom variance but no mean heating.
std::vector<Line> criterion9() {
  Timer t;
  const DriveSettings trap = DriveSettings::from_detunings(0.0, kDefaultStarkShift, 0.0, kDefaultTrapDepth,
                                                           kDefaultStarkShift);
  const double U0 = kDefaultTrapDepth;
  const double dt_noise = 9e-8;
  const double T = 1e-3;
  const int atoms = 1500;
  const double sigma = 0.02;
  const auto segments = static_cast<std::size_t>(std::ceil(T / dt_noise - 1e-9));
  const double omega = std::sqrt(2 * U0 * P.k_trap() * P.k_trap() / P.mass);
  const double sigma_p = std::sqrt(P.mass * constants::k_boltzmann * 20e-6);
  DynamicsOptions opt;
  opt.forces = ForceOptions{true, false, false, false, false, false, false};
  auto energy = [&](const AtomState& a) { return mechanical_energy(a, trap, P, 1.0, false) + U0; };

  double e0 = 0.0;
  double e1[2] = {0.0, 0.0};
  std::vector<double> z(segments);
  for (int i = 0; i < atoms; ++i) {
    RngStream rng(9, i);
    AtomState start;
    start.pos.z = sigma_p / (P.mass * omega) * rng.normal();
    start.mom.z = sigma_p * rng.normal();
    for (double& x : z) x = rng.normal();
    for (int w = 0; w < 2; ++w) {
      for (double sign : {-1.0, 1.0}) {
        AtomState s = start;
        NoiseProcess noise;  // zero width: eps is set here, segment by segment
        StepControl ctrl;
        ctrl.tolerance = 1e-8;
        for (std::size_t k = 0; k < segments; ++k) {
          noise.eps = std::max(0.0, 1.0 + sign * (w + 1) * sigma * z[k]);
          const double t_end = std::min(T, (k + 1) * dt_noise);
          while (s.t < t_end) s = step(s, trap, P, noise, rng, ctrl, opt, t_end).state;
        }
        e1[w] += energy(s);
      }
    }
    e0 += 2 * energy(start);
  }
  const double g1 = std::log(e1[0] / e0) / T;
  const double g2 = std::log(e1[1] / e0) / T;
  const double ratio = g2 / g1;
  // harmonic-limit rate pi^2 nu^2 S(2 nu) for a piecewise-constant process
  const double nu = omega / two_pi;
  const double x = constants::pi * 2 * nu * dt_noise;
  const double g_theory = std::pow(constants::pi * nu, 2) * 2 * sigma * sigma * dt_noise * std::pow(std::sin(x) / x, 2);
  const double s = t.seconds();
  return {{"9", "parametric-heating law", std::abs(ratio / 4.0 - 1.0) < 0.2 && s < 300.0,
           fmt("energy growth rate %.1f /s at sigma_eps = %.2f (harmonic estimate %.1f /s) and %.1f /s at %.2f; "
               "ratio %.3f (need 4 within 20%%); %d atoms, %.1f ms, axial trap %.0f kHz; %.1f s (limit 300 s)",
               g1, sigma, g_theory, g2, 2 * sigma, ratio, atoms, 1e3 * T, nu / 1e3, s)}};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CQED_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Line> criterion10() {
  Timer t;
  const fs::path dir = fs::temp_directory_path() / "cqed_acceptance_10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "run.cfg";
  std::ofstream(cfg) << "grid.probe_detuning = 2pi*-16e6:2pi*9e6:4\ngrid.dipole_power = 0.9, 1.1\n"
                        "ensemble.atoms = 6\nprotocol.max_sim_time = 2e-3\n";
  const std::string base = "ensemble --config " + cfg.string() + " --seed 17 --out ";
  bool ran = run_cli(base + (dir / "j1").string() + " --jobs 1") == 0;
  ran = ran && run_cli(base + (dir / "j8").string() + " --jobs 8") == 0;
  ran = ran && run_cli(base + (dir / "again").string() + " --jobs 1") == 0;
  bool same_jobs = ran, same_seed = ran;
  std::size_t bytes = 0;
  for (const char* f : {"spectrum.csv", "atoms.csv"}) {
    const std::string a = slurp(dir / "j1" / f);
    bytes += a.size();
    same_jobs = same_jobs && !a.empty() && a == slurp(dir / "j8" / f);
    same_seed = same_seed && a == slurp(dir / "again" / f);
  }
  fs::remove_all(dir);
  const double s = t.seconds();
  return {{"10", "determinism", same_jobs && same_seed,
           fmt("cqed ensemble, 2 powers x 4 detunings x 6 atoms (%zu bytes): --jobs 1 vs --jobs 8 identical: %s; same "
               "seed twice identical: %s; %.1f s",
               bytes, same_jobs ? "yes" : "no", same_seed ? "yes" : "no", s)}};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<std::vector<Line>()>> table{
      {"1", criterion1}, {"2", criterion2},     {"3", criterion3}, {"4", criterion4},  {"5", criterion5},
      {"6", criterion6}, {"7", criteria7and8}, {"9", criterion9}, {"10", criterion10}};
  std::vector<std::string> wanted;
  for (int i = 1; i < argc; ++i) wanted.emplace_back(std::string(argv[i]) == "8" ? "7" : argv[i]);
  if (wanted.empty()) wanted = {"1", "2", "3", "4", "5", "6", "7", "9", "10"};
  bool all = true;
  for (const auto& id : wanted) {
    const auto it = table.find(id);
    if (it == table.end()) {
      std::fprintf(stderr, "unknown criterion %s\n", id.c_str());
      return 2;
    }
    for (const auto& line : it->second()) {
      std::printf("[criterion %s] %s  %s: %s\n", line.id.c_str(), line.pass ? "PASS" : "FAIL", line.title.c_str(),
                  line.detail.c_str());
      std::fflush(stdout);
      all = all && line.pass;
    }
  }
  return all ? 0 : 1;
}
