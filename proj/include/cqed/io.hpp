#pragma once

// CSV writers. Every file opens with a `#` comment block naming the code
// version and the config hash, followed by one header row.

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cqed/config.hpp"
#include "cqed/protocol.hpp"
#include "cqed/qed_core.hpp"
#include "cqed/spectrum.hpp"
#include "cqed/stochastic.hpp"

namespace cqed {

inline void write_comment_block(std::ostream& os, std::string_view hash,
                                const std::vector<std::string>& extra = {}) {
  os << "# cqed " << kVersion << "\n# config_hash " << hash << "\n";
  for (const auto& line : extra) os << "# " << line << "\n";
}

inline constexpr std::string_view kMapHeader = "delta,probe_detuning,value";

/// One row per (delta, probe) pair, delta-major.
inline void write_map_csv(std::ostream& os, const SpectralMap& m, std::string_view hash, std::string_view name) {
  write_comment_block(os, hash, {"map " + std::string(name)});
  os << kMapHeader << "\n";
  for (std::size_t i = 0; i < m.delta.size(); ++i)
    for (std::size_t j = 0; j < m.probe.size(); ++j)
      os << format_number(m.delta[i]) << ',' << format_number(m.probe[j]) << ',' << format_number(m.at(i, j))
         << '\n';
}

inline constexpr std::string_view kSpectrumHeader =
    "dipole_power,probe_detuning,transmission,transmission_error,qualified_windows,loss_rate,loss_rate_error,"
    "all_censored,dark_rate,dark_rate_error,excess_loss_rate,excess_loss_error,excess_negative,n_atoms,"
    "n_injected,n_lost,dp_share,sp_share,axial_fraction,mean_coupling,mean_detuning";

inline void write_spectrum_row(std::ostream& os, const SpectrumPoint& p) {
  auto n = [](double v) { return format_number(v); };
  os << n(p.dipole_power) << ',' << n(p.probe_detuning) << ',' << n(p.transmission_mean) << ','
     << n(p.transmission_error) << ',' << p.qualified_windows << ',' << n(p.loss_rate) << ','
     << n(p.loss_rate_error) << ',' << (p.all_censored ? 1 : 0) << ',' << n(p.dark_rate) << ','
     << n(p.dark_rate_error) << ',' << n(p.excess_loss_rate) << ',' << n(p.excess_loss_error) << ','
     << (p.excess_negative ? 1 : 0) << ',' << p.n_atoms << ',' << p.n_injected << ',' << p.n_lost << ','
     << n(p.dp_share) << ',' << n(p.sp_share) << ',' << n(p.axial_fraction) << ',' << n(p.mean_coupling) << ','
     << n(p.mean_detuning) << '\n';
}

inline constexpr std::string_view kAtomsHeader =
    "row,column,kind,seed,stream_id,captured,storage_time,escape_axis,qualified_windows,ledger_sp,ledger_dp";

/// `kind` is "probe" or "dark"; dark rows belong to the first point of their row.
inline void write_atom_rows(std::ostream& os, std::size_t row, std::size_t column, std::string_view kind,
                            const std::vector<RunRecord>& runs) {
  for (const auto& r : runs)
    os << row << ',' << column << ',' << kind << ',' << r.seed << ',' << r.stream_id << ',' << (r.captured ? 1 : 0)
       << ',' << format_number(r.storage_time) << ',' << to_string(r.escape_axis) << ',' << r.qualified_windows
       << ',' << format_number(r.ledger_sp) << ',' << format_number(r.ledger_dp) << '\n';
}

inline constexpr std::string_view kTrajectoryHeader = "t,x,y,z,px,py,pz,eps,event_flag";

inline void write_trajectory_row(std::ostream& os, const AtomState& s, double eps, TrajectoryEvent ev) {
  auto n = [](double v) { return format_number(v); };
  os << n(s.t) << ',' << n(s.pos.x) << ',' << n(s.pos.y) << ',' << n(s.pos.z) << ',' << n(s.mom.x) << ','
     << n(s.mom.y) << ',' << n(s.mom.z) << ',' << n(eps) << ',' << static_cast<int>(ev) << '\n';
}

}  // namespace cqed
