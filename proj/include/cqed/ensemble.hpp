#pragma once

// Fan-out of independent trajectories over a worker pool. Work is partitioned by
// stream id, never by thread, so results are identical for any job count.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "cqed/protocol.hpp"
#include "cqed/qed_core.hpp"
#include "cqed/rng.hpp"

namespace cqed {

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// thrown by any call is rethrown after all workers have stopped.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Stream id of atom `atom` in ensemble family `family` (one family per dipole
/// power row). Probe detunings and the dark reference share stream ids, so
/// spectra are built from common random numbers.
constexpr std::uint64_t ensemble_stream_id(std::uint64_t family, std::uint64_t atom) {
  return (family << 32) | (atom & 0xffffffffULL);
}

inline std::vector<RunRecord> run_ensemble(const ProtocolConfig& cfg, const SystemParams& params,
                                           std::uint64_t seed, std::uint64_t family, std::size_t n_atoms,
                                           unsigned jobs) {
  std::vector<RunRecord> out(n_atoms);
  parallel_for(n_atoms, jobs, [&](std::size_t i) {
    RngStream rng(seed, ensemble_stream_id(family, i));
    out[i] = run_trajectory(cfg, params, rng);
  });
  return out;
}

}  // namespace cqed
