#pragma once

#include "kamnorm/kam.hpp"
#include "kamnorm/problem.hpp"

namespace kamnorm {

/// Writes the full run state under dir: manifest, problem and config copies,
/// history and frequency CSVs, the atlas, and per-step perturbation series.
/// Called after every step, so an interrupted run leaves a loadable state.
void save_run(const std::string& dir, const KamRun& run, const Problem& problem,
              const RunConfig& cfg, const ParamGrid& grid);

struct LoadedRun {
    KamRun run;
    Problem problem;
    RunConfig cfg;
    ParamGrid grid;
};

LoadedRun load_run(const std::string& dir);

/// Hamiltonian of step j reconstructed from the persisted state
/// (P_j, omega_j, energy_j).  j must be <= the number of completed steps.
Hamiltonian load_step_state(const std::string& dir, const LoadedRun& lr, int j);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace kamnorm
