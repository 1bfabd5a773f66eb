#pragma once

#include <filesystem>
#include <string>

#include "sttmpc/simulation.hpp"

namespace sttmpc {

/// Shortest round-trip decimal representation (%.17g), byte-stable across
/// reruns on the same platform.
std::string format_double(double v);

/// File tag for an alpha value, e.g. 0.01 -> "0.01".
std::string alpha_tag(double alpha);

/// Writes "t,mean_regret,sem,n_runs" rows. Atomic: the data lands in a
/// temporary file first and is renamed into place.
void write_regret_csv(const std::filesystem::path& path, const AlphaSummary& summary);

struct RegretCsv {
    std::vector<double> mean_regret;
    std::vector<double> sem;
    int n_runs = 0;
};

RegretCsv read_regret_csv(const std::filesystem::path& path);

/// Per-run step records of the retained STT-MPC logs, long format:
/// alpha,run,t,x...,u...,v...,zeta...,w...,stage_cost,rho,theta_err,feasible.
void write_trajectories_csv(const std::filesystem::path& path, const MonteCarloSummary& summary);

}  // namespace sttmpc
