#pragma once

#include <cstdint>
#include <vector>

#include "sttmpc/tube_mpc.hpp"

namespace sttmpc {

/// Everything one closed-loop experiment needs. The same setup drives both
/// the learning controller and its coupled oracle.
struct ExperimentSetup {
    ParamVector theta_star;
    Vector x0;
    ParamVector theta0;
    Box Theta0 = Box::zero(0);
    double delta = 0.01;
    double alpha = 0.5;
    double c1 = 10.0, c2 = 5.0, c3 = 1.0;
    SigmaMode sigma_mode = SigmaMode::example;
    MpcConfig mpc;
};

struct StepRecord {
    Vector x;
    Vector u;      // applied input K x + v + zeta
    Vector v;      // MPC correction
    Vector zeta;   // excitation (zero for the oracle)
    Vector w;      // realized disturbance
    double stage_cost = 0.0;
    int rho = 0;   // fallback index used at this step
    double theta_err = 0.0;     // ||theta_t - theta_star||
    double eps = 0.0;           // confidence radius (NaN before t_star)
    bool feasible = false;
    bool constraint_ok = true;  // F x + G u <= 1 held
    bool good_event_ok = true;  // empirical good event up to this step
    bool lemma1_ok = true;      // B(theta_star, eps_t) in Theta_t (good-event steps)
    bool tube_ok = true;        // T x_{t+1} <= alpha_{1|t}
};

struct TrajectoryLog {
    std::vector<StepRecord> steps;
    int t_star = 0;
    bool good_event_held = true;   // empirical condition held for all t >= t_star
    bool set_event_violated = false;  // an uncertainty-set intersection came up empty
    int fallback_steps = 0;        // steps with rho(t) < t
    int constraint_violations = 0;
    int lemma1_violations = 0;
    int tube_violations = 0;

    int horizon() const { return static_cast<int>(steps.size()); }
};

/// x+ = A(theta) x + B(theta) u + w.
Vector step_plant(const Vector& x, const Vector& u, const Vector& w, const ParamVector& theta_star);

/// Full STT-MPC closed loop for `horizon` steps. Deterministic in
/// (setup, horizon, seed); disturbances are pre-drawn from the seed's
/// disturbance stream so a coupled oracle can consume the identical
/// sequence.
TrajectoryLog run_stt_mpc(const ExperimentSetup& setup, int horizon, std::uint64_t seed);

/// Same loop with the supplied disturbance sequence and excitation stream
/// (the building block run_stt_mpc and monte_carlo share).
TrajectoryLog run_stt_mpc_with(const ExperimentSetup& setup, int horizon,
                               const std::vector<Vector>& disturbances, SplitMix64 excitation);

/// Oracle closed loop consuming the supplied disturbance sequence.
TrajectoryLog run_oracle(const ExperimentSetup& setup, int horizon,
                         const std::vector<Vector>& disturbances);

struct RegretRecord {
    std::vector<double> regret;  // cumulative, per step
    std::uint64_t seed = 0;
    double alpha = 0.0;
    double delta = 0.0;
};

/// Cumulative stage-cost difference of two coupled logs. Throws
/// CouplingError when the disturbance realizations differ.
RegretRecord compute_regret(const TrajectoryLog& log_pi, const TrajectoryLog& log_star,
                            const Matrix& Q, const Matrix& R);

struct AlphaSummary {
    double alpha = 0.0;
    int n_runs = 0;
    std::vector<double> mean_regret;  // per step
    std::vector<double> sem;          // standard error of the mean, per step
    // Per-run scalars for the statistical criteria.
    std::vector<double> final_regret;
    std::vector<double> half_regret;
    std::vector<double> theta_err_tstar;
    std::vector<double> theta_err_final;
    // Batch diagnostics.
    long total_steps = 0;
    long fallback_steps = 0;
    long constraint_violations = 0;
    long lemma1_violations = 0;
    long tube_violations = 0;
    int good_event_runs = 0;
    std::vector<TrajectoryLog> logs;  // retained only when requested
};

struct MonteCarloSummary {
    std::vector<AlphaSummary> per_alpha;
    int horizon = 0;
    std::uint64_t master_seed = 0;
};

/// Coupled Monte-Carlo batch: per (alpha, run) a disturbance sequence is
/// drawn from seed master_seed XOR run_index and shared by the STT-MPC run
/// and the oracle. Runs execute concurrently on `threads` workers (0 =
/// hardware concurrency); results are aggregated in run order, so output is
/// independent of scheduling.
MonteCarloSummary monte_carlo(const ExperimentSetup& setup, int horizon, int n_runs,
                              const std::vector<double>& alphas, std::uint64_t master_seed,
                              int threads = 0, bool keep_logs = false);

}  // namespace sttmpc
