#include "sttmpc/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "sttmpc/errors.hpp"

namespace sttmpc {

Vector step_plant(const Vector& x, const Vector& u, const Vector& w, const ParamVector& theta_star) {
    if (x.size() != theta_star.d_x || u.size() != theta_star.d_u || w.size() != theta_star.d_x)
        throw std::invalid_argument("step_plant: dimension mismatch");
    return theta_star.A() * x + theta_star.B() * u + w;
}

namespace {

std::vector<Vector> draw_disturbances(const ExperimentSetup& setup, int horizon,
                                      std::uint64_t seed) {
    SplitMix64 stream = derive_stream(seed, 0, StreamTag::disturbance);
    std::vector<Vector> w;
    w.reserve(horizon);
    for (int t = 0; t < horizon; ++t)
        w.push_back(sample_disturbance(setup.mpc.sigma, setup.theta_star.d_x, stream));
    return w;
}

double stage_cost(const Vector& x, const Vector& u, const Matrix& Q, const Matrix& R) {
    return x.dot(Q * x) + u.dot(R * u);
}

}  // namespace

TrajectoryLog run_stt_mpc(const ExperimentSetup& setup, int horizon, std::uint64_t seed) {
    return run_stt_mpc_with(setup, horizon, draw_disturbances(setup, horizon, seed),
                            derive_stream(seed, 0, StreamTag::excitation));
}

TrajectoryLog run_stt_mpc_with(const ExperimentSetup& setup, int horizon,
                               const std::vector<Vector>& disturbances, SplitMix64 excitation) {
    if (static_cast<int>(disturbances.size()) < horizon)
        throw std::invalid_argument("run_stt_mpc_with: disturbance sequence too short");
    const MpcConfig& cfg = setup.mpc;
    const int d_x = cfg.d_x(), d_u = cfg.d_u();
    const Matrix& T = cfg.tmpl.T;
    const Matrix H_c = compute_H(T, cfg.F + cfg.G * cfg.K);

    UncertaintyState unc(setup.theta0, setup.Theta0, setup.delta, setup.alpha, setup.c1, setup.c2,
                         setup.c3);
    RegressorHistory history(d_x, d_u);

    // snapshots[t] = (theta_t, Theta_t) in effect at step t.
    std::vector<EstimateSnapshot> snapshots;
    snapshots.reserve(horizon);
    EstimateSnapshot initial = make_snapshot(setup.theta0, setup.Theta0, cfg);
    if (!initial.usable)
        throw ConfigError("run_stt_mpc: cannot build tube data for (theta_0, Theta_0)");

    TrajectoryLog log;
    log.t_star = unc.t_star;

    struct Transition {
        Vector x, u, x_next;
    };
    std::vector<Transition> transitions;
    transitions.reserve(horizon);

    Vector x = setup.x0;
    QpWarmStart warm;
    std::vector<int> active_hint;
    bool estimate_updated_this_step = false;
    ParamVector theta_hat_latest = setup.theta0;

    for (int t = 0; t < horizon; ++t) {
        // LSE at time t uses transitions up to index t-2 (data through x_{t-1}).
        if (t >= 2) {
            const Transition& tr = transitions[t - 2];
            history.add(tr.x, tr.u, tr.x_next);
        }
        estimate_updated_this_step = false;
        if (t == 0) {
            snapshots.push_back(initial);
        } else if (t >= unc.t_star && history.count() >= 1) {
            theta_hat_latest = history.lse_estimate();
            unc = update_uncertainty(unc, t, theta_hat_latest);
            snapshots.push_back(make_snapshot(unc.theta, unc.Theta, cfg, &snapshots.back()));
            estimate_updated_this_step = true;
        } else {
            snapshots.push_back(snapshots.back());
        }

        const double sigma_t = sigma_schedule(t, cfg.sigma, setup.alpha, d_x, setup.sigma_mode);
        auto [sol, rho] = solve_with_fallback(
            x, std::span<const EstimateSnapshot>(snapshots.data(), t + 1), cfg, H_c, sigma_t,
            warm.x.size() ? &warm : nullptr, active_hint.empty() ? nullptr : &active_hint);

        const Vector zeta = sample_excitation(sigma_t, d_u, excitation);
        const Vector u = cfg.K * x + sol.v_seq[0] + zeta;
        const Vector& w = disturbances[t];
        const Vector x_next = step_plant(x, u, w, setup.theta_star);

        StepRecord rec;
        rec.x = x;
        rec.u = u;
        rec.v = sol.v_seq[0];
        rec.zeta = zeta;
        rec.w = w;
        rec.stage_cost = stage_cost(x, u, cfg.Q, cfg.R);
        rec.rho = rho;
        rec.theta_err = param_distance(unc.theta, setup.theta_star);
        rec.eps = unc.eps;
        rec.feasible = sol.feasible;
        rec.constraint_ok = ((cfg.F * x + cfg.G * u).array() <= 1.0 + 1e-7).all();

        if (estimate_updated_this_step) {
            const bool within =
                param_distance(theta_hat_latest, setup.theta_star) <= unc.eps + 1e-12;
            log.good_event_held = log.good_event_held && within;
        }
        rec.good_event_ok = log.good_event_held;
        if (estimate_updated_this_step && log.good_event_held) {
            rec.lemma1_ok =
                unc.Theta.contains_box(Box::outer_ball(setup.theta_star.theta, unc.eps), 1e-9);
        }
        rec.tube_ok = ((T * x_next - sol.alpha_seq[1]).array() <= 1e-6).all() ||
                      !log.good_event_held;

        if (rho < t) ++log.fallback_steps;
        if (!rec.constraint_ok) ++log.constraint_violations;
        if (!rec.lemma1_ok) ++log.lemma1_violations;
        if (!rec.tube_ok) ++log.tube_violations;
        log.steps.push_back(std::move(rec));

        transitions.push_back({x, u, x_next});
        x = x_next;
        warm.x = sol.z_primal;
        warm.y = sol.y_dual;
        active_hint = sol.active_vertices;
    }
    log.set_event_violated = unc.good_event_violated;
    return log;
}

TrajectoryLog run_oracle(const ExperimentSetup& setup, int horizon,
                         const std::vector<Vector>& disturbances) {
    if (static_cast<int>(disturbances.size()) < horizon)
        throw std::invalid_argument("run_oracle: disturbance sequence too short");
    const MpcConfig& cfg = setup.mpc;
    OracleController oracle(setup.theta_star, cfg);

    TrajectoryLog log;
    Vector x = setup.x0;
    QpWarmStart warm;
    for (int t = 0; t < horizon; ++t) {
        TubeMpcSolution sol = oracle.solve(x, warm.x.size() ? &warm : nullptr);
        if (!sol.feasible) {
            if (t == 0) throw ConfigError("run_oracle: P_N(x_0, theta_star) is infeasible");
            throw BrokenPreconditionError("run_oracle: oracle problem infeasible at t = " +
                                          std::to_string(t));
        }
        const Vector u = cfg.K * x + sol.v_seq[0];
        const Vector& w = disturbances[t];
        const Vector x_next = step_plant(x, u, w, setup.theta_star);

        StepRecord rec;
        rec.x = x;
        rec.u = u;
        rec.v = sol.v_seq[0];
        rec.zeta = Vector::Zero(cfg.d_u());
        rec.w = w;
        rec.stage_cost = stage_cost(x, u, cfg.Q, cfg.R);
        rec.rho = t;
        rec.theta_err = 0.0;
        rec.eps = 0.0;
        rec.feasible = true;
        rec.constraint_ok = ((cfg.F * x + cfg.G * u).array() <= 1.0 + 1e-7).all();
        rec.tube_ok = ((cfg.tmpl.T * x_next - sol.alpha_seq[1]).array() <= 1e-6).all();
        if (!rec.constraint_ok) ++log.constraint_violations;
        if (!rec.tube_ok) ++log.tube_violations;
        log.steps.push_back(std::move(rec));

        x = x_next;
        warm.x = sol.z_primal;
        warm.y = sol.y_dual;
    }
    return log;
}

RegretRecord compute_regret(const TrajectoryLog& log_pi, const TrajectoryLog& log_star,
                            const Matrix& Q, const Matrix& R) {
    if (log_pi.horizon() != log_star.horizon())
        throw std::invalid_argument("compute_regret: horizon mismatch");
    RegretRecord rec;
    rec.regret.reserve(log_pi.horizon());
    double cum = 0.0;
    for (int t = 0; t < log_pi.horizon(); ++t) {
        const StepRecord& a = log_pi.steps[t];
        const StepRecord& b = log_star.steps[t];
        if (a.w != b.w)
            throw CouplingError("compute_regret: disturbance sequences differ at t = " +
                                std::to_string(t));
        cum += stage_cost(a.x, a.u, Q, R) - stage_cost(b.x, b.u, Q, R);
        rec.regret.push_back(cum);
    }
    return rec;
}

MonteCarloSummary monte_carlo(const ExperimentSetup& setup, int horizon, int n_runs,
                              const std::vector<double>& alphas, std::uint64_t master_seed,
                              int threads, bool keep_logs) {
    if (n_runs < 2) throw std::invalid_argument("monte_carlo: n_runs must be >= 2");
    if (alphas.empty()) throw std::invalid_argument("monte_carlo: no alpha values");

    struct RunResult {
        RegretRecord regret;
        TrajectoryLog log;
        double theta_err_tstar = 0.0;
        double theta_err_final = 0.0;
        bool failed = false;
        std::string error;
        std::uint64_t seed = 0;
    };

    const int total = static_cast<int>(alphas.size()) * n_runs;
    std::vector<RunResult> results(total);

    auto run_one = [&](int task) {
        const int a_idx = task / n_runs;
        const int run = task % n_runs;
        RunResult& out = results[task];
        const std::uint64_t run_seed = master_seed ^ static_cast<std::uint64_t>(run);
        out.seed = run_seed;
        try {
            ExperimentSetup variant = setup;
            variant.alpha = alphas[a_idx];
            const std::vector<Vector> w = draw_disturbances(variant, horizon, run_seed);
            TrajectoryLog log_pi = run_stt_mpc_with(variant, horizon, w,
                                                    derive_stream(run_seed, 0, StreamTag::excitation));
            TrajectoryLog log_star = run_oracle(variant, horizon, w);
            out.regret = compute_regret(log_pi, log_star, variant.mpc.Q, variant.mpc.R);
            out.regret.seed = run_seed;
            out.regret.alpha = variant.alpha;
            out.regret.delta = variant.delta;
            const int ts = std::min(log_pi.t_star, horizon - 1);
            out.theta_err_tstar = log_pi.steps[ts].theta_err;
            out.theta_err_final = log_pi.steps.back().theta_err;
            out.log = std::move(log_pi);
        } catch (const std::exception& e) {
            out.failed = true;
            out.error = e.what();
        }
    };

    int n_workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    n_workers = std::max(1, std::min(n_workers, total));
    if (n_workers == 1) {
        for (int task = 0; task < total; ++task) run_one(task);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (int task = next.fetch_add(1); task < total; task = next.fetch_add(1))
                    run_one(task);
            });
        for (auto& th : pool) th.join();
    }

    for (const RunResult& r : results)
        if (r.failed)
            throw Error("monte_carlo: run with seed " + std::to_string(r.seed) +
                        " failed: " + r.error);

    MonteCarloSummary summary;
    summary.horizon = horizon;
    summary.master_seed = master_seed;
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        AlphaSummary as;
        as.alpha = alphas[a];
        as.n_runs = n_runs;
        as.mean_regret.assign(horizon, 0.0);
        as.sem.assign(horizon, 0.0);
        for (int run = 0; run < n_runs; ++run) {
            const RunResult& r = results[a * n_runs + run];
            for (int t = 0; t < horizon; ++t) as.mean_regret[t] += r.regret.regret[t];
            as.final_regret.push_back(r.regret.regret[horizon - 1]);
            as.half_regret.push_back(r.regret.regret[horizon / 2 - 1]);
            as.theta_err_tstar.push_back(r.theta_err_tstar);
            as.theta_err_final.push_back(r.theta_err_final);
            const TrajectoryLog& log = r.log;
            as.total_steps += log.horizon();
            as.fallback_steps += log.fallback_steps;
            as.constraint_violations += log.constraint_violations;
            as.lemma1_violations += log.lemma1_violations;
            as.tube_violations += log.tube_violations;
            if (log.good_event_held) ++as.good_event_runs;
            if (keep_logs) as.logs.push_back(log);
        }
        for (int t = 0; t < horizon; ++t) as.mean_regret[t] /= n_runs;
        if (n_runs >= 2) {
            for (int t = 0; t < horizon; ++t) {
                double ss = 0.0;
                for (int run = 0; run < n_runs; ++run) {
                    const double d =
                        results[a * n_runs + run].regret.regret[t] - as.mean_regret[t];
                    ss += d * d;
                }
                as.sem[t] = std::sqrt(ss / (n_runs - 1)) / std::sqrt(static_cast<double>(n_runs));
            }
        }
        summary.per_alpha.push_back(std::move(as));
    }
    return summary;
}

}  // namespace sttmpc
