#include "doctest.h"

#include <cmath>

#include "sttmpc/errors.hpp"
#include "sttmpc/rng.hpp"
#include "sttmpc/tube_mpc.hpp"

#include "sec5_fixture.hpp"

using namespace sttmpc;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

// Minimal scalar tube setup: x+ = 0.5 x + u, K = 0, T = (1; -1).
MpcConfig scalar_config(int N, double sigma) {
    MpcConfig cfg;
    cfg.N = N;
    cfg.Q = Matrix::Identity(1, 1);
    cfg.R = Matrix::Identity(1, 1);
    cfg.K = Matrix::Zero(1, 1);
    cfg.F = Matrix::Zero(2, 1);
    cfg.F(0, 0) = 1.0;  // x <= 1
    cfg.F(1, 0) = -1.0; // x >= -1
    cfg.G = Matrix::Zero(2, 1);
    Matrix T(2, 1);
    T << 1.0, -1.0;
    cfg.tmpl = ContractiveTemplate{T, 0.9};
    cfg.W = Box::outer_ball(Vector::Zero(1), 3.0 * sigma);
    cfg.sigma = sigma;
    return cfg;
}

ParamVector scalar_param(double a, double b) {
    return ParamVector::pack(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b));
}

TubeData scalar_tube(const MpcConfig& cfg, const ParamVector& theta, double sigma_t) {
    EstimateSnapshot snap = make_snapshot(theta, Box(theta.theta, Vector::Zero(2)), cfg);
    REQUIRE(snap.usable);
    const Matrix H_c = compute_H(cfg.tmpl.T, cfg.F + cfg.G * cfg.K);
    return tube_from_snapshot(snap, cfg, H_c, sigma_t);
}

}  // namespace

TEST_CASE("lyapunov: closed forms and residuals") {
    SUBCASE("phi = 0 returns M") {
        Matrix M(2, 2);
        M << 2.0, 0.5, 0.5, 1.0;
        CHECK((solve_lyapunov(Matrix::Zero(2, 2), M) - M).lpNorm<Eigen::Infinity>() <= 1e-14);
    }
    SUBCASE("scalar geometric series") {
        Matrix P = solve_lyapunov(Matrix::Constant(1, 1, 0.5), Matrix::Identity(1, 1));
        CHECK(P(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("benchmark closed loop") {
        const ExperimentSetup& s = sec5::setup();
        const Matrix phi = s.theta_star.A() + s.theta_star.B() * s.mpc.K;
        const Matrix M = s.mpc.Q + s.mpc.K.transpose() * s.mpc.R * s.mpc.K;
        const Matrix P = solve_lyapunov(phi, M);
        CHECK((P - phi.transpose() * P * phi - M).lpNorm<Eigen::Infinity>() <= 1e-8);
        Eigen::SelfAdjointEigenSolver<Matrix> es(P);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
    SUBCASE("random stable closed loops") {
        SplitMix64 rng(31337);
        for (int trial = 0; trial < 20; ++trial) {
            Matrix phi(3, 3);
            for (int i = 0; i < 9; ++i) phi(i / 3, i % 3) = rng.next_normal();
            phi *= 0.9 / std::max(1e-9, phi.eigenvalues().cwiseAbs().maxCoeff());
            Matrix L(3, 3);
            for (int i = 0; i < 9; ++i) L(i / 3, i % 3) = rng.next_normal();
            Matrix M = L * L.transpose() + Matrix::Identity(3, 3);
            Matrix P = solve_lyapunov(phi, M);
            CHECK((P - phi.transpose() * P * phi - M).lpNorm<Eigen::Infinity>() <=
                  1e-8 * M.lpNorm<Eigen::Infinity>());
        }
    }
    SUBCASE("unstable phi is rejected") {
        CHECK_THROWS_AS(solve_lyapunov(Matrix::Identity(1, 1), Matrix::Identity(1, 1)),
                        InstabilityError);
    }
}

TEST_CASE("compute_H: identity, hand LP and cone failure") {
    SUBCASE("identity target picks matching rows") {
        Matrix T = HPolytope::axis_box(2, 1.0).A();
        Matrix H = compute_H(T, T);
        CHECK((H - Matrix::Identity(4, 4)).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
    SUBCASE("scalar contraction splits across signed rows") {
        Matrix T(2, 1);
        T << 1.0, -1.0;
        Matrix H = compute_H(T, 0.5 * T);
        Matrix expect(2, 2);
        expect << 0.5, 0.0, 0.0, 0.5;
        CHECK((H - expect).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
    SUBCASE("target outside the cone throws") {
        Matrix T(2, 2);
        T << 1.0, 0.0, 0.0, 1.0;  // cone of rows = first quadrant
        Matrix target(1, 2);
        target << -1.0, 0.0;
        CHECK_THROWS_AS(compute_H(T, target), TemplateInsufficientError);
    }
}

TEST_CASE("benchmark tube data satisfies the defining identities") {
    const ExperimentSetup& s = sec5::setup();
    const MpcConfig& cfg = s.mpc;
    const Matrix& T = cfg.tmpl.T;
    EstimateSnapshot snap = make_snapshot(s.theta0, s.Theta0, cfg);
    REQUIRE(snap.usable);
    CHECK(snap.vertices->size() == 64);

    for (std::size_t j = 0; j < snap.vertices->size(); ++j) {
        const ParamVector& p = (*snap.vertices)[j];
        const Matrix phi = p.A() + p.B() * cfg.K;
        CHECK(((*snap.H_list)[j] * T - T * phi).lpNorm<Eigen::Infinity>() <= 1e-7);
        CHECK((*snap.H_list)[j].minCoeff() >= -1e-9);
    }
    const Matrix H_c = compute_H(T, cfg.F + cfg.G * cfg.K);
    CHECK((H_c * T - (cfg.F + cfg.G * cfg.K)).lpNorm<Eigen::Infinity>() <= 1e-7);
    CHECK(H_c.minCoeff() >= -1e-9);

    TubeData tube = tube_from_snapshot(snap, cfg, H_c, 0.01);
    CHECK((tube.P_terminal - (s.theta0.A() + s.theta0.B() * cfg.K).transpose() * tube.P_terminal *
                                 (s.theta0.A() + s.theta0.B() * cfg.K) -
           (cfg.Q + cfg.K.transpose() * cfg.R * cfg.K))
              .lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("noise supports") {
    const Matrix T = HPolytope::axis_box(2, 1.0).A();
    Matrix G = Matrix::Zero(1, 1);
    G(0, 0) = 2.0;
    const Box W = Box::outer_ball(Vector::Zero(2), 0.25);
    const ParamVector theta = ParamVector::pack(0.5 * Matrix::Identity(2, 2), vec({1.0, 0.6}));
    const Box Theta_point(theta.theta, Vector::Zero(6));

    SUBCASE("sigma_t = 0: excitation part vanishes") {
        NoiseSupports ns = compute_noise_supports(T, G, W, Theta_point, 0.0, 2, 1);
        CHECK(ns.zeta_bar.lpNorm<Eigen::Infinity>() == 0.0);
        CHECK((ns.w_bar - support_max_rows(T, W)).lpNorm<Eigen::Infinity>() <= 1e-15);
    }
    SUBCASE("identity template: closed-form support") {
        NoiseSupports ns = compute_noise_supports(T, G, W, Theta_point, 0.1, 2, 1);
        const double B_norm = std::sqrt(1.0 + 0.36);
        CHECK(ns.B_bar == doctest::Approx(B_norm).epsilon(1e-12));
        for (int i = 0; i < 4; ++i)
            CHECK(ns.w_bar(i) == doctest::Approx(0.25 + B_norm * 0.3).epsilon(1e-12));
        CHECK(ns.zeta_bar(0) == doctest::Approx(2.0 * 0.3).epsilon(1e-12));
        CHECK(ns.zeta_bar.minCoeff() >= 0.0);
    }
    SUBCASE("B_bar maximizes over vertices") {
        Box Theta(theta.theta, 0.1 * Vector::Ones(6));
        NoiseSupports ns = compute_noise_supports(T, G, W, Theta, 0.1, 2, 1);
        CHECK(ns.B_bar == doctest::Approx(std::sqrt(1.1 * 1.1 + 0.7 * 0.7)).epsilon(1e-12));
    }
}

TEST_CASE("assemble_mpc: row count formula and origin fixed point") {
    SUBCASE("N = 1 scalar instance row count") {
        MpcConfig cfg = scalar_config(1, 0.0);
        const ParamVector theta = scalar_param(0.5, 1.0);
        TubeData tube = scalar_tube(cfg, theta, 0.0);
        QpProblem qp = assemble_mpc(vec({0.2}), theta, tube, cfg);
        const int d_a = 2, d_c = 2, m = 1;
        CHECK(qp.num_vars() == 1 * 1 + 2 * d_a);
        CHECK(qp.A_in.rows() == d_a + (m * d_a + d_c) + m * d_a + d_c);
        CHECK(qp.b_eq.size() == 0);
    }
    SUBCASE("origin with zero noise solves to zero") {
        MpcConfig cfg = scalar_config(3, 0.0);
        const ParamVector theta = scalar_param(0.5, 1.0);
        TubeData tube = scalar_tube(cfg, theta, 0.0);
        CHECK(tube.w_bar.lpNorm<Eigen::Infinity>() == 0.0);
        TubeMpcSolution sol = solve_mpc(Vector::Zero(1), theta, tube, cfg);
        REQUIRE(sol.feasible);
        CHECK(std::abs(sol.v_seq[0](0)) <= 1e-7);
        CHECK(sol.objective <= 1e-10);
    }
}

TEST_CASE("benchmark initial state is feasible and solution verifies") {
    const ExperimentSetup& s = sec5::setup();
    const MpcConfig& cfg = s.mpc;
    EstimateSnapshot snap = make_snapshot(s.theta0, s.Theta0, cfg);
    const Matrix H_c = compute_H(cfg.tmpl.T, cfg.F + cfg.G * cfg.K);
    const double sigma_0 = sigma_schedule(0, cfg.sigma, 0.5, 2, SigmaMode::example);
    TubeData tube = tube_from_snapshot(snap, cfg, H_c, sigma_0);
    TubeMpcSolution sol = solve_mpc(vec({6.0, 3.0}), s.theta0, tube, cfg);
    REQUIRE(sol.feasible);
    CHECK(sol.objective > 0.0);
    // First tube section contains the measured state.
    CHECK(((cfg.tmpl.T * vec({6.0, 3.0}) - sol.alpha_seq[0]).array() <= 1e-6).all());
}

TEST_CASE("solve_mpc returns infeasible status instead of throwing") {
    const ExperimentSetup& s = sec5::setup();
    const MpcConfig& cfg = s.mpc;
    EstimateSnapshot snap = make_snapshot(s.theta0, s.Theta0, cfg);
    const Matrix H_c = compute_H(cfg.tmpl.T, cfg.F + cfg.G * cfg.K);
    TubeData tube = tube_from_snapshot(snap, cfg, H_c, 0.0);
    // x1 far below the hard bound x1 >= -0.15.
    TubeMpcSolution sol = solve_mpc(vec({-5.0, 0.0}), s.theta0, tube, cfg);
    CHECK(!sol.feasible);
}

TEST_CASE("solve_with_fallback") {
    const ExperimentSetup& s = sec5::setup();
    const MpcConfig& cfg = s.mpc;
    const Matrix H_c = compute_H(cfg.tmpl.T, cfg.F + cfg.G * cfg.K);
    EstimateSnapshot good = make_snapshot(s.theta0, s.Theta0, cfg);

    SUBCASE("feasible newest snapshot is used directly") {
        std::vector<EstimateSnapshot> hist{good, good};
        auto [sol, rho] = solve_with_fallback(vec({6.0, 3.0}), hist, cfg, H_c, 0.01);
        CHECK(sol.feasible);
        CHECK(rho == 1);
    }
    SUBCASE("corrupted estimate falls back one step") {
        // A destabilizing parameter estimate: Phi(theta_hat) has spectral
        // radius > 1, so no terminal cost exists and the snapshot is unusable.
        ParamVector bad = s.theta0;
        bad.theta(0) = 5.0;
        EstimateSnapshot corrupt = make_snapshot(bad, s.Theta0, cfg, &good);
        CHECK(!corrupt.usable);
        std::vector<EstimateSnapshot> hist{good, corrupt};
        auto [sol, rho] = solve_with_fallback(vec({6.0, 3.0}), hist, cfg, H_c, 0.01);
        CHECK(sol.feasible);
        CHECK(rho == 0);
    }
    SUBCASE("exhausted history raises broken-precondition") {
        std::vector<EstimateSnapshot> hist{good};
        CHECK_THROWS_AS(solve_with_fallback(vec({-5.0, 0.0}), hist, cfg, H_c, 0.01),
                        BrokenPreconditionError);
    }
}

TEST_CASE("oracle equivalence: collapsed uncertainty reproduces the oracle") {
    const ExperimentSetup& s = sec5::setup();
    MpcConfig cfg = s.mpc;  // zero-noise variant
    cfg.sigma = 0.0;
    cfg.W = Box::outer_ball(Vector::Zero(2), 0.0);

    const ParamVector& truth = s.theta_star;
    EstimateSnapshot collapsed = make_snapshot(truth, Box(truth.theta, Vector::Zero(6)), cfg);
    REQUIRE(collapsed.usable);
    CHECK(collapsed.vertices->size() == 1);  // degenerate box deduplicates
    const Matrix H_c = compute_H(cfg.tmpl.T, cfg.F + cfg.G * cfg.K);
    TubeData tube = tube_from_snapshot(collapsed, cfg, H_c, 0.0);

    OracleController oracle(truth, cfg);
    for (const Vector& x : {vec({6.0, 3.0}), vec({1.0, -0.5}), vec({0.1, 0.0})}) {
        TubeMpcSolution a = solve_mpc(x, truth, tube, cfg);
        TubeMpcSolution b = oracle.solve(x);
        REQUIRE(a.feasible);
        REQUIRE(b.feasible);
        CHECK((a.v_seq[0] - b.v_seq[0]).lpNorm<Eigen::Infinity>() <= 1e-6);
    }
}

TEST_CASE("oracle from the origin returns zero input") {
    const ExperimentSetup& s = sec5::setup();
    MpcConfig cfg = s.mpc;
    cfg.sigma = 0.0;
    cfg.W = Box::outer_ball(Vector::Zero(2), 0.0);
    TubeMpcSolution sol = oracle_problem(Vector::Zero(2), s.theta_star, cfg);
    REQUIRE(sol.feasible);
    CHECK(sol.v_seq[0].lpNorm<Eigen::Infinity>() <= 1e-7);
}
