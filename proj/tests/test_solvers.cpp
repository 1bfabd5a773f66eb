#include "doctest.h"

#include <cstring>

#include "sttmpc/lp.hpp"
#include "sttmpc/qp.hpp"
#include "sttmpc/rng.hpp"

using namespace sttmpc;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

}  // namespace

TEST_CASE("lp: min x subject to x >= 1") {
    LpProblem p;
    p.c = vec({1.0});
    p.A_in = Matrix::Constant(1, 1, -1.0);  // -x <= -1
    p.b_in = vec({-1.0});
    SolveStatus st = solve_lp(p);
    REQUIRE(st.state == SolveState::optimal);
    CHECK(st.x(0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(st.objective == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(st.primal_residual <= 1e-9);
    CHECK(st.dual_residual <= 1e-9);
}

TEST_CASE("lp: cone decomposition picks the matching template row") {
    // T has rows +-e_i in 2-D; target row is (T Phi)_1 with Phi = 0.5 I.
    // min 1'h with h'T = (0.5, 0), h >= 0 puts weight 0.5 on row 1.
    Matrix T(4, 2);
    T << 1, 0, 0, 1, -1, 0, 0, -1;
    Vector target = vec({0.5, 0.0});
    LpProblem p = LpProblem::nonneg_equality_form(Vector::Ones(4), T.transpose(), target);
    SolveStatus st = solve_lp(p);
    REQUIRE(st.state == SolveState::optimal);
    CHECK(st.objective == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(st.x(0) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(st.x.tail(3).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("lp: contradictory bounds are infeasible") {
    LpProblem p;
    p.c = vec({1.0});
    p.A_in = Matrix(2, 1);
    p.A_in << -1.0, 1.0;  // x >= 1 and x <= 0
    p.b_in = vec({-1.0, 0.0});
    CHECK(solve_lp(p).state == SolveState::infeasible);
}

TEST_CASE("lp: unbounded below is detected") {
    LpProblem p;
    p.c = vec({-1.0});
    p.A_in = Matrix::Constant(1, 1, -1.0);  // x >= 0
    p.b_in = vec({0.0});
    CHECK(solve_lp(p).state == SolveState::unbounded);
}

TEST_CASE("lp: variable bounds, equalities and maximization wrapper") {
    SUBCASE("upper bound only") {
        LpProblem p;
        p.c = vec({-1.0});
        p.upper = vec({5.0});
        p.lower = vec({-kInf});
        SolveStatus st = solve_lp(p);
        REQUIRE(st.state == SolveState::optimal);
        CHECK(st.x(0) == doctest::Approx(5.0));
    }
    SUBCASE("range bound") {
        LpProblem p;
        p.c = vec({1.0, -2.0});
        p.lower = vec({-1.0, -3.0});
        p.upper = vec({2.0, 4.0});
        SolveStatus st = solve_lp(p);
        REQUIRE(st.state == SolveState::optimal);
        CHECK(st.x(0) == doctest::Approx(-1.0));
        CHECK(st.x(1) == doctest::Approx(4.0));
    }
    SUBCASE("equality with free variables") {
        // min x + y s.t. x - y = 2 -> unbounded
        LpProblem p;
        p.c = vec({1.0, 1.0});
        p.A_eq = Matrix(1, 2);
        p.A_eq << 1, -1;
        p.b_eq = vec({2.0});
        CHECK(solve_lp(p).state == SolveState::unbounded);
    }
    SUBCASE("lp_maximize over a simplex") {
        Matrix A(3, 2);
        A << 1, 1, -1, 0, 0, -1;  // x + y <= 1, x,y >= 0
        SolveStatus st = lp_maximize(vec({2.0, 1.0}), A, vec({1.0, 0.0, 0.0}));
        REQUIRE(st.state == SolveState::optimal);
        CHECK(st.objective == doctest::Approx(2.0));
        CHECK(st.x(0) == doctest::Approx(1.0));
    }
}

TEST_CASE("lp: random instances agree with a dense enumeration oracle") {
    // Small random LPs over bounded boxes; brute-force the optimum over all
    // basic feasible candidates by enumerating active sets of box/ineq rows.
    SplitMix64 rng(12345);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2;
        Matrix A(3, n);
        for (int i = 0; i < A.rows(); ++i)
            for (int j = 0; j < n; ++j) A(i, j) = 2.0 * rng.next_double() - 1.0;
        Vector b(3);
        for (int i = 0; i < 3; ++i) b(i) = 0.5 + rng.next_double();  // keeps 0 feasible
        Vector c(n);
        for (int j = 0; j < n; ++j) c(j) = 2.0 * rng.next_double() - 1.0;

        LpProblem p;
        p.c = c;
        p.A_in = A;
        p.b_in = b;
        p.lower = Vector::Constant(n, -2.0);
        p.upper = Vector::Constant(n, 2.0);
        SolveStatus st = solve_lp(p);
        REQUIRE(st.state == SolveState::optimal);

        // Oracle: dense grid refinement is unreliable; enumerate vertices of
        // the feasible region formed by all row pairs instead.
        Matrix rows(3 + 2 * n, n);
        Vector rhs(3 + 2 * n);
        rows.topRows(3) = A;
        rhs.head(3) = b;
        rows.middleRows(3, n) = Matrix::Identity(n, n);
        rhs.segment(3, n).setConstant(2.0);
        rows.bottomRows(n) = -Matrix::Identity(n, n);
        rhs.tail(n).setConstant(2.0);
        double best = kInf;
        for (int i = 0; i < rows.rows(); ++i)
            for (int j = i + 1; j < rows.rows(); ++j) {
                Matrix M(2, 2);
                M << rows.row(i), rows.row(j);
                if (std::abs(M.determinant()) < 1e-9) continue;
                Vector v = M.inverse() * vec({rhs(i), rhs(j)});
                if (((rows * v - rhs).array() <= 1e-8).all()) best = std::min(best, c.dot(v));
            }
        CHECK(st.objective == doctest::Approx(best).epsilon(1e-7));
    }
}

TEST_CASE("qp: min x^2 subject to x >= 1") {
    QpProblem p;
    p.P = Matrix::Constant(1, 1, 2.0);
    p.q = vec({0.0});
    p.A_in = Matrix::Constant(1, 1, -1.0);
    p.b_in = vec({-1.0});
    SolveStatus st = solve_qp(p);
    REQUIRE(st.state == SolveState::optimal);
    CHECK(st.x(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(st.objective == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("qp: projection onto the zero-sum hyperplane") {
    const Vector c = vec({1.0, -2.0, 4.0});
    QpProblem p;
    p.P = 2.0 * Matrix::Identity(3, 3);
    p.q = -2.0 * c;
    p.A_eq = Matrix::Ones(1, 3);
    p.b_eq = vec({0.0});
    SolveStatus st = solve_qp(p);
    REQUIRE(st.state == SolveState::optimal);
    const Vector expect = c - Vector::Constant(3, c.mean());
    CHECK((st.x - expect).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("qp: matches constructed KKT solutions on 20 random instances") {
    SplitMix64 rng(777);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 6, m = 8, n_active = 3;
        Matrix L(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) L(i, j) = rng.next_normal();
        Matrix P = L * L.transpose() + Matrix::Identity(n, n);
        Vector x_star(n);
        for (int i = 0; i < n; ++i) x_star(i) = rng.next_normal();

        Matrix A(m, n);
        Vector b(m);
        Vector lambda = Vector::Zero(m);
        for (int i = 0; i < m; ++i) {
            Vector a(n);
            for (int j = 0; j < n; ++j) a(j) = rng.next_normal();
            a.normalize();
            A.row(i) = a.transpose();
            if (i < n_active) {
                b(i) = a.dot(x_star);
                lambda(i) = 0.5 + rng.next_double();
            } else {
                b(i) = a.dot(x_star) + 0.5 + rng.next_double();
            }
        }
        Vector q = -(P * x_star) - A.topRows(n_active).transpose() * lambda.head(n_active);

        QpProblem p;
        p.P = P;
        p.q = q;
        p.A_in = A;
        p.b_in = b;
        SolveStatus st = solve_qp(p);
        REQUIRE(st.state == SolveState::optimal);
        CHECK((st.x - x_star).lpNorm<Eigen::Infinity>() <= 1e-6);
    }
}

TEST_CASE("qp: infeasible and unbounded detection") {
    SUBCASE("infeasible") {
        QpProblem p;
        p.P = Matrix::Identity(1, 1);
        p.q = vec({0.0});
        p.A_in = Matrix(2, 1);
        p.A_in << -1.0, 1.0;
        p.b_in = vec({-1.0, 0.0});  // x >= 1 and x <= 0
        CHECK(solve_qp(p).state == SolveState::infeasible);
    }
    SUBCASE("unbounded (zero curvature direction)") {
        QpProblem p;
        p.P = Matrix::Zero(1, 1);
        p.q = vec({-1.0});
        p.A_in = Matrix::Constant(1, 1, -1.0);  // x >= 0
        p.b_in = vec({0.0});
        CHECK(solve_qp(p).state == SolveState::unbounded);
    }
}

TEST_CASE("qp: rejects indefinite or asymmetric cost") {
    QpProblem p;
    p.P = -Matrix::Identity(2, 2);
    p.q = Vector::Zero(2);
    CHECK_THROWS_AS(solve_qp(p), std::invalid_argument);
    Matrix bad(2, 2);
    bad << 1.0, 0.5, -0.5, 1.0;
    p.P = bad;
    CHECK_THROWS_AS(solve_qp(p), std::invalid_argument);
}

TEST_CASE("qp: objective never below the unconstrained minimum") {
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4;
        Matrix L(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) L(i, j) = rng.next_normal();
        Matrix P = L * L.transpose() + 0.1 * Matrix::Identity(n, n);
        Vector q(n);
        for (int i = 0; i < n; ++i) q(i) = rng.next_normal();
        // Box large enough to contain the unconstrained minimizer.
        Matrix A(2 * n, n);
        A.topRows(n) = Matrix::Identity(n, n);
        A.bottomRows(n) = -Matrix::Identity(n, n);
        Vector b = Vector::Constant(2 * n, 1e3);
        QpProblem p{P, q, Matrix(), Vector(), A, b};
        SolveStatus st = solve_qp(p);
        REQUIRE(st.state == SolveState::optimal);
        const Vector x_free = P.ldlt().solve(-q);
        const double unconstrained = 0.5 * x_free.dot(P * x_free) + q.dot(x_free);
        CHECK(st.objective >= unconstrained - 1e-8);
        CHECK(st.objective <= unconstrained + 1e-6);
    }
}

TEST_CASE("qp: deterministic bitwise replay and warm-start consistency") {
    QpProblem p;
    p.P = Matrix::Identity(3, 3) * 2.0;
    p.q = vec({-1.0, 2.0, 0.5});
    p.A_in = Matrix(2, 3);
    p.A_in << 1, 1, 1, -1, 0, 2;
    p.b_in = vec({1.0, 0.5});
    SolveStatus a = solve_qp(p);
    SolveStatus b = solve_qp(p);
    REQUIRE(a.state == SolveState::optimal);
    REQUIRE(b.state == SolveState::optimal);
    CHECK(std::memcmp(a.x.data(), b.x.data(), sizeof(double) * a.x.size()) == 0);
    CHECK(a.objective == b.objective);

    QpWarmStart warm{a.x, a.y};
    SolveStatus c = solve_qp(p, QpSettings{}, &warm);
    REQUIRE(c.state == SolveState::optimal);
    CHECK((c.x - a.x).lpNorm<Eigen::Infinity>() <= 1e-7);
}
