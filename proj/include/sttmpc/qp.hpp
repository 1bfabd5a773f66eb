#pragma once

#include "sttmpc/lp.hpp"

namespace sttmpc {

/// min 0.5 x'Px + q'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
/// P must be symmetric positive semidefinite.
struct QpProblem {
    Matrix P;
    Vector q;
    Matrix A_eq;
    Vector b_eq;
    Matrix A_in;
    Vector b_in;

    int num_vars() const { return static_cast<int>(q.size()); }
    int num_rows() const { return static_cast<int>(b_eq.size() + b_in.size()); }
};

struct QpSettings {
    double tol = 1e-8;        // absolute and relative residual target
    int max_iter = 50000;
    double sigma = 1e-6;      // proximal regularization
    double relaxation = 1.6;  // over-relaxation factor
    double rho0 = 0.1;
    int check_interval = 25;
    bool polish = true;
    bool scale = true;
};

struct QpWarmStart {
    Vector x;  // primal iterate; empty means cold start
    Vector y;  // multipliers for [A_eq; A_in]; empty means zero
};

/// Operator-splitting (ADMM) solver with over-relaxation, adaptive rho and
/// an active-set polish pass that typically reaches machine precision.
/// Deterministic: identical data and settings give identical output.
SolveStatus solve_qp(const QpProblem& p, const QpSettings& settings = {},
                     const QpWarmStart* warm = nullptr);

inline SolveStatus solve_qp(const QpProblem& p, double tol, int max_iter,
                            const QpWarmStart* warm = nullptr) {
    QpSettings s;
    s.tol = tol;
    s.max_iter = max_iter;
    return solve_qp(p, s, warm);
}

}  // namespace sttmpc
