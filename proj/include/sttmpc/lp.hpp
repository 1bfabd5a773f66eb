#pragma once

#include <limits>

#include <Eigen/Dense>

namespace sttmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class SolveState { optimal, infeasible, unbounded, iteration_limit };

const char* to_string(SolveState s);

struct SolveStatus {
    SolveState state = SolveState::iteration_limit;
    double objective = std::numeric_limits<double>::quiet_NaN();
    Vector x;
    Vector y;  // constraint multipliers (filled by the QP solver)
    double primal_residual = std::numeric_limits<double>::quiet_NaN();
    double dual_residual = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
};

/// min c'x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lower <= x <= upper.
/// Empty blocks are allowed; empty bound vectors mean free variables.
struct LpProblem {
    Vector c;
    Matrix A_eq;
    Vector b_eq;
    Matrix A_in;
    Vector b_in;
    Vector lower;  // entries may be -inf
    Vector upper;  // entries may be +inf

    int num_vars() const { return static_cast<int>(c.size()); }

    static LpProblem inequality_form(const Vector& c, const Matrix& A_in, const Vector& b_in);
    static LpProblem nonneg_equality_form(const Vector& c, const Matrix& A_eq, const Vector& b_eq);
};

/// Two-phase dense simplex. Dantzig pricing with a permanent switch to
/// Bland's rule once a degenerate stall is detected. max_iter <= 0 selects
/// the default budget of 10*(rows+cols) pivots.
SolveStatus solve_lp(const LpProblem& p, double tol = 1e-9, int max_iter = 0);

/// max c'x s.t. A x <= b over free x. Returns the solver status with
/// `objective` equal to the attained maximum (sign already flipped back).
SolveStatus lp_maximize(const Vector& c, const Matrix& A, const Vector& b, double tol = 1e-9);

}  // namespace sttmpc
