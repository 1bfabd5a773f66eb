#include "sttmpc/lp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace sttmpc {

const char* to_string(SolveState s) {
    switch (s) {
        case SolveState::optimal: return "optimal";
        case SolveState::infeasible: return "infeasible";
        case SolveState::unbounded: return "unbounded";
        case SolveState::iteration_limit: return "iteration-limit";
    }
    return "?";
}

LpProblem LpProblem::inequality_form(const Vector& c, const Matrix& A_in, const Vector& b_in) {
    LpProblem p;
    p.c = c;
    p.A_in = A_in;
    p.b_in = b_in;
    return p;
}

LpProblem LpProblem::nonneg_equality_form(const Vector& c, const Matrix& A_eq, const Vector& b_eq) {
    LpProblem p;
    p.c = c;
    p.A_eq = A_eq;
    p.b_eq = b_eq;
    p.lower = Vector::Zero(c.size());
    return p;
}

namespace {

constexpr double kPivotTol = 1e-11;

// Standard-form translation bookkeeping: x_orig[j] is an affine function of
// one or two standard-form columns.
struct VarMap {
    enum Kind { shifted, flipped, split } kind;
    int col = -1;       // primary standard column
    int col_neg = -1;   // second column for split (free) variables
    double offset = 0.0;
};

struct StandardForm {
    Matrix A;  // m x n
    Vector b;  // >= 0 after sign flips
    Vector c;  // n
    std::vector<VarMap> vmap;
    int n_orig = 0;
};

void check_dims(const LpProblem& p) {
    const int n = p.num_vars();
    auto bad = [&](bool cond) {
        if (cond) throw std::invalid_argument("solve_lp: inconsistent problem dimensions");
    };
    bad(n == 0);
    bad(p.A_eq.size() > 0 && (p.A_eq.cols() != n || p.A_eq.rows() != p.b_eq.size()));
    bad(p.A_eq.size() == 0 && p.b_eq.size() > 0);
    bad(p.A_in.size() > 0 && (p.A_in.cols() != n || p.A_in.rows() != p.b_in.size()));
    bad(p.A_in.size() == 0 && p.b_in.size() > 0);
    bad(p.lower.size() > 0 && p.lower.size() != n);
    bad(p.upper.size() > 0 && p.upper.size() != n);
}

StandardForm to_standard_form(const LpProblem& p) {
    const int n = p.num_vars();
    auto lower_of = [&](int j) { return p.lower.size() ? p.lower(j) : -kInf; };
    auto upper_of = [&](int j) { return p.upper.size() ? p.upper(j) : kInf; };

    StandardForm sf;
    sf.n_orig = n;
    sf.vmap.resize(n);

    int n_std = 0;
    int extra_rows = 0;  // finite [l, u] ranges need a row  s <= u - l
    for (int j = 0; j < n; ++j) {
        const double l = lower_of(j), u = upper_of(j);
        if (l > u) throw std::invalid_argument("solve_lp: lower bound above upper bound");
        if (std::isfinite(l)) {
            sf.vmap[j] = {VarMap::shifted, n_std++, -1, l};
            if (std::isfinite(u)) ++extra_rows;
        } else if (std::isfinite(u)) {
            sf.vmap[j] = {VarMap::flipped, n_std++, -1, u};
        } else {
            sf.vmap[j] = {VarMap::split, n_std, n_std + 1, 0.0};
            n_std += 2;
        }
    }

    const int m_eq = static_cast<int>(p.b_eq.size());
    const int m_in = static_cast<int>(p.b_in.size());
    const int n_slack = m_in + extra_rows;
    const int m = m_eq + m_in + extra_rows;

    sf.A = Matrix::Zero(m, n_std + n_slack);
    sf.b = Vector::Zero(m);
    sf.c = Vector::Zero(n_std + n_slack);

    // Column expansion of an original coefficient block, accumulating the
    // constant part of shifted/flipped variables into the rhs.
    auto emit_row = [&](int row, const auto& coeffs, double rhs) {
        double shift = 0.0;
        for (int j = 0; j < n; ++j) {
            const double a = coeffs(j);
            if (a == 0.0) continue;
            const VarMap& vm = sf.vmap[j];
            switch (vm.kind) {
                case VarMap::shifted:
                    sf.A(row, vm.col) += a;
                    shift += a * vm.offset;
                    break;
                case VarMap::flipped:
                    sf.A(row, vm.col) -= a;
                    shift += a * vm.offset;
                    break;
                case VarMap::split:
                    sf.A(row, vm.col) += a;
                    sf.A(row, vm.col_neg) -= a;
                    break;
            }
        }
        sf.b(row) = rhs - shift;
    };

    int row = 0;
    for (int i = 0; i < m_eq; ++i, ++row) emit_row(row, p.A_eq.row(i), p.b_eq(i));
    for (int i = 0; i < m_in; ++i, ++row) {
        emit_row(row, p.A_in.row(i), p.b_in(i));
        sf.A(row, n_std + i) = 1.0;  // slack
    }
    int range_slack = n_std + m_in;
    for (int j = 0; j < n; ++j) {
        const double l = lower_of(j), u = upper_of(j);
        if (std::isfinite(l) && std::isfinite(u)) {
            sf.A(row, sf.vmap[j].col) = 1.0;
            sf.A(row, range_slack++) = 1.0;
            sf.b(row) = u - l;
            ++row;
        }
    }

    for (int j = 0; j < n; ++j) {
        const VarMap& vm = sf.vmap[j];
        const double cj = p.c(j);
        switch (vm.kind) {
            case VarMap::shifted: sf.c(vm.col) += cj; break;
            case VarMap::flipped: sf.c(vm.col) -= cj; break;
            case VarMap::split:
                sf.c(vm.col) += cj;
                sf.c(vm.col_neg) -= cj;
                break;
        }
    }

    for (int i = 0; i < m; ++i) {
        if (sf.b(i) < 0) {
            sf.A.row(i) = -sf.A.row(i);
            sf.b(i) = -sf.b(i);
        }
    }
    return sf;
}

// Classic full-tableau simplex over [A | I_art], basis initialized to the
// artificial block. `allowed` masks columns the pricing step may enter.
class Tableau {
public:
    Tableau(const Matrix& A, const Vector& b)
        : m_(static_cast<int>(A.rows())), n_(static_cast<int>(A.cols())) {
        T_.resize(m_, n_ + m_ + 1);
        T_.leftCols(n_) = A;
        T_.middleCols(n_, m_) = Matrix::Identity(m_, m_);
        T_.col(n_ + m_) = b;
        basis_.resize(m_);
        for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
    }

    int cols() const { return n_ + m_; }
    int rows() const { return m_; }
    const std::vector<int>& basis() const { return basis_; }
    double rhs(int i) const { return T_(i, n_ + m_); }
    double entry(int i, int j) const { return T_(i, j); }

    // Reduced costs for cost vector c (artificial columns priced too).
    Vector reduced_costs(const Vector& c) const {
        Vector c_B(m_);
        for (int i = 0; i < m_; ++i) c_B(i) = c(basis_[i]);
        Vector r = c - T_.leftCols(n_ + m_).transpose() * c_B;
        return r;
    }

    double objective(const Vector& c) const {
        double obj = 0.0;
        for (int i = 0; i < m_; ++i) obj += c(basis_[i]) * rhs(i);
        return obj;
    }

    // One simplex phase. Returns optimal/unbounded/iteration_limit.
    SolveState run(const Vector& c, const std::vector<bool>& allowed, double tol, int& iter_budget,
                   int& iterations) {
        bool bland = false;
        int stall = 0;
        double last_obj = objective(c);
        while (true) {
            Vector r = reduced_costs(c);
            int enter = -1;
            if (!bland) {
                double best = -tol;
                for (int j = 0; j < cols(); ++j)
                    if (allowed[j] && r(j) < best) {
                        best = r(j);
                        enter = j;
                    }
            } else {
                for (int j = 0; j < cols(); ++j)
                    if (allowed[j] && r(j) < -tol) {
                        enter = j;
                        break;
                    }
            }
            if (enter < 0) return SolveState::optimal;

            int leave = -1;
            double best_ratio = kInf;
            for (int i = 0; i < m_; ++i) {
                const double a = T_(i, enter);
                if (a > kPivotTol) {
                    const double ratio = rhs(i) / a;
                    if (ratio < best_ratio - 1e-12 ||
                        (ratio < best_ratio + 1e-12 && (leave < 0 || basis_[i] < basis_[leave]))) {
                        best_ratio = ratio;
                        leave = i;
                    }
                }
            }
            if (leave < 0) return SolveState::unbounded;
            if (iter_budget-- <= 0) return SolveState::iteration_limit;
            ++iterations;

            pivot(leave, enter);

            const double obj = objective(c);
            if (obj > last_obj - 1e-13) {
                if (++stall > 2 * (m_ + 1)) bland = true;
            } else {
                stall = 0;
            }
            last_obj = obj;
        }
    }

    void pivot(int row, int col) {
        T_.row(row) /= T_(row, col);
        for (int i = 0; i < m_; ++i) {
            if (i == row) continue;
            const double f = T_(i, col);
            if (f != 0.0) T_.row(i) -= f * T_.row(row);
        }
        basis_[row] = col;
    }

private:
    int m_, n_;
    Matrix T_;
    std::vector<int> basis_;
};

}  // namespace

SolveStatus solve_lp(const LpProblem& p, double tol, int max_iter) {
    check_dims(p);
    StandardForm sf = to_standard_form(p);
    const int m = static_cast<int>(sf.A.rows());
    const int n = static_cast<int>(sf.A.cols());

    SolveStatus st;
    if (m == 0) {
        // No constraints beyond nonnegativity of the standard columns.
        st.x = Vector::Zero(sf.n_orig);
        bool unbounded = false;
        for (int j = 0; j < n; ++j) unbounded |= sf.c(j) < -tol;
        for (int j = 0; j < sf.n_orig; ++j) st.x(j) = sf.vmap[j].offset;
        st.state = unbounded ? SolveState::unbounded : SolveState::optimal;
        st.objective = p.c.dot(st.x);
        st.primal_residual = 0.0;
        st.dual_residual = 0.0;
        return st;
    }

    if (max_iter <= 0) max_iter = 10 * (m + n);
    int budget = max_iter;

    Tableau tab(sf.A, sf.b);
    std::vector<bool> allowed(n + m, false);
    for (int j = 0; j < n; ++j) allowed[j] = true;

    // Phase 1: minimize the artificial sum.
    Vector c1 = Vector::Zero(n + m);
    c1.tail(m).setOnes();
    SolveState s1 = tab.run(c1, allowed, tol, budget, st.iterations);
    if (s1 == SolveState::iteration_limit) {
        st.state = s1;
        return st;
    }
    if (tab.objective(c1) > std::max(tol, 1e-7 * sf.b.lpNorm<Eigen::Infinity>())) {
        st.state = SolveState::infeasible;
        st.objective = tab.objective(c1);  // positive artificial mass
        return st;
    }

    // Drive leftover zero-level artificials out of the basis.
    for (int i = 0; i < m; ++i) {
        if (tab.basis()[i] < n) continue;
        int piv = -1;
        for (int j = 0; j < n; ++j) {
            if (std::abs(tab.entry(i, j)) > 1e-9) {
                piv = j;
                break;
            }
        }
        if (piv >= 0) tab.pivot(i, piv);
        // Otherwise the row is redundant; an artificial stays basic at zero,
        // which is harmless as long as it is never allowed to re-enter.
    }

    // Phase 2.
    Vector c2 = Vector::Zero(n + m);
    c2.head(n) = sf.c;
    SolveState s2 = tab.run(c2, allowed, tol, budget, st.iterations);
    if (s2 == SolveState::iteration_limit || s2 == SolveState::unbounded) {
        st.state = s2;
        if (s2 == SolveState::unbounded) return st;
    } else {
        st.state = SolveState::optimal;
    }

    // Recover the standard-form solution from the final tableau.
    Vector x_std = Vector::Zero(n);
    for (int i = 0; i < m; ++i)
        if (tab.basis()[i] < n) x_std(tab.basis()[i]) = tab.rhs(i);

    Vector x(sf.n_orig);
    for (int j = 0; j < sf.n_orig; ++j) {
        const VarMap& vm = sf.vmap[j];
        switch (vm.kind) {
            case VarMap::shifted: x(j) = vm.offset + x_std(vm.col); break;
            case VarMap::flipped: x(j) = vm.offset - x_std(vm.col); break;
            case VarMap::split: x(j) = x_std(vm.col) - x_std(vm.col_neg); break;
        }
    }
    st.x = x;
    st.objective = p.c.dot(x);

    // Honest residuals against the original data.
    double pr = 0.0;
    if (p.b_eq.size()) pr = std::max(pr, (p.A_eq * x - p.b_eq).lpNorm<Eigen::Infinity>());
    if (p.b_in.size()) pr = std::max(pr, (p.A_in * x - p.b_in).cwiseMax(0.0).lpNorm<Eigen::Infinity>());
    for (int j = 0; j < sf.n_orig; ++j) {
        if (p.lower.size()) pr = std::max(pr, std::max(0.0, p.lower(j) - x(j)));
        if (p.upper.size()) pr = std::max(pr, std::max(0.0, x(j) - p.upper(j)));
    }
    st.primal_residual = pr;

    Vector r = tab.reduced_costs(c2);
    double dr = 0.0;
    for (int j = 0; j < n; ++j) dr = std::max(dr, -r(j));
    st.dual_residual = st.state == SolveState::optimal ? dr : std::numeric_limits<double>::quiet_NaN();
    return st;
}

SolveStatus lp_maximize(const Vector& c, const Matrix& A, const Vector& b, double tol) {
    LpProblem p = LpProblem::inequality_form(-c, A, b);
    SolveStatus st = solve_lp(p, tol);
    st.objective = -st.objective;
    return st;
}

}  // namespace sttmpc
