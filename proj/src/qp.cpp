#include "sttmpc/qp.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

namespace sttmpc {

namespace {

double inf_norm(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

struct ScaledData {
    Matrix P;
    Vector q;
    Matrix A;
    Vector l, u;
    Vector d;      // variable scaling, x = d .* x_scaled
    Vector e;      // row scaling
    double cost = 1.0;
};

// Modified Ruiz equilibration of [P A'; A 0] plus cost normalization.
ScaledData scale_problem(const Matrix& P, const Vector& q, const Matrix& A, const Vector& l,
                         const Vector& u, bool enable) {
    const int n = static_cast<int>(q.size());
    const int m = static_cast<int>(A.rows());
    ScaledData s{P, q, A, l, u, Vector::Ones(n), Vector::Ones(m), 1.0};
    if (!enable) return s;

    for (int iter = 0; iter < 10; ++iter) {
        Vector dv(n), ev(m);
        for (int j = 0; j < n; ++j) {
            double cn = s.P.col(j).lpNorm<Eigen::Infinity>();
            if (m) cn = std::max(cn, s.A.col(j).lpNorm<Eigen::Infinity>());
            dv(j) = cn > 1e-12 ? 1.0 / std::sqrt(cn) : 1.0;
        }
        for (int i = 0; i < m; ++i) {
            const double rn = s.A.row(i).lpNorm<Eigen::Infinity>();
            ev(i) = rn > 1e-12 ? 1.0 / std::sqrt(rn) : 1.0;
        }
        s.P = dv.asDiagonal() * s.P * dv.asDiagonal();
        s.q = dv.asDiagonal() * s.q;
        if (m) {
            s.A = ev.asDiagonal() * s.A * dv.asDiagonal();
            for (int i = 0; i < m; ++i) {
                if (std::isfinite(s.l(i))) s.l(i) *= ev(i);
                if (std::isfinite(s.u(i))) s.u(i) *= ev(i);
            }
        }
        s.d.array() *= dv.array();
        s.e.array() *= ev.array();

        double pcol_mean = 0.0;
        for (int j = 0; j < n; ++j) pcol_mean += s.P.col(j).lpNorm<Eigen::Infinity>();
        pcol_mean /= std::max(1, n);
        const double g = 1.0 / std::max({pcol_mean, inf_norm(s.q), 1e-12});
        s.P *= g;
        s.q *= g;
        s.cost *= g;
    }
    return s;
}

struct Residuals {
    double prim = 0.0, dual = 0.0;
    double prim_rel_den = 0.0, dual_rel_den = 0.0;
};

Residuals residuals_unscaled(const Matrix& P, const Vector& q, const Matrix& A, const Vector& l,
                             const Vector& u, const Vector& x, const Vector& y) {
    Residuals r;
    Vector Px = P * x;
    Vector Aty = A.rows() ? Vector(A.transpose() * y) : Vector::Zero(x.size());
    Vector dual = Px + q + Aty;
    r.dual = inf_norm(dual);
    r.dual_rel_den = std::max({inf_norm(Px), inf_norm(q), inf_norm(Aty)});
    if (A.rows()) {
        Vector Ax = A * x;
        Vector z = Ax.cwiseMin(u).cwiseMax(l);
        r.prim = inf_norm(Ax - z);
        r.prim_rel_den = std::max(inf_norm(Ax), inf_norm(z));
    }
    return r;
}

void check_psd(const Matrix& P) {
    const double scale = std::max(1.0, P.lpNorm<Eigen::Infinity>());
    if ((P - P.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * scale)
        throw std::invalid_argument("solve_qp: P is not symmetric");
    Eigen::LDLT<Matrix> ldlt(P + 1e-12 * scale * Matrix::Identity(P.rows(), P.cols()));
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -1e-9 * scale).any())
        throw std::invalid_argument("solve_qp: P is not positive semidefinite");
}

}  // namespace

SolveStatus solve_qp(const QpProblem& p, const QpSettings& cfg, const QpWarmStart* warm) {
    const int n = p.num_vars();
    const int m_eq = static_cast<int>(p.b_eq.size());
    const int m_in = static_cast<int>(p.b_in.size());
    const int m = m_eq + m_in;
    if (n == 0) throw std::invalid_argument("solve_qp: empty problem");
    if (p.P.rows() != n || p.P.cols() != n) throw std::invalid_argument("solve_qp: P dimension mismatch");
    if (m_eq && p.A_eq.cols() != n) throw std::invalid_argument("solve_qp: A_eq dimension mismatch");
    if (m_in && p.A_in.cols() != n) throw std::invalid_argument("solve_qp: A_in dimension mismatch");
    check_psd(p.P);

    Matrix A(m, n);
    Vector l(m), u(m);
    if (m_eq) {
        A.topRows(m_eq) = p.A_eq;
        l.head(m_eq) = p.b_eq;
        u.head(m_eq) = p.b_eq;
    }
    if (m_in) {
        A.bottomRows(m_in) = p.A_in;
        l.tail(m_in).setConstant(-kInf);
        u.tail(m_in) = p.b_in;
    }

    ScaledData sd = scale_problem(p.P, p.q, A, l, u, cfg.scale);

    auto objective_of = [&](const Vector& x) { return 0.5 * x.dot(p.P * x) + p.q.dot(x); };

    SolveStatus st;
    st.x = Vector::Zero(n);

    // rho per row: equalities get a stiffer penalty.
    double rho_bar = cfg.rho0;
    auto make_rho = [&](double r) {
        Vector rho = Vector::Constant(m, r);
        for (int i = 0; i < m_eq; ++i) rho(i) = r * 1e3;
        return rho;
    };
    Vector rho = make_rho(rho_bar);

    Eigen::LDLT<Matrix> kkt;
    auto factor = [&]() {
        Matrix M = sd.P + cfg.sigma * Matrix::Identity(n, n);
        if (m) M.noalias() += sd.A.transpose() * rho.asDiagonal() * sd.A;
        kkt.compute(M);
    };
    factor();

    Vector x = Vector::Zero(n), z = Vector::Zero(m), y = Vector::Zero(m);
    if (warm && warm->x.size() == n) x = sd.d.cwiseInverse().asDiagonal() * warm->x;
    if (warm && warm->y.size() == m) y = sd.cost * (sd.e.cwiseInverse().asDiagonal() * warm->y);
    if (m) z = (sd.A * x).cwiseMin(sd.u).cwiseMax(sd.l);

    Vector x_prev = x, y_prev = y;
    const double eps_abs = cfg.tol, eps_rel = cfg.tol;
    const double eps_inf = 1e-10;

    auto unscaled_xy = [&](const Vector& xs, const Vector& ys, Vector& xu, Vector& yu) {
        xu = sd.d.asDiagonal() * xs;
        yu = m ? Vector(sd.e.asDiagonal() * ys / sd.cost) : Vector(0);
    };

    // Polish: equality-constrained solve on the active set with iterative
    // refinement against the unregularized KKT system.
    auto try_polish = [&](Vector& xu, Vector& yu, Residuals& best) -> bool {
        std::vector<int> act;
        for (int i = 0; i < m_eq; ++i) act.push_back(i);
        for (int i = m_eq; i < m; ++i)
            if (y(i) > 0.0 || sd.u(i) - z(i) <= 1e-10 * std::max(1.0, std::abs(sd.u(i)))) act.push_back(i);
        const int ma = static_cast<int>(act.size());
        if (ma > 0 && ma <= 4 * n + m_eq) {
            // fallthrough below
        } else if (ma == 0) {
            // unconstrained polish still worthwhile
        } else {
            return false;
        }

        Matrix Aact(ma, n);
        Vector bact(ma);
        for (int k = 0; k < ma; ++k) {
            Aact.row(k) = sd.A.row(act[k]);
            bact(k) = sd.u(act[k]);
        }
        const int dim = n + ma;
        const double delta = 1e-7;
        Matrix K = Matrix::Zero(dim, dim);
        K.topLeftCorner(n, n) = sd.P;
        if (ma) {
            K.topRightCorner(n, ma) = Aact.transpose();
            K.bottomLeftCorner(ma, n) = Aact;
        }
        Matrix Kd = K;
        Kd.topLeftCorner(n, n) += delta * Matrix::Identity(n, n);
        if (ma) Kd.bottomRightCorner(ma, ma) -= delta * Matrix::Identity(ma, ma);
        Eigen::LDLT<Matrix> pf(Kd);
        if (pf.info() != Eigen::Success) return false;

        Vector rhs(dim);
        rhs.head(n) = -sd.q;
        if (ma) rhs.tail(ma) = bact;
        Vector t = pf.solve(rhs);
        for (int it = 0; it < 6; ++it) t += pf.solve(rhs - K * t);

        Vector xs = t.head(n);
        Vector ys = Vector::Zero(m);
        for (int k = 0; k < ma; ++k) ys(act[k]) = t(n + k);

        Vector xu2, yu2;
        unscaled_xy(xs, ys, xu2, yu2);
        // Multipliers of inactive inequality rows must stay >= 0 for the
        // polished point to be a KKT point.
        for (int i = m_eq; i < m; ++i)
            if (yu2(i) < -1e-9) return false;
        Residuals r2 = residuals_unscaled(p.P, p.q, A, l, u, xu2, yu2);
        if (std::max(r2.prim, r2.dual) < std::max(best.prim, best.dual)) {
            xu = xu2;
            yu = yu2;
            best = r2;
            return true;
        }
        return false;
    };

    int iter = 0;
    for (; iter < cfg.max_iter; ++iter) {
        // x update
        Vector rhs = cfg.sigma * x - sd.q;
        if (m) rhs.noalias() += sd.A.transpose() * (rho.asDiagonal() * z - y);
        Vector x_tilde = kkt.solve(rhs);
        Vector z_tilde = m ? Vector(sd.A * x_tilde) : Vector(0);

        x = cfg.relaxation * x_tilde + (1.0 - cfg.relaxation) * x;
        if (m) {
            Vector z_relax = cfg.relaxation * z_tilde + (1.0 - cfg.relaxation) * z;
            Vector z_new = (z_relax + rho.cwiseInverse().asDiagonal() * y).cwiseMin(sd.u).cwiseMax(sd.l);
            y += rho.asDiagonal() * (z_relax - z_new);
            z = z_new;
        }

        if ((iter + 1) % cfg.check_interval != 0 && iter + 1 != cfg.max_iter) continue;

        Vector xu, yu;
        unscaled_xy(x, y, xu, yu);
        Residuals r = residuals_unscaled(p.P, p.q, A, l, u, xu, yu);
        const double eps_p = eps_abs + eps_rel * r.prim_rel_den;
        const double eps_d = eps_abs + eps_rel * r.dual_rel_den;
        if (r.prim <= eps_p && r.dual <= eps_d) {
            if (cfg.polish) try_polish(xu, yu, r);
            st.state = SolveState::optimal;
            st.x = xu;
            st.y = yu;
            st.objective = objective_of(xu);
            st.primal_residual = r.prim;
            st.dual_residual = r.dual;
            st.iterations = iter + 1;
#ifndef NDEBUG
            assert(r.prim <= std::max(eps_p, 1e-6));
            assert(r.dual <= std::max(eps_d, 1e-6));
#endif
            return st;
        }

        // A near-converged iterate plus a successful polish also counts:
        // the polished point is checked against the true KKT conditions.
        if (cfg.polish && r.prim <= 1e3 * eps_p && r.dual <= 1e3 * eps_d) {
            Vector xp = xu, yp = yu;
            Residuals rp = r;
            if (try_polish(xp, yp, rp) && rp.prim <= eps_abs && rp.dual <= eps_abs) {
                st.state = SolveState::optimal;
                st.x = xp;
                st.y = yp;
                st.objective = objective_of(xp);
                st.primal_residual = rp.prim;
                st.dual_residual = rp.dual;
                st.iterations = iter + 1;
                return st;
            }
        }

        // Infeasibility certificates.
        if (m) {
            Vector dy = y - y_prev;
            const double dy_norm = inf_norm(dy);
            if (dy_norm > std::max(eps_inf, 1e-9 * inf_norm(y))) {
                double support = 0.0;
                bool valid = true;
                for (int i = 0; i < m && valid; ++i) {
                    const double dyp = std::max(dy(i), 0.0), dyn = std::min(dy(i), 0.0);
                    if (std::isfinite(sd.u(i)))
                        support += sd.u(i) * dyp;
                    else if (dyp > 1e-12 * dy_norm)
                        valid = false;
                    if (std::isfinite(sd.l(i)))
                        support += sd.l(i) * dyn;
                    else if (dyn < -1e-12 * dy_norm)
                        valid = false;
                }
                if (valid && inf_norm(sd.A.transpose() * dy) <= 1e-8 * dy_norm &&
                    support <= -1e-8 * dy_norm) {
                    st.state = SolveState::infeasible;
                    st.iterations = iter + 1;
                    unscaled_xy(x, y, st.x, yu);
                    st.primal_residual = r.prim;
                    st.dual_residual = r.dual;
                    return st;
                }
            }
        }
        {
            Vector dx = x - x_prev;
            const double dx_norm = inf_norm(dx);
            if (dx_norm > std::max(eps_inf, 1e-9 * inf_norm(x))) {
                bool valid = inf_norm(sd.P * dx) <= 1e-8 * dx_norm && sd.q.dot(dx) <= -1e-8 * dx_norm;
                if (valid && m) {
                    Vector Adx = sd.A * dx;
                    for (int i = 0; i < m && valid; ++i) {
                        if (std::isfinite(sd.u(i)) && Adx(i) > 1e-8 * dx_norm) valid = false;
                        if (std::isfinite(sd.l(i)) && Adx(i) < -1e-8 * dx_norm) valid = false;
                    }
                }
                if (valid) {
                    st.state = SolveState::unbounded;
                    st.iterations = iter + 1;
                    Vector yu2;
                    unscaled_xy(x, y, st.x, yu2);
                    return st;
                }
            }
        }
        x_prev = x;
        y_prev = y;

        // rho adaptation on the scaled residual ratio.
        if (m) {
            const double pr = r.prim / std::max(r.prim_rel_den, 1e-12);
            const double dr = r.dual / std::max(r.dual_rel_den, 1e-12);
            const double ratio = std::sqrt(pr / std::max(dr, 1e-16));
            if (ratio > 5.0 || ratio < 0.2) {
                rho_bar = std::clamp(rho_bar * ratio, 1e-6, 1e6);
                rho = make_rho(rho_bar);
                factor();
            }
        }
    }

    Vector xu, yu;
    unscaled_xy(x, y, xu, yu);
    Residuals r = residuals_unscaled(p.P, p.q, A, l, u, xu, yu);
    st.state = SolveState::iteration_limit;
    st.x = xu;
    st.y = yu;
    st.objective = objective_of(xu);
    st.primal_residual = r.prim;
    st.dual_residual = r.dual;
    st.iterations = iter;
    return st;
}

}  // namespace sttmpc
