#include "sttmpc/tube_mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "sttmpc/errors.hpp"

namespace sttmpc {

double PlantModel::spectral_radius(const Matrix& K) const {
    return phi(K).eigenvalues().cwiseAbs().maxCoeff();
}

Matrix solve_lyapunov(const Matrix& phi, const Matrix& M) {
    const int n = static_cast<int>(phi.rows());
    if (phi.cols() != n || M.rows() != n || M.cols() != n)
        throw std::invalid_argument("solve_lyapunov: dimension mismatch");
    const double rho = phi.eigenvalues().cwiseAbs().maxCoeff();
    if (rho >= 1.0)
        throw InstabilityError("solve_lyapunov: spectral radius " + std::to_string(rho) + " >= 1");

    // (I - phi' (x) phi') vec(P) = vec(M), columns stacked.
    Matrix kron(n * n, n * n);
    const Matrix pt = phi.transpose();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            kron.block(i * n, j * n, n, n) = pt(j, i) * pt;  // (phi' (x) phi')_{ij block}
    Matrix sys = Matrix::Identity(n * n, n * n) - kron;
    Vector vecM(n * n);
    for (int j = 0; j < n; ++j) vecM.segment(j * n, n) = M.col(j);
    Vector vecP = sys.fullPivLu().solve(vecM);
    Matrix P(n, n);
    for (int j = 0; j < n; ++j) P.col(j) = vecP.segment(j * n, n);
    P = 0.5 * (P + P.transpose());

    auto residual = [&](const Matrix& X) {
        return (X - phi.transpose() * X * phi - M).lpNorm<Eigen::Infinity>();
    };
    if (residual(P) > 1e-8 * std::max(1.0, M.lpNorm<Eigen::Infinity>())) {
        // Convergent-series fallback: P = sum_k (phi')^k M phi^k.
        Matrix acc = M, term = M;
        for (int k = 0; k < 100000; ++k) {
            term = phi.transpose() * term * phi;
            acc += term;
            if (term.lpNorm<Eigen::Infinity>() < 1e-16 * std::max(1.0, acc.lpNorm<Eigen::Infinity>()))
                break;
        }
        P = 0.5 * (acc + acc.transpose());
    }
    return P;
}

Matrix compute_H(const Matrix& T, const Matrix& target) {
    if (T.cols() != target.cols()) throw std::invalid_argument("compute_H: column mismatch");
    const int d_alpha = static_cast<int>(T.rows());
    Matrix H(target.rows(), d_alpha);
    for (int i = 0; i < target.rows(); ++i) {
        LpProblem lp = LpProblem::nonneg_equality_form(Vector::Ones(d_alpha), T.transpose(),
                                                       target.row(i).transpose());
        SolveStatus st = solve_lp(lp);
        if (st.state == SolveState::infeasible)
            throw TemplateInsufficientError("compute_H: row " + std::to_string(i) +
                                            " is not in the cone spanned by T");
        if (st.state != SolveState::optimal)
            throw Error("compute_H: LP failed: " + std::string(to_string(st.state)));
        H.row(i) = st.x.transpose();
    }
    return H;
}

namespace {

double spectral_norm(const Matrix& M) {
    return Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
}

std::vector<ParamVector> dedup_vertices(const Box& Theta, int d_x, int d_u) {
    std::vector<ParamVector> out;
    for (const Vector& v : Theta.vertices()) {
        ParamVector p(v, d_x, d_u);
        bool seen = false;
        for (const ParamVector& q : out)
            if (q.theta == p.theta) {
                seen = true;
                break;
            }
        if (!seen) out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

NoiseSupports compute_noise_supports(const Matrix& T, const Matrix& G, const Box& W,
                                     const Box& Theta, double sigma_t, int d_x, int d_u) {
    if (W.dim() != d_x || T.cols() != d_x || G.cols() != d_u)
        throw std::invalid_argument("compute_noise_supports: dimension mismatch");
    NoiseSupports out;
    for (const ParamVector& p : dedup_vertices(Theta, d_x, d_u))
        out.B_bar = std::max(out.B_bar, spectral_norm(p.B()));
    const Box Z = Box::outer_ball(Vector::Zero(d_u), 3.0 * sigma_t);
    const Box W_bar = W.minkowski_sum(Box::outer_ball(Vector::Zero(d_x), out.B_bar * 3.0 * sigma_t));
    out.w_bar = support_max_rows(T, W_bar);
    out.zeta_bar = support_max_rows(G, Z);
    return out;
}

QpProblem assemble_mpc(const Vector& x_t, const ParamVector& theta, const TubeData& tube,
                       const MpcConfig& cfg) {
    const int d_x = cfg.d_x(), d_u = cfg.d_u(), d_c = cfg.d_c(), d_a = cfg.d_alpha();
    const int N = cfg.N, m = tube.m();
    if (x_t.size() != d_x || theta.d_x != d_x || theta.d_u != d_u)
        throw std::invalid_argument("assemble_mpc: dimension mismatch");
    if (static_cast<int>(tube.H_list.size()) != m || tube.w_bar.size() != d_a ||
        static_cast<int>(tube.w_exc.size()) != m || tube.zeta_bar.size() != d_c)
        throw std::invalid_argument("assemble_mpc: inconsistent tube data");

    const Matrix& T = cfg.tmpl.T;
    const Matrix Phi = theta.A() + theta.B() * cfg.K;
    const Matrix Bm = theta.B();

    const int n_v = N * d_u;
    const int n_a = (N + 1) * d_a;
    const int n = n_v + n_a;
    auto v_col = [&](int k) { return k * d_u; };
    auto a_col = [&](int k) { return n_v + k * d_a; };

    // Condensed prediction: X = S_x x_t + S_v V over k = 0..N.
    Matrix S_x = Matrix::Zero((N + 1) * d_x, d_x);
    Matrix S_v = Matrix::Zero((N + 1) * d_x, n_v);
    S_x.topRows(d_x) = Matrix::Identity(d_x, d_x);
    for (int k = 1; k <= N; ++k) {
        S_x.middleRows(k * d_x, d_x) = Phi * S_x.middleRows((k - 1) * d_x, d_x);
        S_v.middleRows(k * d_x, d_x) = Phi * S_v.middleRows((k - 1) * d_x, d_x);
        S_v.block(k * d_x, v_col(k - 1), d_x, d_u) = Bm;
    }

    Matrix Qbar = Matrix::Zero((N + 1) * d_x, (N + 1) * d_x);
    for (int k = 0; k < N; ++k) Qbar.block(k * d_x, k * d_x, d_x, d_x) = cfg.Q;
    Qbar.bottomRightCorner(d_x, d_x) = tube.P_terminal;

    QpProblem qp;
    qp.P = Matrix::Zero(n, n);
    Matrix Pv = 2.0 * (S_v.transpose() * Qbar * S_v);
    for (int k = 0; k < N; ++k) Pv.block(v_col(k), v_col(k), d_u, d_u) += 2.0 * cfg.R;
    qp.P.topLeftCorner(n_v, n_v) = 0.5 * (Pv + Pv.transpose());
    qp.q = Vector::Zero(n);
    qp.q.head(n_v) = 2.0 * S_v.transpose() * (Qbar * (S_x * x_t));

    const int rows = d_a + N * (m * d_a + d_c) + m * d_a + d_c;
    qp.A_in = Matrix::Zero(rows, n);
    qp.b_in = Vector::Zero(rows);
    int r = 0;

    // T x_t <= alpha_0
    qp.A_in.block(r, a_col(0), d_a, d_a) = -Matrix::Identity(d_a, d_a);
    qp.b_in.segment(r, d_a) = -(T * x_t);
    r += d_a;

    // H_j alpha_k + T B_j v_k + w_bar <= alpha_{k+1}
    for (int k = 0; k < N; ++k) {
        for (int j = 0; j < m; ++j) {
            const Matrix TBj = T * tube.vertices[j].B();
            qp.A_in.block(r, a_col(k), d_a, d_a) = tube.H_list[j];
            qp.A_in.block(r, a_col(k + 1), d_a, d_a) -= Matrix::Identity(d_a, d_a);
            qp.A_in.block(r, v_col(k), d_a, d_u) = TBj;
            qp.b_in.segment(r, d_a) = -(tube.w_bar + tube.w_exc[j]);
            r += d_a;
        }
        // H_c alpha_k + G v_k + zeta_bar <= 1
        qp.A_in.block(r, a_col(k), d_c, d_a) = tube.H_c;
        qp.A_in.block(r, v_col(k), d_c, d_u) = cfg.G;
        qp.b_in.segment(r, d_c) = Vector::Ones(d_c) - tube.zeta_bar;
        r += d_c;
    }

    // terminal: H_j alpha_N + w_bar <= alpha_N and H_c alpha_N + zeta_bar <= 1
    for (int j = 0; j < m; ++j) {
        qp.A_in.block(r, a_col(N), d_a, d_a) =
            tube.H_list[j] - Matrix::Identity(d_a, d_a);
        qp.b_in.segment(r, d_a) = -(tube.w_bar + tube.w_exc[j]);
        r += d_a;
    }
    qp.A_in.block(r, a_col(N), d_c, d_a) = tube.H_c;
    qp.b_in.segment(r, d_c) = Vector::Ones(d_c) - tube.zeta_bar;
    r += d_c;

    return qp;
}

namespace {

constexpr double kVerifyTol = 1e-6;

bool verify_solution(const Vector& x_t, const ParamVector& theta, const TubeData& tube,
                     const MpcConfig& cfg, const std::vector<Vector>& v,
                     const std::vector<Vector>& alpha) {
    const Matrix& T = cfg.tmpl.T;
    const int N = cfg.N;
    auto leq = [&](const Vector& lhs, const Vector& rhs) {
        return ((lhs - rhs).array() <= kVerifyTol).all();
    };
    if (!leq(T * x_t, alpha[0])) return false;
    const Vector ones = Vector::Ones(cfg.d_c());
    for (int k = 0; k < N; ++k) {
        for (int j = 0; j < tube.m(); ++j) {
            const Vector lhs = tube.H_list[j] * alpha[k] +
                               T * (tube.vertices[j].B() * v[k]) + tube.w_bar + tube.w_exc[j];
            if (!leq(lhs, alpha[k + 1])) return false;
        }
        if (!leq(tube.H_c * alpha[k] + cfg.G * v[k] + tube.zeta_bar, ones)) return false;
    }
    for (int j = 0; j < tube.m(); ++j)
        if (!leq(tube.H_list[j] * alpha[N] + tube.w_bar + tube.w_exc[j], alpha[N])) return false;
    if (!leq(tube.H_c * alpha[N] + tube.zeta_bar, ones)) return false;
    return true;
}

}  // namespace

namespace {

// Solve over the given tube data as-is (no row generation).
TubeMpcSolution solve_mpc_direct(const Vector& x_t, const ParamVector& theta, const TubeData& tube,
                                 const MpcConfig& cfg, const QpWarmStart* warm) {
    QpProblem qp = assemble_mpc(x_t, theta, tube, cfg);
    SolveStatus st = solve_qp(qp, QpSettings{}, warm);

    TubeMpcSolution sol;
    sol.qp_state = st.state;
    sol.qp_iterations = st.iterations;
    if (st.state != SolveState::optimal) return sol;

    const int N = cfg.N, d_u = cfg.d_u(), d_a = cfg.d_alpha();
    sol.v_seq.reserve(N);
    for (int k = 0; k < N; ++k) sol.v_seq.push_back(st.x.segment(k * d_u, d_u));
    sol.alpha_seq.reserve(N + 1);
    for (int k = 0; k <= N; ++k) sol.alpha_seq.push_back(st.x.segment(N * d_u + k * d_a, d_a));

    // Predicted states follow the substituted recursion exactly.
    const Matrix Phi = theta.A() + theta.B() * cfg.K;
    sol.x_pred.resize(N + 1);
    sol.x_pred[0] = x_t;
    for (int k = 0; k < N; ++k)
        sol.x_pred[k + 1] = Phi * sol.x_pred[k] + theta.B() * sol.v_seq[k];

    if (!verify_solution(x_t, theta, tube, cfg, sol.v_seq, sol.alpha_seq)) return sol;

    double obj = sol.x_pred[N].dot(tube.P_terminal * sol.x_pred[N]);
    for (int k = 0; k < N; ++k)
        obj += sol.x_pred[k].dot(cfg.Q * sol.x_pred[k]) + sol.v_seq[k].dot(cfg.R * sol.v_seq[k]);
    sol.objective = obj;
    sol.feasible = true;
    sol.z_primal = st.x;
    sol.y_dual = st.y;
    return sol;
}

// Worst violation of vertex j's tube and terminal rows at (v, alpha).
double vertex_violation(int j, const TubeData& tube, const MpcConfig& cfg,
                        const std::vector<Vector>& v, const std::vector<Vector>& alpha) {
    const Matrix& Hj = tube.H_list[j];
    const Matrix TBj = cfg.tmpl.T * tube.vertices[j].B();
    const Vector wj = tube.w_bar + tube.w_exc[j];
    double worst = -kInf;
    for (int k = 0; k < cfg.N; ++k) {
        const Vector lhs = Hj * alpha[k] + TBj * v[k] + wj - alpha[k + 1];
        worst = std::max(worst, lhs.maxCoeff());
    }
    const Vector term = Hj * alpha[cfg.N] + wj - alpha[cfg.N];
    return std::max(worst, term.maxCoeff());
}

TubeData subset_tube(const TubeData& tube, const std::vector<int>& idx) {
    TubeData sub;
    sub.H_c = tube.H_c;
    sub.w_bar = tube.w_bar;
    sub.zeta_bar = tube.zeta_bar;
    sub.P_terminal = tube.P_terminal;
    sub.B_bar = tube.B_bar;
    for (int j : idx) {
        sub.vertices.push_back(tube.vertices[j]);
        sub.H_list.push_back(tube.H_list[j]);
        sub.w_exc.push_back(tube.w_exc[j]);
    }
    return sub;
}

// The cost depends on v only, so any alpha completion that satisfies the
// full constraint set turns a working-set optimum into a full optimum.
// Minimal completion: alpha_0 = T x_t, then the componentwise max over all
// vertex rows forward in time; the terminal offset is the monotone limit of
// the same map, which is invariant by construction. Returns false when the
// completed tube violates a constraint-tightening row (more rounds needed).
bool complete_alpha(const Vector& x_t, const TubeData& tube, const MpcConfig& cfg,
                    const std::vector<Vector>& v, std::vector<Vector>& alpha_out) {
    const Matrix& T = cfg.tmpl.T;
    const int N = cfg.N, m = tube.m();
    const Vector ones = Vector::Ones(cfg.d_c());
    std::vector<Matrix> TB(m);
    for (int j = 0; j < m; ++j) TB[j] = T * tube.vertices[j].B();

    std::vector<Vector> alpha(N + 1);
    alpha[0] = T * x_t;
    auto max_step = [&](const Vector& a, const Vector* vk) {
        Vector next = Vector::Constant(a.size(), -kInf);
        for (int j = 0; j < m; ++j) {
            Vector row = tube.H_list[j] * a + tube.w_bar + tube.w_exc[j];
            if (vk) row += TB[j] * *vk;
            next = next.cwiseMax(row);
        }
        return next;
    };
    for (int k = 0; k < N; ++k) {
        if (((tube.H_c * alpha[k] + cfg.G * v[k] + tube.zeta_bar - ones).array() > 0.0).any())
            return false;
        alpha[k + 1] = max_step(alpha[k], &v[k]);
    }
    // Grow the terminal offset to an invariant point of the autonomous map.
    Vector gamma = alpha[N];
    for (int it = 0; it < 1000; ++it) {
        Vector next = gamma.cwiseMax(max_step(gamma, nullptr));
        if ((next - gamma).lpNorm<Eigen::Infinity>() <= 1e-13) {
            gamma = next;
            break;
        }
        gamma = next;
        if (gamma.lpNorm<Eigen::Infinity>() > 1e10) return false;
    }
    if (((max_step(gamma, nullptr) - gamma).array() > 1e-9).any()) return false;
    if (((tube.H_c * gamma + tube.zeta_bar - ones).array() > 0.0).any()) return false;
    alpha[N] = gamma;
    alpha_out = std::move(alpha);
    return true;
}

}  // namespace

TubeMpcSolution solve_mpc(const Vector& x_t, const ParamVector& theta, const TubeData& tube,
                          const MpcConfig& cfg, const QpWarmStart* warm,
                          const std::vector<int>* vertex_hint) {
    const int m = tube.m();
    if (m <= 2) {
        TubeMpcSolution sol = solve_mpc_direct(x_t, theta, tube, cfg, warm);
        for (int j = 0; j < m; ++j) sol.active_vertices.push_back(j);
        return sol;
    }

    std::vector<int> working;
    if (vertex_hint)
        for (int j : *vertex_hint)
            if (j >= 0 && j < m) working.push_back(j);
    if (working.empty()) working = {0, m - 1};
    std::sort(working.begin(), working.end());
    working.erase(std::unique(working.begin(), working.end()), working.end());

    QpWarmStart local;
    if (warm) local = *warm;
    TubeMpcSolution sol;
    // Each round adds at least one vertex, so at most m rounds.
    for (int round = 0; round <= m; ++round) {
        const TubeData sub = subset_tube(tube, working);
        sol = solve_mpc_direct(x_t, theta, sub, cfg, local.x.size() ? &local : nullptr);
        sol.active_vertices = working;
        if (!sol.feasible) return sol;  // a relaxation certificate: the full problem fails too
        local.x = sol.z_primal;
        local.y = Vector();  // row counts change between rounds

        // Try to complete the working-set optimum into a fully feasible
        // solution; on success it is optimal for the full problem.
        std::vector<Vector> completed;
        if (complete_alpha(x_t, tube, cfg, sol.v_seq, completed)) {
            sol.alpha_seq = std::move(completed);
            if (verify_solution(x_t, theta, tube, cfg, sol.v_seq, sol.alpha_seq)) {
                const int d_u = cfg.d_u(), d_a = cfg.d_alpha();
                Vector z(cfg.N * d_u + (cfg.N + 1) * d_a);
                for (int k = 0; k < cfg.N; ++k) z.segment(k * d_u, d_u) = sol.v_seq[k];
                for (int k = 0; k <= cfg.N; ++k)
                    z.segment(cfg.N * d_u + k * d_a, d_a) = sol.alpha_seq[k];
                sol.z_primal = std::move(z);
                sol.y_dual = Vector();
                return sol;
            }
        }

        // Otherwise grow the working set by the worst violators.
        std::vector<std::pair<double, int>> viol;
        std::size_t cursor = 0;
        for (int j = 0; j < m; ++j) {
            while (cursor < working.size() && working[cursor] < j) ++cursor;
            if (cursor < working.size() && working[cursor] == j) continue;
            const double v = vertex_violation(j, tube, cfg, sol.v_seq, sol.alpha_seq);
            if (v > 1e-8) viol.emplace_back(v, j);
        }
        if (viol.empty()) {
            if (!verify_solution(x_t, theta, tube, cfg, sol.v_seq, sol.alpha_seq))
                sol.feasible = false;
            return sol;
        }
        std::sort(viol.begin(), viol.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        const int cap = 4;
        for (int i = 0; i < std::min<int>(cap, static_cast<int>(viol.size())); ++i)
            working.push_back(viol[i].second);
        std::sort(working.begin(), working.end());
    }
    sol.feasible = false;
    return sol;
}

EstimateSnapshot make_snapshot(const ParamVector& theta, const Box& Theta, const MpcConfig& cfg,
                               const EstimateSnapshot* reuse) {
    EstimateSnapshot snap;
    snap.theta = theta;
    snap.Theta = Theta;
    try {
        if (reuse && reuse->usable && reuse->Theta == Theta) {
            snap.vertices = reuse->vertices;
            snap.H_list = reuse->H_list;
            snap.B_bar = reuse->B_bar;
        } else {
            auto verts = std::make_shared<std::vector<ParamVector>>(
                dedup_vertices(Theta, cfg.d_x(), cfg.d_u()));
            auto hs = std::make_shared<std::vector<Matrix>>();
            hs->reserve(verts->size());
            double b_bar = 0.0;
            for (const ParamVector& p : *verts) {
                const Matrix phi = p.A() + p.B() * cfg.K;
                hs->push_back(compute_H(cfg.tmpl.T, cfg.tmpl.T * phi));
                b_bar = std::max(b_bar, spectral_norm(p.B()));
            }
            snap.vertices = std::move(verts);
            snap.H_list = std::move(hs);
            snap.B_bar = b_bar;
        }
        const Matrix phi = theta.A() + theta.B() * cfg.K;
        snap.P_terminal = solve_lyapunov(phi, cfg.Q + cfg.K.transpose() * cfg.R * cfg.K);
    } catch (const InstabilityError&) {
        snap.usable = false;
    } catch (const TemplateInsufficientError&) {
        snap.usable = false;
    }
    return snap;
}

TubeData tube_from_snapshot(const EstimateSnapshot& snap, const MpcConfig& cfg, const Matrix& H_c,
                            double sigma_t) {
    TubeData tube;
    tube.vertices = *snap.vertices;
    tube.H_list = *snap.H_list;
    tube.H_c = H_c;
    tube.P_terminal = snap.P_terminal;
    tube.B_bar = snap.B_bar;
    tube.w_bar = support_max_rows(cfg.tmpl.T, cfg.W);
    tube.w_exc.reserve(tube.vertices.size());
    for (const ParamVector& p : tube.vertices) {
        const Matrix TB = cfg.tmpl.T * p.B();
        Vector we(cfg.d_alpha());
        for (int i = 0; i < cfg.d_alpha(); ++i) we(i) = 3.0 * sigma_t * TB.row(i).norm();
        tube.w_exc.push_back(std::move(we));
    }
    tube.zeta_bar = Vector(cfg.d_c());
    for (int i = 0; i < cfg.d_c(); ++i) tube.zeta_bar(i) = 3.0 * sigma_t * cfg.G.row(i).norm();
    return tube;
}

std::pair<TubeMpcSolution, int> solve_with_fallback(const Vector& x_t,
                                                    std::span<const EstimateSnapshot> history,
                                                    const MpcConfig& cfg, const Matrix& H_c,
                                                    double sigma_t, const QpWarmStart* warm,
                                                    const std::vector<int>* vertex_hint) {
    if (history.empty()) throw std::invalid_argument("solve_with_fallback: empty history");
    for (int tau = static_cast<int>(history.size()) - 1; tau >= 0; --tau) {
        const EstimateSnapshot& snap = history[tau];
        if (!snap.usable) continue;
        TubeData tube = tube_from_snapshot(snap, cfg, H_c, sigma_t);
        TubeMpcSolution sol = solve_mpc(x_t, snap.theta, tube, cfg, warm, vertex_hint);
        if (sol.feasible) return {std::move(sol), tau};
    }
    throw BrokenPreconditionError(
        "solve_with_fallback: P_N(x_t, theta_tau) infeasible for every tau, including tau = 0");
}

OracleController::OracleController(const ParamVector& theta_star, const MpcConfig& cfg)
    : cfg_(cfg), theta_star_(theta_star) {
    const Matrix phi = theta_star.A() + theta_star.B() * cfg.K;
    tube_.vertices = {theta_star};
    tube_.H_list = {compute_H(cfg.tmpl.T, cfg.tmpl.T * phi)};
    tube_.H_c = compute_H(cfg.tmpl.T, cfg.F + cfg.G * cfg.K);
    tube_.w_bar = support_max_rows(cfg.tmpl.T, cfg.W);
    tube_.w_exc = {Vector::Zero(cfg.d_alpha())};
    tube_.zeta_bar = Vector::Zero(cfg.d_c());
    tube_.P_terminal = solve_lyapunov(phi, cfg.Q + cfg.K.transpose() * cfg.R * cfg.K);
    tube_.B_bar = spectral_norm(theta_star.B());
}

TubeMpcSolution OracleController::solve(const Vector& x_t, const QpWarmStart* warm) const {
    return solve_mpc(x_t, theta_star_, tube_, cfg_, warm);
}

TubeMpcSolution oracle_problem(const Vector& x_t, const ParamVector& theta_star,
                               const MpcConfig& cfg) {
    return OracleController(theta_star, cfg).solve(x_t);
}

}  // namespace sttmpc
