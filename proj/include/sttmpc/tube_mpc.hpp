#pragma once

#include <memory>
#include <span>
#include <vector>

#include "sttmpc/estimation.hpp"
#include "sttmpc/geometry.hpp"
#include "sttmpc/qp.hpp"

namespace sttmpc {

/// Discrete-time plant x+ = A x + B u with closed loop Phi = A + B K.
struct PlantModel {
    Matrix A;
    Matrix B;

    static PlantModel from_param(const ParamVector& p) { return {p.A(), p.B()}; }
    Matrix phi(const Matrix& K) const { return A + B * K; }
    double spectral_radius(const Matrix& K) const;
};

/// Static controller data: horizon, costs, pre-stabilizing gain, constraint
/// set {Fx + Gu <= 1}, tube template and the disturbance box.
struct MpcConfig {
    int N = 10;
    Matrix Q;
    Matrix R;
    Matrix K;   // d_u x d_x
    Matrix F;   // d_c x d_x
    Matrix G;   // d_c x d_u
    ContractiveTemplate tmpl;
    Box W = Box::zero(0);
    double sigma = 0.0;

    int d_x() const { return static_cast<int>(F.cols()); }
    int d_u() const { return static_cast<int>(G.cols()); }
    int d_c() const { return static_cast<int>(F.rows()); }
    int d_alpha() const { return tmpl.rows(); }
};

/// Per-uncertainty-set tube quantities plus the terminal cost for the
/// current prediction parameter. The noise support of tube row block j is
/// w_bar + w_exc[j]: the disturbance part over W plus the exact ball
/// support of the excitation pushed through that vertex's input matrix,
/// [w_exc_j]_i = 3 sigma_t ||(T B(theta_j))_i||. Using the vertex's own B
/// here is what the per-vertex inclusion argument requires and is strictly
/// tighter than lumping all vertices under max ||B(theta)||.
struct TubeData {
    std::vector<ParamVector> vertices;  // deduplicated vertex parameters
    std::vector<Matrix> H_list;         // H_j with H_j T = T Phi(theta_j)
    Matrix H_c;                         // H_c T = F + G K
    Vector w_bar;                       // row support of T over W
    std::vector<Vector> w_exc;          // per-vertex excitation support
    Vector zeta_bar;
    Matrix P_terminal;
    double B_bar = 0.0;

    int m() const { return static_cast<int>(vertices.size()); }
};

struct TubeMpcSolution {
    bool feasible = false;
    std::vector<Vector> v_seq;      // N inputs
    std::vector<Vector> alpha_seq;  // N+1 tube offsets
    std::vector<Vector> x_pred;     // N+1 predicted states (reconstructed)
    double objective = 0.0;
    SolveState qp_state = SolveState::iteration_limit;
    int qp_iterations = 0;
    Vector z_primal;  // raw decision vector, reusable as a warm start
    Vector y_dual;
    std::vector<int> active_vertices;  // row-generation working set used
};

/// P - Phi' P Phi = M for Schur-stable Phi, via the Kronecker-vectorized
/// linear system (series fallback when the solve degrades).
Matrix solve_lyapunov(const Matrix& phi, const Matrix& M);

/// Row-wise minimal nonnegative cone decompositions:
/// row i minimizes 1'h subject to h'T = target_i, h >= 0.
Matrix compute_H(const Matrix& T, const Matrix& target);

struct NoiseSupports {
    Vector w_bar;
    Vector zeta_bar;
    double B_bar = 0.0;
};

/// Lumped support values covering B(theta) zeta + w: B_bar is the
/// worst-case ||B(theta)||_2 over the vertices of Theta, Z_t the outer box
/// of B(0, 3 sigma_t), and w_bar the row support of T over W + B_bar Z_t
/// (taken in state dimension). This is the conservative single-vector
/// bound; the tube assembly itself uses the tighter per-vertex supports
/// (see TubeData).
NoiseSupports compute_noise_supports(const Matrix& T, const Matrix& G, const Box& W,
                                     const Box& Theta, double sigma_t, int d_x, int d_u);

/// Condensed QP for the tube problem: decision vector [v_0..v_{N-1},
/// alpha_0..alpha_N]; predicted states are eliminated by forward
/// substitution so the dynamics hold by construction.
QpProblem assemble_mpc(const Vector& x_t, const ParamVector& theta, const TubeData& tube,
                       const MpcConfig& cfg);

/// Assemble + solve + verify. A returned feasible solution has every tube,
/// input and terminal inequality re-checked outside the solver.
///
/// Large vertex sets are handled by exact row generation: the QP is solved
/// over a growing working subset of vertices until no vertex row is
/// violated, which yields the optimum of the full problem (the working-set
/// relaxation bounds it from below and the final iterate is feasible for
/// every row). `vertex_hint` seeds the working set, e.g. with the previous
/// step's active vertices.
TubeMpcSolution solve_mpc(const Vector& x_t, const ParamVector& theta, const TubeData& tube,
                          const MpcConfig& cfg, const QpWarmStart* warm = nullptr,
                          const std::vector<int>* vertex_hint = nullptr);

/// One past estimate (theta_tau, Theta_tau) with its cached tube blocks.
struct EstimateSnapshot {
    ParamVector theta;
    Box Theta = Box::zero(0);
    std::shared_ptr<const std::vector<ParamVector>> vertices;
    std::shared_ptr<const std::vector<Matrix>> H_list;
    double B_bar = 0.0;
    Matrix P_terminal;
    bool usable = true;  // false when e.g. Phi(theta_tau) is not stable
};

/// Builds the snapshot for (theta, Theta), reusing the vertex blocks of
/// `reuse` when the uncertainty set is unchanged.
EstimateSnapshot make_snapshot(const ParamVector& theta, const Box& Theta, const MpcConfig& cfg,
                               const EstimateSnapshot* reuse = nullptr);

/// TubeData for a snapshot at the current excitation scale.
TubeData tube_from_snapshot(const EstimateSnapshot& snap, const MpcConfig& cfg, const Matrix& H_c,
                            double sigma_t);

/// Solves P_N(x_t, theta_tau) for tau = t, t-1, ..., 0 until feasible.
/// Returns the solution and rho = the index used. Throws
/// BrokenPreconditionError when even tau = 0 fails.
std::pair<TubeMpcSolution, int> solve_with_fallback(const Vector& x_t,
                                                    std::span<const EstimateSnapshot> history,
                                                    const MpcConfig& cfg, const Matrix& H_c,
                                                    double sigma_t, const QpWarmStart* warm = nullptr,
                                                    const std::vector<int>* vertex_hint = nullptr);

/// Oracle controller: single-vertex tube at theta_star, w_bar over W only,
/// zeta_bar = 0. All theta-dependent blocks are computed once.
class OracleController {
public:
    OracleController(const ParamVector& theta_star, const MpcConfig& cfg);
    TubeMpcSolution solve(const Vector& x_t, const QpWarmStart* warm = nullptr) const;
    const TubeData& tube() const { return tube_; }

private:
    MpcConfig cfg_;
    ParamVector theta_star_;
    TubeData tube_;
};

/// One-shot oracle solve (tests; simulation uses OracleController).
TubeMpcSolution oracle_problem(const Vector& x_t, const ParamVector& theta_star,
                               const MpcConfig& cfg);

}  // namespace sttmpc
