#pragma once

#include <vector>

#include "sttmpc/geometry.hpp"
#include "sttmpc/rng.hpp"

namespace sttmpc {

/// Flat parameterization of a (A, B) pair: theta stacks the rows of A
/// followed by the rows of B, so d_theta = d_x * (d_x + d_u).
struct ParamVector {
    Vector theta;
    int d_x = 0;
    int d_u = 0;

    ParamVector() = default;
    ParamVector(Vector theta_, int d_x_, int d_u_);

    static ParamVector pack(const Matrix& A, const Matrix& B);

    int dim() const { return static_cast<int>(theta.size()); }
    Matrix A() const;
    Matrix B() const;

    bool operator==(const ParamVector& o) const {
        return d_x == o.d_x && d_u == o.d_u && theta == o.theta;
    }
};

/// max(||A1 - A2||_F, ||B1 - B2||_F) — the parameter metric used throughout.
double param_distance(const ParamVector& a, const ParamVector& b);

/// Accumulates regressor pairs (y_k, x_{k+1}) with y_k = [x_k; u_k] as
/// running second moments. An optional stored-pairs mode solves the stacked
/// least-squares system instead, which is the better-conditioned route when
/// the Gram matrix is nearly singular.
class RegressorHistory {
public:
    RegressorHistory(int d_x, int d_u, bool store_pairs = false);

    void add(const Vector& x, const Vector& u, const Vector& x_next);
    int count() const { return count_; }
    const Matrix& gram() const { return gram_; }

    /// theta_hat = (sum x_{k+1} y_k')(sum y_k y_k')^+ via the Moore-Penrose
    /// pseudo-inverse. Exact recovery on noiseless full-rank data.
    ParamVector lse_estimate() const;

private:
    int d_x_, d_u_;
    bool store_pairs_;
    int count_ = 0;
    Matrix gram_;   // sum y y'
    Matrix cross_;  // sum x_next y'
    std::vector<std::pair<Vector, Vector>> pairs_;  // (y, x_next) when stored
};

enum class SigmaMode { theory, example };

struct UncertaintyState {
    ParamVector theta;   // current prediction parameter theta_t
    double eps = 0.0;    // confidence radius (meaningful from t_star on)
    Box Theta;           // uncertainty set Theta_t
    int t_star = 0;
    double c1 = 10.0, c2 = 5.0, c3 = 1.0;
    double delta = 0.01;
    double alpha = 0.5;
    bool good_event_violated = false;  // sticky: an empty intersection occurred

    UncertaintyState(ParamVector theta0, Box Theta0, double delta, double alpha, double c1 = 10.0,
                     double c2 = 5.0, double c3 = 1.0);
};

/// Continuous-argument form of the confidence radius
/// sqrt(c3 log(t/delta) / t^(1-alpha)).
double epsilon_value(double t, double c3, double delta, double alpha);

/// Schedule accessor; only active from t_star on.
double epsilon_schedule(int t, const UncertaintyState& s);

/// Excitation scale. "theory": sigma_t^2 = sqrt(d_x) sigma^2 t^-alpha with t
/// clamped to 1; "example": sigma_t = sqrt(2) sigma (t+1)^-alpha.
double sigma_schedule(int t, double sigma, double alpha, int d_x, SigmaMode mode);

/// xi ~ N(0, sigma_t^2 I) projected onto the ball of radius 3 sigma_t.
Vector sample_excitation(double sigma_t, int d_u, SplitMix64& rng);

/// Truncated-Gaussian disturbance supported in B(0, 3 sigma).
Vector sample_disturbance(double sigma, int d_x, SplitMix64& rng);

/// One step of the uncertainty recursion. Before t_star the state is frozen;
/// afterwards Theta_t = Theta_{t-1} intersect Delta_t with Delta_t the outer
/// box of B(theta_hat, 2 eps_t). An empty intersection keeps the previous
/// set and raises the good-event-violated flag.
UncertaintyState update_uncertainty(const UncertaintyState& s, int t, const ParamVector& theta_hat);

}  // namespace sttmpc
