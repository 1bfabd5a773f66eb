#include "sttmpc/estimation.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/SVD>

#include "sttmpc/errors.hpp"

namespace sttmpc {

ParamVector::ParamVector(Vector theta_, int d_x_, int d_u_)
    : theta(std::move(theta_)), d_x(d_x_), d_u(d_u_) {
    if (theta.size() != static_cast<Eigen::Index>(d_x) * (d_x + d_u))
        throw std::invalid_argument("ParamVector: size does not match d_x*(d_x+d_u)");
}

ParamVector ParamVector::pack(const Matrix& A, const Matrix& B) {
    if (A.rows() != A.cols() || B.rows() != A.rows())
        throw std::invalid_argument("ParamVector::pack: A must be square and share rows with B");
    const int dx = static_cast<int>(A.rows());
    const int du = static_cast<int>(B.cols());
    Vector theta(dx * (dx + du));
    int k = 0;
    for (int i = 0; i < dx; ++i)
        for (int j = 0; j < dx; ++j) theta(k++) = A(i, j);
    for (int i = 0; i < dx; ++i)
        for (int j = 0; j < du; ++j) theta(k++) = B(i, j);
    return ParamVector(std::move(theta), dx, du);
}

Matrix ParamVector::A() const {
    Matrix out(d_x, d_x);
    int k = 0;
    for (int i = 0; i < d_x; ++i)
        for (int j = 0; j < d_x; ++j) out(i, j) = theta(k++);
    return out;
}

Matrix ParamVector::B() const {
    Matrix out(d_x, d_u);
    int k = d_x * d_x;
    for (int i = 0; i < d_x; ++i)
        for (int j = 0; j < d_u; ++j) out(i, j) = theta(k++);
    return out;
}

double param_distance(const ParamVector& a, const ParamVector& b) {
    if (a.d_x != b.d_x || a.d_u != b.d_u)
        throw std::invalid_argument("param_distance: layout mismatch");
    return std::max((a.A() - b.A()).norm(), (a.B() - b.B()).norm());
}

RegressorHistory::RegressorHistory(int d_x, int d_u, bool store_pairs)
    : d_x_(d_x), d_u_(d_u), store_pairs_(store_pairs) {
    const int dy = d_x + d_u;
    gram_ = Matrix::Zero(dy, dy);
    cross_ = Matrix::Zero(d_x, dy);
}

void RegressorHistory::add(const Vector& x, const Vector& u, const Vector& x_next) {
    if (x.size() != d_x_ || u.size() != d_u_ || x_next.size() != d_x_)
        throw std::invalid_argument("RegressorHistory::add: dimension mismatch");
    Vector y(d_x_ + d_u_);
    y << x, u;
    gram_.noalias() += y * y.transpose();
    cross_.noalias() += x_next * y.transpose();
    if (store_pairs_) pairs_.emplace_back(y, x_next);
    ++count_;
}

ParamVector RegressorHistory::lse_estimate() const {
    if (count_ == 0) throw std::invalid_argument("RegressorHistory::lse_estimate: empty history");
    const int dy = d_x_ + d_u_;
    Matrix M(d_x_, dy);
    if (store_pairs_) {
        Matrix Y(count_, dy);
        Matrix Xn(count_, d_x_);
        for (int k = 0; k < count_; ++k) {
            Y.row(k) = pairs_[k].first.transpose();
            Xn.row(k) = pairs_[k].second.transpose();
        }
        // theta' solves min ||Y theta' - Xn|| in the least-norm sense, which
        // equals cross * gram^+ analytically.
        Eigen::JacobiSVD<Matrix> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
        M = svd.solve(Xn).transpose();
    } else {
        Eigen::JacobiSVD<Matrix> svd(gram_, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double cutoff = 1e-13 * std::max(1.0, svd.singularValues()(0));
        Vector inv = svd.singularValues();
        for (int i = 0; i < inv.size(); ++i) inv(i) = inv(i) > cutoff ? 1.0 / inv(i) : 0.0;
        Matrix gram_pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
        M = cross_ * gram_pinv;
    }
    return ParamVector::pack(M.leftCols(d_x_), M.rightCols(d_u_));
}

UncertaintyState::UncertaintyState(ParamVector theta0, Box Theta0, double delta_, double alpha_,
                                   double c1_, double c2_, double c3_)
    : theta(std::move(theta0)), Theta(std::move(Theta0)) {
    if (delta_ <= 0.0 || delta_ >= 1.0)
        throw std::invalid_argument("UncertaintyState: delta must be in (0,1)");
    if (alpha_ <= 0.0 || alpha_ >= 1.0)
        throw std::invalid_argument("UncertaintyState: alpha must be in (0,1)");
    if (Theta.dim() != theta.dim())
        throw std::invalid_argument("UncertaintyState: Theta0 dimension mismatch");
    delta = delta_;
    alpha = alpha_;
    c1 = c1_;
    c2 = c2_;
    c3 = c3_;
    // The LSE needs at least one regressor pair, which exists from t = 2 on.
    t_star = std::max(2, static_cast<int>(std::ceil(c1 + c2 * std::log(1.0 / delta))));
    eps = std::numeric_limits<double>::quiet_NaN();
}

double epsilon_value(double t, double c3, double delta, double alpha) {
    if (t / delta <= 1.0) throw std::invalid_argument("epsilon_value: requires t/delta > 1");
    return std::sqrt(c3 * std::log(t / delta) / std::pow(t, 1.0 - alpha));
}

double epsilon_schedule(int t, const UncertaintyState& s) {
    if (t < s.t_star)
        throw ScheduleError("epsilon_schedule: inactive before t_star = " + std::to_string(s.t_star));
    return epsilon_value(static_cast<double>(t), s.c3, s.delta, s.alpha);
}

double sigma_schedule(int t, double sigma, double alpha, int d_x, SigmaMode mode) {
    if (t < 0) throw std::invalid_argument("sigma_schedule: negative time");
    if (sigma < 0) throw std::invalid_argument("sigma_schedule: negative sigma");
    if (alpha <= 0.0 || alpha >= 1.0)
        throw std::invalid_argument("sigma_schedule: alpha must be in (0,1)");
    switch (mode) {
        case SigmaMode::theory:
            // sigma_t^2 = sqrt(d_x) sigma^2 t^-alpha, with the t = 0
            // singularity clamped to t = 1.
            return std::pow(static_cast<double>(d_x), 0.25) * sigma *
                   std::pow(static_cast<double>(std::max(t, 1)), -alpha / 2.0);
        case SigmaMode::example:
            return std::sqrt(2.0) * sigma * std::pow(static_cast<double>(t + 1), -alpha);
    }
    throw std::invalid_argument("sigma_schedule: unknown mode");
}

namespace {

Vector truncated_gaussian(double scale, int dim, SplitMix64& rng) {
    Vector xi = scale * rng.normal_vector(dim);
    const double norm = xi.norm();
    const double cap = 3.0 * scale;
    if (norm > cap) xi *= cap / norm;
    return xi;
}

}  // namespace

Vector sample_excitation(double sigma_t, int d_u, SplitMix64& rng) {
    if (sigma_t < 0) throw std::invalid_argument("sample_excitation: negative sigma_t");
    return truncated_gaussian(sigma_t, d_u, rng);
}

Vector sample_disturbance(double sigma, int d_x, SplitMix64& rng) {
    if (sigma < 0) throw std::invalid_argument("sample_disturbance: negative sigma");
    return truncated_gaussian(sigma, d_x, rng);
}

UncertaintyState update_uncertainty(const UncertaintyState& s, int t, const ParamVector& theta_hat) {
    if (t < 1) throw std::invalid_argument("update_uncertainty: t must be >= 1");
    if (t < s.t_star) return s;

    UncertaintyState out = s;
    out.theta = theta_hat;
    out.eps = epsilon_value(static_cast<double>(t), s.c3, s.delta, s.alpha);
    Box delta_set = Box::outer_ball(theta_hat.theta, 2.0 * out.eps);
    if (auto cut = Box::intersect(s.Theta, delta_set)) {
        out.Theta = *cut;
    } else {
        out.good_event_violated = true;  // keep the previous set
    }
    return out;
}

}  // namespace sttmpc
