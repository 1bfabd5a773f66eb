#include "sttmpc/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "sttmpc/errors.hpp"

namespace sttmpc {

Box::Box(Vector center, Vector half_widths)
    : center_(std::move(center)), half_widths_(std::move(half_widths)) {
    if (center_.size() != half_widths_.size())
        throw std::invalid_argument("Box: center/half_widths dimension mismatch");
    if ((half_widths_.array() < 0).any())
        throw std::invalid_argument("Box: negative half width");
}

Box Box::outer_ball(const Vector& center, double radius) {
    if (radius < 0) throw std::invalid_argument("Box::outer_ball: negative radius");
    return Box(center, Vector::Constant(center.size(), radius));
}

bool Box::contains(const Vector& x, double tol) const {
    if (x.size() != center_.size()) throw std::invalid_argument("Box::contains: dimension mismatch");
    return ((x - center_).cwiseAbs().array() <= half_widths_.array() + tol).all();
}

bool Box::contains_box(const Box& other, double tol) const {
    if (other.dim() != dim()) throw std::invalid_argument("Box::contains_box: dimension mismatch");
    return (((other.center_ - center_).cwiseAbs() + other.half_widths_).array() <=
            half_widths_.array() + tol)
        .all();
}

Box Box::minkowski_sum(const Box& other) const {
    if (other.dim() != dim()) throw std::invalid_argument("Box::minkowski_sum: dimension mismatch");
    return Box(center_ + other.center_, half_widths_ + other.half_widths_);
}

Box Box::scaled(double s) const {
    if (s < 0) throw std::invalid_argument("Box::scaled: negative factor");
    return Box(s * center_, s * half_widths_);
}

std::optional<Box> Box::intersect(const Box& a, const Box& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("Box::intersect: dimension mismatch");
    const int d = a.dim();
    Vector center(d), half(d);
    for (int i = 0; i < d; ++i) {
        const double alo = a.center_(i) - a.half_widths_(i), ahi = a.center_(i) + a.half_widths_(i);
        const double blo = b.center_(i) - b.half_widths_(i), bhi = b.center_(i) + b.half_widths_(i);
        const double lo = std::max(alo, blo), hi = std::min(ahi, bhi);
        if (lo > hi) return std::nullopt;
        // Keep the original representation when one interval dominates, so
        // A intersect A == A holds bitwise and unchanged sets stay reusable.
        if (alo >= blo && ahi <= bhi) {
            center(i) = a.center_(i);
            half(i) = a.half_widths_(i);
        } else if (blo >= alo && bhi <= ahi) {
            center(i) = b.center_(i);
            half(i) = b.half_widths_(i);
        } else {
            center(i) = 0.5 * (lo + hi);
            half(i) = 0.5 * (hi - lo);
        }
    }
    return Box(std::move(center), std::move(half));
}

std::vector<Vector> Box::vertices() const {
    const int d = dim();
    if (d > kVertexDimCap)
        throw CapacityError("Box::vertices: dimension " + std::to_string(d) + " exceeds cap " +
                            std::to_string(kVertexDimCap));
    const std::size_t count = std::size_t{1} << d;
    std::vector<Vector> verts;
    verts.reserve(count);
    for (std::size_t mask = 0; mask < count; ++mask) {
        Vector v = center_;
        for (int i = 0; i < d; ++i)
            v(i) += (mask >> i & 1u) ? half_widths_(i) : -half_widths_(i);
        verts.push_back(std::move(v));
    }
    return verts;
}

Vector support_max_rows(const Matrix& M, const Box& box) {
    if (M.cols() != box.dim())
        throw std::invalid_argument("support_max_rows: column/dimension mismatch");
    return M * box.center() + M.cwiseAbs() * box.half_widths();
}

HPolytope::HPolytope(Matrix A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
    if (A_.rows() != b_.size()) throw std::invalid_argument("HPolytope: A/b row mismatch");
    if (A_.rows() == 0 || A_.cols() == 0) throw std::invalid_argument("HPolytope: empty system");
}

bool HPolytope::contains(const Vector& x, double tol) const {
    if (x.size() != dim()) throw std::invalid_argument("HPolytope::contains: dimension mismatch");
    return ((A_ * x - b_).array() <= tol).all();
}

bool HPolytope::empty(double tol) const {
    // Feasibility via min 0 subject to Ax <= b.
    LpProblem lp = LpProblem::inequality_form(Vector::Zero(dim()), A_, b_);
    return solve_lp(lp, tol).state == SolveState::infeasible;
}

bool HPolytope::bounded(double tol) const {
    for (int i = 0; i < dim(); ++i) {
        Vector e = Vector::Zero(dim());
        e(i) = 1.0;
        if (lp_maximize(e, A_, b_, tol).state == SolveState::unbounded) return false;
        if (lp_maximize(-e, A_, b_, tol).state == SolveState::unbounded) return false;
    }
    return true;
}

HPolytope HPolytope::axis_box(int dim, double half_width) {
    Matrix A(2 * dim, dim);
    A.topRows(dim) = Matrix::Identity(dim, dim);
    A.bottomRows(dim) = -Matrix::Identity(dim, dim);
    return HPolytope(A, Vector::Constant(2 * dim, half_width));
}

ContractivityReport is_lambda_contractive(const Matrix& T, const std::vector<Matrix>& phi_vertices,
                                          double lambda, double tol) {
    const int rows = static_cast<int>(T.rows());
    const Vector ones = Vector::Ones(rows);
    if (!HPolytope(T, ones).bounded())
        throw TemplateUnboundedError("is_lambda_contractive: {Tx <= 1} is unbounded");
    ContractivityReport rep;
    rep.support_values.resize(static_cast<int>(phi_vertices.size()), rows);
    rep.contractive = true;
    rep.worst = -kInf;
    for (std::size_t j = 0; j < phi_vertices.size(); ++j) {
        const Matrix& phi = phi_vertices[j];
        if (phi.rows() != T.cols() || phi.cols() != T.cols())
            throw std::invalid_argument("is_lambda_contractive: Phi dimension mismatch");
        const Matrix TPhi = T * phi;
        for (int i = 0; i < rows; ++i) {
            SolveStatus st = lp_maximize(TPhi.row(i).transpose(), T, ones);
            if (st.state == SolveState::unbounded)
                throw TemplateUnboundedError("is_lambda_contractive: {Tx <= 1} is unbounded");
            if (st.state != SolveState::optimal)
                throw Error("is_lambda_contractive: support LP failed: " +
                            std::string(to_string(st.state)));
            rep.support_values(static_cast<int>(j), i) = st.objective;
            rep.worst = std::max(rep.worst, st.objective);
            if (st.objective > lambda + tol) rep.contractive = false;
        }
    }
    return rep;
}

namespace {

// Redundancy removal specialized to {Tx <= 1}: row i is dropped when the
// remaining rows already imply it.
Matrix drop_redundant_unit_rows(const Matrix& T, double tol) {
    Matrix cur = T;
    int i = 0;
    while (i < cur.rows() && cur.rows() > 1) {
        Matrix rest(cur.rows() - 1, cur.cols());
        rest.topRows(i) = cur.topRows(i);
        rest.bottomRows(cur.rows() - 1 - i) = cur.bottomRows(cur.rows() - 1 - i);
        SolveStatus st = lp_maximize(cur.row(i).transpose(), rest, Vector::Ones(rest.rows()));
        const bool redundant = st.state == SolveState::optimal && st.objective <= 1.0 + tol;
        if (redundant) {
            cur = rest;
        } else {
            ++i;
        }
    }
    return cur;
}

}  // namespace

ContractiveTemplate compute_contractive_template(const std::vector<Matrix>& phi_vertices,
                                                 double lambda, const HPolytope& seed, double tol,
                                                 int max_iter) {
    if (lambda < 0.0 || lambda >= 1.0)
        throw std::invalid_argument("compute_contractive_template: lambda must be in [0, 1)");
    if (phi_vertices.empty())
        throw std::invalid_argument("compute_contractive_template: no vertex dynamics");
    for (const Matrix& phi : phi_vertices) {
        const double sr = phi.eigenvalues().cwiseAbs().maxCoeff();
        if (sr >= lambda)
            throw NotContractibleError(
                "compute_contractive_template: vertex spectral radius " + std::to_string(sr) +
                " >= lambda " + std::to_string(lambda));
    }
    if ((seed.b().array() <= 0).any())
        throw std::invalid_argument("compute_contractive_template: seed must contain 0 in its interior");
    if (!seed.bounded()) throw std::invalid_argument("compute_contractive_template: seed is unbounded");

    // Normalize the seed to {Tx <= 1}.
    Matrix T = seed.A();
    for (int i = 0; i < T.rows(); ++i) T.row(i) /= seed.b()(i);
    T = drop_redundant_unit_rows(T, tol);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<int> added;
        Matrix grown = T;
        for (const Matrix& phi : phi_vertices) {
            const Matrix cand = (T * phi) / lambda;
            for (int i = 0; i < cand.rows(); ++i) {
                SolveStatus st =
                    lp_maximize(cand.row(i).transpose(), grown, Vector::Ones(grown.rows()));
                if (st.state != SolveState::optimal)
                    throw Error("compute_contractive_template: support LP failed");
                if (st.objective > 1.0 + tol) {
                    grown.conservativeResize(grown.rows() + 1, Eigen::NoChange);
                    grown.row(grown.rows() - 1) = cand.row(i);
                    added.push_back(i);
                }
            }
        }
        if (added.empty()) {
            ContractiveTemplate result{drop_redundant_unit_rows(T, tol), lambda};
            return result;
        }
        T = drop_redundant_unit_rows(grown, tol);
    }
    throw IterationLimitError("compute_contractive_template: no fixed point within max_iter");
}

HPolytope remove_redundant(const HPolytope& p, double tol) {
    if (p.empty(tol)) throw std::invalid_argument("remove_redundant: empty polytope");
    Matrix A = p.A();
    Vector b = p.b();
    int i = 0;
    while (i < A.rows() && A.rows() > 1) {
        const int r = static_cast<int>(A.rows());
        Matrix rest(r - 1, A.cols());
        Vector brest(r - 1);
        rest.topRows(i) = A.topRows(i);
        rest.bottomRows(r - 1 - i) = A.bottomRows(r - 1 - i);
        brest.head(i) = b.head(i);
        brest.tail(r - 1 - i) = b.tail(r - 1 - i);
        SolveStatus st = lp_maximize(A.row(i).transpose(), rest, brest);
        const bool redundant = st.state == SolveState::optimal && st.objective <= b(i) + tol;
        if (redundant) {
            A = rest;
            b = brest;
        } else {
            ++i;
        }
    }
    return HPolytope(A, b);
}

}  // namespace sttmpc
