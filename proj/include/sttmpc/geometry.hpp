#pragma once

#include <optional>
#include <vector>

#include "sttmpc/lp.hpp"

namespace sttmpc {

/// 2^d vertex enumeration above this dimension is refused.
inline constexpr int kVertexDimCap = 12;

/// Axis-aligned box {x : |x_i - center_i| <= half_width_i}. All uncertainty
/// and disturbance sets in this project are boxes, so intersections stay
/// boxes and support maxima are closed-form.
class Box {
public:
    Box(Vector center, Vector half_widths);

    /// Tightest box containing the Euclidean ball B(center, radius).
    static Box outer_ball(const Vector& center, double radius);
    static Box zero(int dim) { return Box(Vector::Zero(dim), Vector::Zero(dim)); }

    int dim() const { return static_cast<int>(center_.size()); }
    const Vector& center() const { return center_; }
    const Vector& half_widths() const { return half_widths_; }

    bool contains(const Vector& x, double tol = 0.0) const;
    bool contains_box(const Box& other, double tol = 0.0) const;

    Box minkowski_sum(const Box& other) const;
    Box scaled(double s) const;

    /// Per-coordinate interval intersection; nullopt when empty.
    static std::optional<Box> intersect(const Box& a, const Box& b);

    /// All 2^d sign combinations center +- half_widths, in a fixed order
    /// (bit i of the vertex index selects the sign of coordinate i).
    std::vector<Vector> vertices() const;

    /// Uniform sample (used by sampling-oracle tests).
    template <typename Rng>
    Vector sample(Rng& rng) const {
        Vector x(dim());
        for (int i = 0; i < dim(); ++i)
            x(i) = center_(i) + (2.0 * rng.next_double() - 1.0) * half_widths_(i);
        return x;
    }

    bool operator==(const Box& other) const {
        return center_ == other.center_ && half_widths_ == other.half_widths_;
    }

private:
    Vector center_;
    Vector half_widths_;
};

/// Component i of the exact maximum of (M w) over w in the box:
/// sum_j M_ij c_j + |M_ij| h_j.
Vector support_max_rows(const Matrix& M, const Box& box);

/// H-representation polytope {x : Ax <= b}.
class HPolytope {
public:
    HPolytope(Matrix A, Vector b);

    const Matrix& A() const { return A_; }
    const Vector& b() const { return b_; }
    int dim() const { return static_cast<int>(A_.cols()); }
    int rows() const { return static_cast<int>(A_.rows()); }

    bool contains(const Vector& x, double tol = 1e-9) const;
    /// LP feasibility check.
    bool empty(double tol = 1e-9) const;
    /// max over the polytope of every coordinate magnitude is finite.
    bool bounded(double tol = 1e-9) const;

    static HPolytope axis_box(int dim, double half_width);

private:
    Matrix A_;
    Vector b_;
};

/// Template matrix T with {x : Tx <= 1} lambda-contractive for the supplied
/// vertex dynamics.
struct ContractiveTemplate {
    Matrix T;
    double lambda = 0.0;

    int rows() const { return static_cast<int>(T.rows()); }
    int dim() const { return static_cast<int>(T.cols()); }
};

struct ContractivityReport {
    bool contractive = false;
    /// support_values(j, i) = max{(T Phi_j x)_i : Tx <= 1}; must be <= lambda + tol.
    Matrix support_values;
    double worst = 0.0;
};

/// LP certification that {x : Tx <= 1} is lambda-contractive under every
/// vertex closed-loop matrix. Throws TemplateUnboundedError when {Tx <= 1}
/// fails to be compact.
ContractivityReport is_lambda_contractive(const Matrix& T, const std::vector<Matrix>& phi_vertices,
                                          double lambda, double tol = 1e-7);

/// Backward-reachability facet accretion: starting from the seed polytope,
/// intersect with the preimages {x : T_k Phi_j x <= lambda 1} until no facet
/// is added, removing redundant rows every pass.
ContractiveTemplate compute_contractive_template(const std::vector<Matrix>& phi_vertices,
                                                 double lambda, const HPolytope& seed,
                                                 double tol = 1e-7, int max_iter = 50);

/// Drops every row whose removal does not change the set (LP test per row).
HPolytope remove_redundant(const HPolytope& p, double tol = 1e-9);

}  // namespace sttmpc
