#include "doctest.h"

#include "sttmpc/errors.hpp"
#include "sttmpc/geometry.hpp"
#include "sttmpc/rng.hpp"

using namespace sttmpc;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Vector random_ball_point(const Vector& center, double radius, SplitMix64& rng) {
    // Rejection sampling from the bounding box.
    const int d = static_cast<int>(center.size());
    while (true) {
        Vector x(d);
        for (int i = 0; i < d; ++i) x(i) = (2.0 * rng.next_double() - 1.0) * radius;
        if (x.norm() <= radius) return center + x;
    }
}

}  // namespace

TEST_CASE("box: outer ball of the unit disc and a degenerate ball") {
    Box b = Box::outer_ball(Vector::Zero(2), 1.0);
    CHECK(b.half_widths() == vec({1.0, 1.0}));
    Box point = Box::outer_ball(vec({3.0, -1.0}), 0.0);
    CHECK(point.half_widths() == vec({0.0, 0.0}));
    CHECK(point.contains(vec({3.0, -1.0})));
    CHECK_THROWS_AS(Box::outer_ball(Vector::Zero(2), -0.5), std::invalid_argument);
}

TEST_CASE("box: outer ball contains 1000 sampled ball points") {
    SplitMix64 rng(42);
    const Vector c = vec({0.5, -2.0, 1.0});
    const double r = 1.7;
    Box b = Box::outer_ball(c, r);
    for (int i = 0; i < 1000; ++i) CHECK(b.contains(random_ball_point(c, r, rng), 1e-12));
}

TEST_CASE("box: minkowski sum") {
    Box a(vec({0.0}), vec({1.0}));
    Box b(vec({0.0}), vec({2.0}));
    Box s = a.minkowski_sum(b);
    CHECK(s.center()(0) == 0.0);
    CHECK(s.half_widths()(0) == 3.0);

    Box c(vec({1.0, 2.0}), vec({0.5, 0.25}));
    Box zero = Box::zero(2);
    CHECK(c.minkowski_sum(zero) == c);
    CHECK(c.minkowski_sum(zero) == zero.minkowski_sum(c));

    SplitMix64 rng(7);
    Box d(vec({-1.0, 0.5}), vec({2.0, 0.1}));
    Box sum = c.minkowski_sum(d);
    for (int i = 0; i < 1000; ++i) {
        Vector p = c.sample(rng) + d.sample(rng);
        CHECK(sum.contains(p, 1e-12));
    }
    CHECK_THROWS_AS(a.minkowski_sum(c), std::invalid_argument);
}

TEST_CASE("box: scaling") {
    Box a(vec({0.0}), vec({1.0}));
    Box z = a.scaled(0.0);
    CHECK(z.half_widths()(0) == 0.0);
    Box b(vec({1.0}), vec({2.0}));
    Box b2 = b.scaled(2.0);
    CHECK(b2.center()(0) == 2.0);
    CHECK(b2.half_widths()(0) == 4.0);
    CHECK_THROWS_AS(b.scaled(-1.0), std::invalid_argument);

    SplitMix64 rng(11);
    Box c(vec({0.3, -0.7}), vec({1.1, 0.4}));
    Box c3 = c.scaled(3.0);
    for (int i = 0; i < 1000; ++i) CHECK(c3.contains(3.0 * c.sample(rng), 1e-9));
}

TEST_CASE("box: intersection") {
    Box a(vec({1.0}), vec({1.0}));   // [0, 2]
    Box b(vec({2.0}), vec({1.0}));   // [1, 3]
    auto c = Box::intersect(a, b);
    REQUIRE(c.has_value());
    CHECK(c->center()(0) == doctest::Approx(1.5));
    CHECK(c->half_widths()(0) == doctest::Approx(0.5));

    Box d(vec({0.5}), vec({0.5}));  // [0, 1]
    Box e(vec({2.5}), vec({0.5}));  // [2, 3]
    CHECK(!Box::intersect(d, e).has_value());

    auto self = Box::intersect(a, a);
    REQUIRE(self.has_value());
    CHECK(*self == a);

    SplitMix64 rng(99);
    Box f(vec({0.2, 0.0}), vec({1.0, 2.0}));
    Box g(vec({-0.3, 1.0}), vec({0.8, 1.5}));
    auto h = Box::intersect(f, g);
    REQUIRE(h.has_value());
    for (int i = 0; i < 500; ++i) {
        Vector p = h->sample(rng);
        CHECK(f.contains(p, 1e-12));
        CHECK(g.contains(p, 1e-12));
    }
}

TEST_CASE("box: vertex enumeration") {
    Box a(vec({0.0}), vec({1.0}));
    auto v1 = a.vertices();
    REQUIRE(v1.size() == 2);
    CHECK(v1[0](0) == -1.0);
    CHECK(v1[1](0) == 1.0);

    Box b(Vector::Zero(2), vec({1.0, 2.0}));
    auto v2 = b.vertices();
    REQUIRE(v2.size() == 4);
    for (const Vector& v : v2) {
        CHECK(std::abs(v(0)) == 1.0);
        CHECK(std::abs(v(1)) == 2.0);
    }

    Box six(Vector::Zero(6), Vector::Constant(6, 0.07));
    auto v6 = six.vertices();
    CHECK(v6.size() == 64);
    for (const Vector& v : v6) CHECK(six.contains(v, 1e-15));

    Box big(Vector::Zero(13), Vector::Ones(13));
    CHECK_THROWS_AS(big.vertices(), CapacityError);
}

TEST_CASE("support_max_rows: closed form matches the definition and an LP oracle") {
    Box unit(Vector::Zero(2), Vector::Ones(2));
    CHECK((support_max_rows(Matrix::Identity(2, 2), unit) - Vector::Ones(2))
              .lpNorm<Eigen::Infinity>() <= 1e-15);

    Matrix row(1, 2);
    row << 1.0, -1.0;
    CHECK(support_max_rows(row, unit)(0) == doctest::Approx(2.0));

    SplitMix64 rng(2023);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + static_cast<int>(rng.next_u64() % 4);
        Vector c(d), h(d);
        for (int i = 0; i < d; ++i) {
            c(i) = 2.0 * rng.next_double() - 1.0;
            h(i) = rng.next_double();
        }
        Box box(c, h);
        Matrix M(3, d);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < d; ++j) M(i, j) = 2.0 * rng.next_double() - 1.0;
        Vector s = support_max_rows(M, box);

        // LP oracle: maximize each row over the box.
        Matrix A(2 * d, d);
        A.topRows(d) = Matrix::Identity(d, d);
        A.bottomRows(d) = -Matrix::Identity(d, d);
        Vector b(2 * d);
        b.head(d) = c + h;
        b.tail(d) = -(c - h);
        for (int i = 0; i < 3; ++i) {
            SolveStatus st = lp_maximize(M.row(i).transpose(), A, b);
            REQUIRE(st.state == SolveState::optimal);
            CHECK(s(i) == doctest::Approx(st.objective).epsilon(1e-9));
        }
    }
    CHECK_THROWS_AS(support_max_rows(Matrix::Identity(3, 3), unit), std::invalid_argument);
}

TEST_CASE("contractive template: scalar, deadbeat and certification cases") {
    SUBCASE("scalar system is already contractive in the seed interval") {
        std::vector<Matrix> phis{Matrix::Constant(1, 1, 0.5)};
        HPolytope seed = HPolytope::axis_box(1, 1.0);
        ContractiveTemplate t = compute_contractive_template(phis, 0.9, seed);
        REQUIRE(t.rows() == 2);
        CHECK(std::abs(std::abs(t.T(0, 0)) - 1.0) <= 1e-12);
        CHECK(std::abs(std::abs(t.T(1, 0)) - 1.0) <= 1e-12);
        CHECK(is_lambda_contractive(t.T, phis, 0.9).contractive);
    }
    SUBCASE("deadbeat dynamics return the seed itself") {
        std::vector<Matrix> phis{Matrix::Zero(2, 2)};
        HPolytope seed = HPolytope::axis_box(2, 2.0);
        ContractiveTemplate t = compute_contractive_template(phis, 0.5, seed);
        CHECK(t.rows() == 4);  // normalized box facets
        CHECK(is_lambda_contractive(t.T, phis, 0.5).contractive);
    }
    SUBCASE("rotation-like dynamics require facet accretion") {
        Matrix rot(2, 2);
        const double a = 0.7, ang = 0.9;
        rot << a * std::cos(ang), -a * std::sin(ang), a * std::sin(ang), a * std::cos(ang);
        std::vector<Matrix> phis{rot};
        ContractiveTemplate t = compute_contractive_template(phis, 0.8, HPolytope::axis_box(2, 1.0));
        CHECK(t.rows() > 4);
        ContractivityReport rep = is_lambda_contractive(t.T, phis, 0.8);
        CHECK(rep.contractive);
        CHECK(rep.worst <= 0.8 + 1e-7);
    }
    SUBCASE("spectral radius above lambda is rejected") {
        std::vector<Matrix> phis{Matrix::Constant(1, 1, 0.95)};
        CHECK_THROWS_AS(compute_contractive_template(phis, 0.9, HPolytope::axis_box(1, 1.0)),
                        NotContractibleError);
    }
    SUBCASE("identity template fails certification for expanding dynamics") {
        Matrix grow = 1.5 * Matrix::Identity(2, 2);
        ContractivityReport rep =
            is_lambda_contractive(HPolytope::axis_box(2, 1.0).A(), {grow}, 0.999);
        CHECK(!rep.contractive);
    }
    SUBCASE("lambda = 1 boundary: identity dynamics are invariant in any box") {
        ContractivityReport rep =
            is_lambda_contractive(HPolytope::axis_box(2, 1.0).A(), {Matrix::Identity(2, 2)}, 1.0);
        CHECK(rep.contractive);
        CHECK(rep.worst == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("unbounded template throws") {
        Matrix half(1, 2);
        half << 1.0, 0.0;  // {x1 <= 1} unbounded
        CHECK_THROWS_AS(is_lambda_contractive(half, {0.5 * Matrix::Identity(2, 2)}, 0.9),
                        TemplateUnboundedError);
    }
}

TEST_CASE("remove_redundant") {
    SUBCASE("duplicated facet is dropped") {
        Matrix A(5, 2);
        A << 1, 0, 0, 1, -1, 0, 0, -1, 1, 0;  // last row duplicates the first
        HPolytope p(A, Vector::Ones(5));
        HPolytope q = remove_redundant(p);
        CHECK(q.rows() == 4);
    }
    SUBCASE("irredundant polytope is a fixpoint") {
        HPolytope p = HPolytope::axis_box(2, 1.0);
        HPolytope q = remove_redundant(p);
        CHECK(q.rows() == 4);
        CHECK(q.A() == p.A());
        CHECK(q.b() == p.b());
    }
    SUBCASE("set is preserved on sampled points") {
        // Octagon-ish polytope with extra slack rows.
        Matrix A(6, 2);
        A << 1, 0, 0, 1, -1, 0, 0, -1, 1, 1, 5, 5;
        Vector b(6);
        b << 1, 1, 1, 1, 1.5, 20.0;  // rows 5 (loose) is redundant
        HPolytope p(A, b);
        HPolytope q = remove_redundant(p);
        CHECK(q.rows() < p.rows());
        SplitMix64 rng(5);
        Box sample_box(Vector::Zero(2), Vector::Constant(2, 1.5));
        for (int i = 0; i < 500; ++i) {
            Vector x = sample_box.sample(rng);
            CHECK(p.contains(x) == q.contains(x));
        }
    }
    SUBCASE("empty polytope is rejected") {
        Matrix A(2, 1);
        A << 1, -1;
        Vector b(2);
        b << -2.0, 1.0;  // x <= -2 and x >= -1
        CHECK_THROWS_AS(remove_redundant(HPolytope(A, b)), std::invalid_argument);
    }
}
