#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "fwmerge/rng.hpp"
#include "fwmerge/simplex.hpp"

using namespace fwmerge;

namespace {

// Brute-force oracle: enumerate every grid point of the unit simplex with
// coordinates i/m and apply `fn`. Independent of the projection code.
void for_each_simplex_point(int dim, int m, const std::function<void(const Eigen::VectorXd&)>& fn) {
    Eigen::VectorXd point(dim);
    std::function<void(int, int)> recurse = [&](int coord, int remaining) {
        if (coord == dim - 1) {
            point[coord] = static_cast<double>(remaining) / static_cast<double>(m);
            fn(point);
            return;
        }
        for (int i = 0; i <= remaining; ++i) {
            point[coord] = static_cast<double>(i) / static_cast<double>(m);
            recurse(coord + 1, remaining - i);
        }
    };
    recurse(0, m);
}

Eigen::VectorXd grid_argmin(const Eigen::VectorXd& v, int m) {
    Eigen::VectorXd best;
    double best_dist = std::numeric_limits<double>::infinity();
    for_each_simplex_point(static_cast<int>(v.size()), m, [&](const Eigen::VectorXd& w) {
        const double d = (w - v).squaredNorm();
        if (d < best_dist) {
            best_dist = d;
            best = w;
        }
    });
    return best;
}

}  // namespace

TEST_CASE("projection of feasible points is the identity") {
    Eigen::VectorXd v(2);
    v << 0.5, 0.5;
    const SimplexWeights w = project_simplex(v);
    CHECK(w.values[0] == doctest::Approx(0.5));
    CHECK(w.values[1] == doctest::Approx(0.5));
}

TEST_CASE("symmetric overshoot splits evenly") {
    Eigen::VectorXd v(2);
    v << 1.0, 1.0;
    const SimplexWeights w = project_simplex(v);
    CHECK(w.values[0] == doctest::Approx(0.5));
    CHECK(w.values[1] == doctest::Approx(0.5));
}

TEST_CASE("projection of [2,0] matches the brute-force grid") {
    Eigen::VectorXd v(2);
    v << 2.0, 0.0;
    const SimplexWeights w = project_simplex(v);
    const Eigen::VectorXd oracle = grid_argmin(v, 10000);  // step 1e-4
    CHECK((w.values - oracle).norm() <= 1e-4 + 1e-6);
    CHECK(w.values[0] == doctest::Approx(1.0));
    CHECK(w.values[1] == doctest::Approx(0.0));
}

TEST_CASE("capped mode keeps feasible vectors") {
    Eigen::VectorXd v(2);
    v << 0.2, 0.3;
    const SimplexWeights w = project_simplex(v, SimplexMode::capped);
    CHECK(w.values[0] == 0.2);
    CHECK(w.values[1] == 0.3);

    SUBCASE("negative entries are clipped when the rest fits") {
        Eigen::VectorXd u(3);
        u << 0.4, -0.5, 0.3;
        const SimplexWeights c = project_simplex(u, SimplexMode::capped);
        CHECK(c.values[0] == 0.4);
        CHECK(c.values[1] == 0.0);
        CHECK(c.values[2] == 0.3);
    }
    SUBCASE("overshoot falls back to the unit projection") {
        Eigen::VectorXd u(2);
        u << 1.0, 1.0;
        const SimplexWeights c = project_simplex(u, SimplexMode::capped);
        CHECK(c.values[0] == doctest::Approx(0.5));
        CHECK(c.values[1] == doctest::Approx(0.5));
        CHECK(c.values.sum() == doctest::Approx(1.0));
    }
}

TEST_CASE("uniform weights") {
    const SimplexWeights one = uniform_weights(1);
    REQUIRE(one.values.size() == 1);
    CHECK(one.values[0] == 1.0);

    const SimplexWeights four = uniform_weights(4);
    for (int i = 0; i < 4; ++i) CHECK(four.values[i] == 0.25);
    CHECK_NOTHROW(four.validate());

    CHECK_THROWS_AS(uniform_weights(0), DimensionError);
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(project_simplex(Eigen::VectorXd()), DimensionError);
    Eigen::VectorXd bad(2);
    bad << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(project_simplex(bad), NumericsError);
}

TEST_CASE("idempotence") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int dim = 2 + trial % 4;
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = rng.uniform(-3.0, 3.0);
        const Eigen::VectorXd once = project_simplex(v).values;
        const Eigen::VectorXd twice = project_simplex(once).values;
        CHECK((twice - once).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("optimality against a dense simplex grid") {
    Rng rng(123);
    const int grid_steps[] = {0, 0, 400, 60, 24, 14};  // per dimension
    for (int trial = 0; trial < 40; ++trial) {
        const int dim = 2 + trial % 4;
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = rng.uniform(-2.0, 2.0);
        const Eigen::VectorXd p = project_simplex(v).values;
        const double p_dist = (p - v).norm();
        for_each_simplex_point(dim, grid_steps[dim], [&](const Eigen::VectorXd& w) {
            CHECK(p_dist <= (w - v).norm() + 1e-6);
        });
    }
}

TEST_CASE("output satisfies the simplex invariants") {
    Rng rng(321);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 1 + trial % 6;
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = rng.uniform(-5.0, 5.0);

        const SimplexWeights unit = project_simplex(v, SimplexMode::unit);
        CHECK_NOTHROW(unit.validate());
        CHECK((unit.values.array() >= 0.0).all());
        CHECK(unit.values.sum() >= 1.0 - 1e-9);
        CHECK(unit.values.sum() <= 1.0 + 1e-9);

        const SimplexWeights capped = project_simplex(v, SimplexMode::capped);
        CHECK_NOTHROW(capped.validate());
        CHECK((capped.values.array() >= 0.0).all());
        CHECK(capped.values.sum() <= 1.0 + 1e-9);
    }
}

TEST_CASE("translation invariance in unit mode") {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        const int dim = 2 + trial % 4;
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = rng.uniform(-2.0, 2.0);
        const double c = rng.uniform(-10.0, 10.0);
        const Eigen::VectorXd base = project_simplex(v).values;
        const Eigen::VectorXd shifted =
            project_simplex((v.array() + c).matrix()).values;
        CHECK((base - shifted).cwiseAbs().maxCoeff() <= 1e-12);
    }
}
