#include "doctest.h"

#include "heston/domain.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace heston;

TEST_CASE("rectangle classification") {
    const Domain d = Domain::rectangle(0, 1, 1);
    CHECK(classify_point(d, 0.5, 0.5) == PointClass::Interior);
    CHECK(classify_point(d, 0.5, 0.0) == PointClass::Gamma0);
    CHECK(classify_point(d, 1.0, 0.5) == PointClass::Gamma1);
    CHECK(classify_point(d, 0.5, 1.0) == PointClass::Gamma1);
    CHECK(classify_point(d, 0.0, 0.0) == PointClass::Gamma1);
    CHECK(classify_point(d, 1.5, 0.5) == PointClass::Exterior);
    CHECK(classify_point(d, 0.5, 1.0 + 1e-13) == PointClass::Gamma1);
    CHECK(classify_point(d, 0.5, 5e-13) == PointClass::Gamma0);
    CHECK_THROWS_AS(classify_point(d, 0.5, -1e-3), ParameterError);
    CHECK_THROWS_AS(Domain::rectangle(1, 0, 1), ParameterError);
}

TEST_CASE("half-infinite rectangles and the half-plane") {
    const double inf = std::numeric_limits<double>::infinity();
    const Domain d = Domain::rectangle(-inf, 2.0, inf);
    CHECK(classify_point(d, -1e9, 3.0) == PointClass::Interior);
    CHECK(classify_point(d, 2.0, 3.0) == PointClass::Gamma1);
    const Domain h = Domain::half_plane();
    CHECK(classify_point(h, 7.0, 0.0) == PointClass::Gamma0);
    CHECK(classify_point(h, 7.0, 1e-3) == PointClass::Interior);
}

TEST_CASE("classification partitions the closed half-plane") {
    const Domain d = Domain::rectangle(-0.5, 0.5, 0.3);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> X(-1, 1), Y(0, 0.6);
    for (int i = 0; i < 5000; ++i) {
        const double x = i % 10 == 0 ? 0.5 : X(rng);
        const double y = i % 7 == 0 ? 0.0 : Y(rng);
        const PointClass c = classify_point(d, x, y);
        const bool in_closure = x >= -0.5 && x <= 0.5 && y <= 0.3;
        const bool interior = x > -0.5 && x < 0.5 && y > 0 && y < 0.3;
        CHECK((c == PointClass::Exterior) == !in_closure);
        CHECK((c == PointClass::Interior) == interior);
    }
}

TEST_CASE("exit detection: tau and nu on Gamma0") {
    const Domain d = Domain::rectangle(0, 1, 1);
    CHECK_FALSE(detect_exit(d, StoppingRule::Tau, {0, 0.5, 0.5}, {0.01, 0.51, 0.49}).has_value());
    const PathState pre{0.0, 0.5, 0.01};
    const PathState post{0.01, 0.52, 0.0}; // clipped at 0
    const auto e = detect_exit(d, StoppingRule::Tau, pre, post);
    REQUIRE(e.has_value());
    CHECK(e->portion == ExitPortion::Gamma0);
    CHECK(e->y == 0.0);
    CHECK(e->time == doctest::Approx(0.01));
    CHECK_FALSE(detect_exit(d, StoppingRule::Nu, pre, post).has_value());
    CHECK_FALSE(detect_exit(d, StoppingRule::Nu, post, {0.02, 0.53, 0.0}).has_value());
}

TEST_CASE("exit detection interpolates the first crossing") {
    const Domain d = Domain::rectangle(0, 1, 1);
    const auto e = detect_exit(d, StoppingRule::Tau, {0.0, 0.9, 0.5}, {0.1, 1.3, 0.9});
    REQUIRE(e.has_value());
    CHECK(e->portion == ExitPortion::Gamma1);
    CHECK(e->x == 1.0);
    CHECK(e->y == doctest::Approx(0.6));
    CHECK(e->time == doctest::Approx(0.025));
    // top edge reached before the side
    const auto f = detect_exit(d, StoppingRule::Nu, {0.0, 0.9, 0.95}, {0.1, 1.1, 1.15});
    REQUIRE(f.has_value());
    CHECK(f->y == 1.0);
    CHECK(f->x == doctest::Approx(0.95));
}

TEST_CASE("exit detection is monotone under refinement") {
    const Domain d = Domain::rectangle(0, 1, 0.5);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const PathState a{0.0, 0.05 + 0.9 * U(rng), 0.02 + 0.45 * U(rng)};
        const PathState b{1.0, -0.5 + 2.0 * U(rng), 1.0 * U(rng)};
        const double s = U(rng);
        const PathState m{s, a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)};
        for (StoppingRule rule : {StoppingRule::Tau, StoppingRule::Nu}) {
            const auto whole = detect_exit(d, rule, a, b);
            auto split = detect_exit(d, rule, a, m);
            if (!split) split = detect_exit(d, rule, m, b);
            if (whole) {
                REQUIRE(split.has_value());
                CHECK(split->time <= whole->time + 1e-12);
            }
        }
    }
}

TEST_CASE("custom domain: disc above the axis") {
    auto inside = [](double x, double y) { return x * x + (y - 0.5) * (y - 0.5) < 0.36 && y > 0; };
    auto cls = [](double x, double y) {
        const double r2 = x * x + (y - 0.5) * (y - 0.5);
        if (r2 > 0.36 + 1e-12) return PointClass::Exterior;
        if (y <= 1e-12) return std::abs(r2 - 0.36) <= 1e-12 ? PointClass::Gamma1 : PointClass::Gamma0;
        if (r2 >= 0.36 - 1e-12) return PointClass::Gamma1;
        return PointClass::Interior;
    };
    const Domain d = Domain::custom(inside, cls);
    CHECK(classify_point(d, 0, 0.5) == PointClass::Interior);
    CHECK(classify_point(d, 0, 0) == PointClass::Gamma0);
    const auto e = detect_exit(d, StoppingRule::Tau, {0, 0, 0.5}, {1, 1.0, 0.5});
    REQUIRE(e.has_value());
    CHECK(e->x == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(e->portion == ExitPortion::Gamma1);
    const auto g = detect_exit(d, StoppingRule::Tau, {0, 0, 0.2}, {1, 0, -0.2});
    REQUIRE(g.has_value());
    CHECK(g->portion == ExitPortion::Gamma0);
    CHECK_FALSE(detect_exit(d, StoppingRule::Nu, {0, 0, 0.2}, {1, 0, -0.2}).has_value());

    const Domain bad = Domain::custom(inside, [](double, double) { return PointClass::Interior; });
    CHECK_THROWS_AS(classify_point(bad, 5, 5), ParameterError);
}

TEST_CASE("stopping equivalence and boundary modes") {
    CHECK(stopping_equivalence({1.2, 1}));
    CHECK_FALSE(stopping_equivalence({0.8, 1}));
    CHECK(stopping_equivalence({1.0, 1}));
    CHECK(default_mode({1.0, 1}) == BoundaryConditionMode::Gamma1Only);
    CHECK(default_mode({0.4, 1}) == BoundaryConditionMode::FullBoundary);
    CHECK(on_locus(PointClass::Gamma1, BoundaryConditionMode::Gamma1Only));
    CHECK_FALSE(on_locus(PointClass::Gamma0, BoundaryConditionMode::Gamma1Only));
    CHECK(on_locus(PointClass::Gamma0, BoundaryConditionMode::FullBoundary));
    CHECK(parse_rule(to_string(StoppingRule::Nu)) == StoppingRule::Nu);
    CHECK(parse_mode(to_string(BoundaryConditionMode::FullBoundary)) == BoundaryConditionMode::FullBoundary);
}
