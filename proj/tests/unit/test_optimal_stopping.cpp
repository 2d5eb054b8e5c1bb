#include "doctest.h"

#include "heston/optimal_stopping.hpp"

#include <cmath>

using namespace heston;

namespace {

const HestonParams kP{2.0, 0.09, 0.6, -0.3, 0.05, 0.0};

ProblemData put_problem(double K) {
    ProblemData d;
    d.g = make_catalog("put:" + std::to_string(K)).fn;
    d.psi = d.g;
    d.growth = {K, 0.0, 0.0};
    return d;
}

McSettings mc_with(std::uint64_t n, double dt) {
    McSettings mc;
    mc.n_paths = n;
    mc.dt = dt;
    return mc;
}

} // namespace

TEST_CASE("time slab grid") {
    const TimeSlabGrid g = TimeSlabGrid::make(0.0, 1.0, 0.3);
    REQUIRE(g.slabs() == 4);
    for (std::size_t k = 0; k < g.slabs(); ++k) CHECK(g.knots[k + 1] - g.knots[k] <= 0.3);
    CHECK(g.knots.front() == 0.0);
    CHECK(g.knots.back() == 1.0);
    CHECK(TimeSlabGrid::make(0.0, 1.0, 0.25).slabs() == 4);
    CHECK(TimeSlabGrid::make(0.5, 1.0, 5.0).slabs() == 1);
    CHECK_THROWS_AS(TimeSlabGrid::make(1.0, 1.0, 0.1), ParameterError);
    CHECK_THROWS_AS(TimeSlabGrid::make(0.0, 1.0, 0.0), ParameterError);
}

TEST_CASE("slack obstacle gives the terminal value problem") {
    ProblemData d = put_problem(100.0);
    d.psi = [](double, double, double) { return -1e6; };
    ParabolicProblem prob;
    const McSettings mc = mc_with(20000, 0.01);
    LsmcSettings ls;
    ls.n_train = 5000;
    ls.dates_per_slab = 10;
    const ObstacleEstimate o =
        value_obstacle_parabolic(kP, d, prob, StoppingRule::Nu, mc, TimeSlabGrid::make(0, 1, 0.5), ls, 0.0,
                                 std::log(100.0), 0.09);
    McSettings same = mc;
    same.first_path = ls.n_train;
    const Estimate bvp = estimate_parabolic_bvp(kP, d, prob, StoppingRule::Nu, same, 0.0, std::log(100.0), 0.09);
    CHECK(o.low.mean == bvp.mean);
    CHECK(o.low.exits[static_cast<int>(ExitPortion::Stopped)] == 0);
    for (const auto& r : o.policy.dates) CHECK(r.beta.empty());
}

TEST_CASE("constant solution of the obstacle problem") {
    ProblemData d;
    d.f = [](double, double, double) { return 0.05 * 2.0; };
    d.g = [](double, double, double) { return 2.0; };
    d.psi = d.g;
    d.growth = {2.0, 0.0, 0.0};
    ParabolicProblem prob;
    LsmcSettings ls;
    ls.n_train = 2000;
    ls.dates_per_slab = 5;
    const ObstacleEstimate o = value_obstacle_parabolic(kP, d, prob, StoppingRule::Nu, mc_with(2000, 0.02),
                                                        TimeSlabGrid::make(0, 1, 1), ls, 0.0, 0.0, 0.09);
    CHECK(o.low.mean == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(o.high.mean == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("compatibility and rank errors") {
    ProblemData d = put_problem(100.0);
    d.psi = make_catalog("put:110").fn;
    ParabolicProblem prob;
    LsmcSettings ls;
    ls.n_train = 5000;
    CHECK_THROWS_AS(value_obstacle_parabolic(kP, d, prob, StoppingRule::Nu, mc_with(100, 0.02),
                                             TimeSlabGrid::make(0, 1, 1), ls, 0.0, std::log(100.0), 0.09),
                    ParameterError);
    ls.n_train = 30;
    CHECK_THROWS_AS(value_obstacle_parabolic(kP, put_problem(100.0), prob, StoppingRule::Nu, mc_with(100, 0.02),
                                             TimeSlabGrid::make(0, 1, 1), ls, 0.0, std::log(100.0), 0.09),
                    NumericalError);
    CHECK_THROWS_AS(value_obstacle_parabolic(kP, put_problem(100.0), prob, StoppingRule::Nu, mc_with(100, 0.02),
                                             TimeSlabGrid::make(0, 0.5, 1), ls, 0.0, std::log(100.0), 0.09),
                    ParameterError);
}

TEST_CASE("American put on a rectangle against the PSOR oracle") {
    const double x0 = std::log(100.0) - 2.5, x1 = std::log(100.0) + 2.5;
    ParabolicProblem prob;
    prob.domain = Domain::rectangle(x0, x1, 1.0);
    prob.T = 1.0;
    const ProblemData d = put_problem(100.0);
    const Grid2D g{201, 51, x0, x1, 1.0};
    PdeSettings s;
    s.nt = 100;
    const ObstacleSolution am = solve_obstacle_parabolic(g, kP, d, prob, {0.0}, s);
    ProblemData eu_data = d;
    eu_data.psi = nullptr;
    const auto eu = solve_parabolic(g, kP, eu_data, prob, {0.0}, s);
    CHECK(am.complementarity < 1e-8);

    LsmcSettings ls;
    ls.n_train = 50000;
    ls.dates_per_slab = 25;
    const McSettings mc = mc_with(50000, 0.01);
    const TimeSlabGrid slabs = TimeSlabGrid::make(0, 1, 0.5);
    for (double S : {90.0, 110.0}) {
        const double x = std::log(S);
        const ObstacleEstimate o = value_obstacle_parabolic(kP, d, prob, StoppingRule::Nu, mc, slabs, ls, 0.0, x, 0.09);
        const double ref = am.fields[0].at(x, 0.09);
        CHECK(std::abs(o.low.mean - ref) <= 0.015 * ref);
        CHECK(o.low.mean >= eu[0].at(x, 0.09) - 3.0 * o.low.std_error);
        CHECK(o.low.mean >= d.psi(0.0, x, 0.09) - 3.0 * o.low.std_error);
        CHECK(o.low.mean <= o.high.mean + 3.0 * std::hypot(o.low.std_error, o.high.std_error));
    }
}

TEST_CASE("policy file round trip") {
    const ProblemData d = put_problem(100.0);
    ParabolicProblem prob;
    LsmcSettings ls;
    ls.n_train = 5000;
    ls.dates_per_slab = 10;
    const McSettings mc = mc_with(4000, 0.02);
    const ObstacleEstimate o = value_obstacle_parabolic(kP, d, prob, StoppingRule::Nu, mc,
                                                        TimeSlabGrid::make(0, 1, 1), ls, 0.0, std::log(95.0), 0.09);
    const RegressionPolicy back = RegressionPolicy::from_json(o.policy.to_json());
    CHECK(back.to_json() == o.policy.to_json());
    McSettings low = mc;
    low.dt = 0.02;
    low.first_path = ls.n_train;
    const Estimate again = evaluate_J_p(kP, d, prob, back.as_policy(d), StoppingRule::Nu, low, 0.0, std::log(95.0), 0.09);
    CHECK(again.mean == o.low.mean);
    CHECK_THROWS_AS(RegressionPolicy::from_json("{\"format\":\"other\"}"), ParameterError);
}

TEST_CASE("raising the obstacle never lowers the value") {
    ProblemData lo = put_problem(100.0);
    lo.psi = make_catalog("put:95").fn;
    const ProblemData hi = put_problem(100.0);
    ParabolicProblem prob;
    LsmcSettings ls;
    ls.n_train = 20000;
    ls.dates_per_slab = 20;
    const McSettings mc = mc_with(20000, 0.01);
    const TimeSlabGrid slabs = TimeSlabGrid::make(0, 1, 1);
    const double x = std::log(95.0);
    const ObstacleEstimate a = value_obstacle_parabolic(kP, lo, prob, StoppingRule::Nu, mc, slabs, ls, 0.0, x, 0.09);
    const ObstacleEstimate b = value_obstacle_parabolic(kP, hi, prob, StoppingRule::Nu, mc, slabs, ls, 0.0, x, 0.09);
    CHECK(b.low.mean >= a.low.mean - 3.0 * std::hypot(a.low.std_error, b.low.std_error));
    const Estimate bvp = estimate_parabolic_bvp(kP, hi, prob, StoppingRule::Nu, mc, 0.0, x, 0.09);
    CHECK(b.low.mean >= bvp.mean - 3.0 * std::hypot(bvp.std_error, b.low.std_error));
}

TEST_CASE("slab decomposition reproduces the single-pass value") {
    const ProblemData d = put_problem(100.0);
    ParabolicProblem prob;
    LsmcSettings ls;
    ls.n_train = 10000;
    ls.dates_per_slab = 5;
    McSettings mc = mc_with(10000, 0.02);
    const TimeSlabGrid slabs = TimeSlabGrid::make(0, 1, 0.5);
    const double x = std::log(100.0);
    const ObstacleEstimate o = value_obstacle_parabolic(kP, d, prob, StoppingRule::Nu, mc, slabs, ls, 0.0, x, 0.09);
    mc.n_paths = 1000;
    const SlabIdentity id = check_slab_identity(kP, d, prob, StoppingRule::Nu, mc, o.policy.as_policy(d), 0.0, x,
                                                0.09, 0.5, 200);
    CHECK(id.reach_fraction > 0.2);
    CHECK(id.reach_fraction < 1.0);
    CHECK(z_score(id.single.mean, id.single.std_error, id.composed.mean, id.composed.std_error) < 3.0);
}

TEST_CASE("exercise decisions agree with the PSOR free boundary") {
    const ProblemData d = put_problem(100.0);
    ParabolicProblem prob;
    const Grid2D g{201, 51, std::log(100.0) - 2.5, std::log(100.0) + 2.5, 1.0};
    PdeSettings s;
    s.nt = 100;
    const ObstacleSolution am = solve_obstacle_parabolic(g, kP, d, prob, {0.0, 0.25, 0.5, 0.75}, s);
    const std::size_t j = 5; // y = 0.1
    std::vector<double> b;
    for (const Field& f : am.fields) b.push_back(exercise_boundary(f)[j]);
    for (std::size_t k = 0; k + 1 < b.size(); ++k) {
        REQUIRE(std::isfinite(b[k]));
        CHECK(b[k + 1] >= b[k] - 1e-12);
    }

    LsmcSettings ls;
    ls.n_train = 40000;
    ls.dates_per_slab = 20;
    const ObstacleEstimate o = value_obstacle_parabolic(kP, d, prob, StoppingRule::Nu, mc_with(1000, 0.01),
                                                        TimeSlabGrid::make(0, 1, 1), ls, 0.0, std::log(90.0), 0.09);
    const StoppingPolicy pol = o.policy.as_policy(d);
    const double y = g.y(j);
    CHECK(pol(0.5, b[2] - 0.15, y));
    CHECK_FALSE(pol(0.5, b[2] + 0.15, y));
}

TEST_CASE("continuation region masks") {
    Field f;
    f.grid = {11, 6, -1, 1, 1};
    const DataFn psi = [](double, double x, double) { return x; };
    f.u.resize(f.grid.size());
    for (std::size_t k = 0; k < f.grid.size(); ++k) f.u[k] = f.grid.x(k % f.grid.nx);
    CHECK(continuation_region(f, psi, 1e-9).region.count() == 0);
    for (double& v : f.u) v += 1.0;
    const ContinuationRegion c = continuation_region(f, psi, 1e-9);
    CHECK(c.region.count() == f.grid.size());
    CHECK(c.below_obstacle == 0);
    CHECK(RegionMask::from_json(c.region.to_json()).mask == c.region.mask);

    McSettings mc = mc_with(500, 0.01);
    CHECK(continuation_exit_time(kP, c.region, mc, 0.5, 0.0, 0.09).mean == 0.5);
    RegionMask empty = c.region;
    std::fill(empty.mask.begin(), empty.mask.end(), 0);
    CHECK(continuation_exit_time(kP, empty, mc, 0.5, 0.0, 0.09).mean == 0.0);
    const Estimate e = continuation_exit_time(kP, c.region, mc, 50.0, 0.0, 0.09);
    CHECK(e.mean > 0.0);
    CHECK(e.mean < 50.0);
}

TEST_CASE("elliptic obstacle below the solution leaves the region empty") {
    ProblemData d;
    d.f = [](double, double, double) { return 0.05; };
    d.g = [](double, double, double) { return 1.0; };
    d.psi = [](double, double, double) { return 0.5; };
    d.growth = {1.0, 0.0, 0.0};
    const Domain dom = Domain::rectangle(0, 1, 1);
    const EllipticObstacleResult r =
        value_obstacle_elliptic(kP, d, dom, StoppingRule::Nu, mc_with(200, 0.01), {6, 6, 0, 1, 1}, 0.5, 0.5);
    CHECK(r.region.count() == 0);
    CHECK(r.value.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.sweeps == 1);

    // psi equal to the solution: ties stop, the value is unchanged.
    d.psi = d.g;
    const EllipticObstacleResult t =
        value_obstacle_elliptic(kP, d, dom, StoppingRule::Nu, mc_with(200, 0.01), {6, 6, 0, 1, 1}, 0.5, 0.5);
    CHECK(t.value.mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perpetual put on a strip against the elliptic LCP") {
    HestonParams p = kP;
    p.r = 0.1;
    const double x0 = std::log(40.0), x1 = std::log(160.0), y1 = 0.5;
    const Domain dom = Domain::rectangle(x0, x1, y1);
    const ProblemData d = put_problem(100.0);
    const ObstacleSolution lcp =
        solve_obstacle_elliptic({121, 51, x0, x1, y1}, p, d, dom, BoundaryConditionMode::Gamma1Only);
    CHECK(lcp.complementarity < 1e-8);
    McSettings mc = mc_with(4000, 0.01);
    mc.target_std_error = 1e-2;
    RegionIteration it;
    it.final_paths = 40000;
    const double x = std::log(90.0);
    const EllipticObstacleResult r =
        value_obstacle_elliptic(p, d, dom, StoppingRule::Nu, mc, {13, 7, x0, x1, y1}, x, 0.1, it);
    const double ref = lcp.fields[0].at(x, 0.1);
    CHECK(r.region.count() > 0);
    CHECK(r.sweeps > 1);
    CHECK(std::abs(r.value.mean - ref) <= 0.02 * ref);
}

TEST_CASE("slab length certificate") {
    const SlabCertificate zero = validate_slab_length(kP, {1.0, 0.0, 0.0}, 50.0, 0.09);
    CHECK(zero.ok);
    CHECK(zero.p0 == 2.0);
    const SlabCertificate huge = validate_slab_length(kP, {1.0, 0.0, 1.0}, 100.0, 0.09);
    CHECK_FALSE(huge.ok);
    CHECK(huge.binding.find("M2") != std::string::npos);
    CHECK(huge.c > 0.0);
    CHECK(huge.c <= 1.0);

    const GrowthBound mid{1.0, 1.0, 0.5};
    const double T_star = slab_threshold(kP, mid, 0.09, 1e-3, 100.0);
    CHECK(T_star > 1e-3);
    CHECK(T_star < 100.0);
    const SlabCertificate below = validate_slab_length(kP, mid, 0.8 * T_star, 0.09);
    CHECK(below.ok);
    CHECK(below.p0 > 1.0);
    CHECK(below.p0 * mid.M2 < below.moment_bound);
    CHECK(below.p0 * mid.M1 <= feller_indices(kP).mu);
    CHECK_FALSE(validate_slab_length(kP, mid, 1.25 * T_star, 0.09).ok);
}
