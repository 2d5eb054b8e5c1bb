#include "doctest.h"

#include "heston/config.hpp"
#include "heston/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace heston;

namespace {

const char* kPut = R"(
# comment
[model]
kappa = 2
theta = 0.09
sigma = 0.6
rho = -0.3
r = 0.05

[problem]
type = parabolic_bvp
id = put
g = put:100
T = 1

[mc]
n_paths = 2000
dt = 0.01
scheme = exact_cir

[points]
list = 0, 4.6, 0.09 ; 0.5,4.5,0.04
)";

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("heston_fk_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("config: parse fills the sections that are present") {
    const ExperimentConfig c = parse_config(kPut);
    CHECK(c.type == ProblemType::ParabolicBvp);
    CHECK(c.id == "put");
    CHECK(c.g == "put:100");
    CHECK(c.mc.n_paths == 2000);
    CHECK(c.mc.scheme == Scheme::ExactCIRMarginal);
    REQUIRE(c.points.size() == 2);
    CHECK(c.points[1].t == 0.5);
    CHECK(c.points[1].y == 0.04);
    CHECK(c.domain.shape == Domain::Shape::HalfPlane);
    CHECK_FALSE(c.mode.has_value());
    CHECK(c.resolved_mode() == BoundaryConditionMode::Gamma1Only);
    CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("config: canonical form is a fixed point") {
    const ExperimentConfig c = parse_config(kPut);
    const std::string once = canonical_config(c);
    const ExperimentConfig back = parse_config(once);
    CHECK(canonical_config(back) == once);
    CHECK(back.points[0].x == c.points[0].x);
    CHECK(back.mc.dt == c.mc.dt);

    ExperimentConfig r = parse_config("[problem]\ntype=elliptic_bvp\ng=constant:1\n[domain]\nshape=rectangle\nx0=0\n");
    const std::string rc = canonical_config(r);
    CHECK(rc.find("x1=inf") != std::string::npos);
    CHECK(canonical_config(parse_config(rc)) == rc);

    // Shortest round-trip spelling of binary fractions.
    r.params.theta = 0.1 + 0.2;
    CHECK(parse_config(canonical_config(r)).params.theta == r.params.theta);
}

TEST_CASE("config: unknown sections, keys and malformed values are errors") {
    CHECK_THROWS_AS(parse_config("[modle]\nkappa=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[model]\nkapa=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("kappa=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[model]\nkappa=two\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mc]\nn_paths=-5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mc]\nscheme=milstein\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[problem]\ntype=pde\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[domain]\nx0=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[points]\nlist=0,1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[compare]\ncf=maybe\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/file.ini"), ConfigError);
}

TEST_CASE("config: parse_point") {
    const QueryPoint q = parse_point(" 0.25, -1e-1 ,0.09");
    CHECK(q.t == 0.25);
    CHECK(q.x == -0.1);
    CHECK(q.y == 0.09);
    CHECK_THROWS_AS(parse_point("1,2"), ConfigError);
    CHECK_THROWS_AS(parse_point("1,2,3,4"), ConfigError);
    CHECK_THROWS_AS(parse_point("a,b,c"), ConfigError);
}

TEST_CASE("config: beta, boundary mode and stopping rule must agree") {
    // beta = 1 with the default parameters.
    ExperimentConfig c = parse_config("[problem]\ntype=elliptic_bvp\ng=constant:1\n[points]\nlist=0,0,0.1\n");
    CHECK_NOTHROW(validate_config(c));
    c.mode = BoundaryConditionMode::FullBoundary;
    CHECK_THROWS_AS(validate_config(c), ConfigError);

    // beta = 0.5
    c.params = {1.0, 0.04, 0.4, -0.3, 0.05, 0.0};
    c.mode.reset();
    CHECK(c.resolved_mode() == BoundaryConditionMode::FullBoundary);
    CHECK_NOTHROW(validate_config(c));
    c.rule = StoppingRule::Nu;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c.mode = BoundaryConditionMode::Gamma1Only;
    c.rule = StoppingRule::Tau;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c.rule = StoppingRule::Nu;
    CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("config: problem data, growth and points") {
    ExperimentConfig c = parse_config(kPut);
    ProblemData d = build_data(c);
    CHECK(d.g(1.0, std::log(90.0), 0.1) == doctest::Approx(10.0));
    CHECK_FALSE(static_cast<bool>(d.psi));

    c.type = ProblemType::EllipticBvp;
    CHECK_THROWS_AS(validate_config(c), ConfigError); // points with t != 0
    c.points = {{0.0, 4.6, 0.09}};
    CHECK_NOTHROW(validate_config(c));
    c.params.r = 0.0;
    CHECK_THROWS_AS(validate_config(c), ConfigError);

    c = parse_config(kPut);
    c.points = {{2.0, 4.6, 0.09}};
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c.points = {{0.0, 4.6, -0.1}};
    CHECK_THROWS_AS(validate_config(c), ConfigError);

    c = parse_config(kPut);
    c.growth = GrowthBound{1.0, 0.0, 50.0};
    CHECK_THROWS_AS(validate_config(c), ConfigError);

    c = parse_config(kPut);
    c.g = "nonsense:1";
    CHECK_THROWS_AS(validate_config(c), ConfigError);
}

TEST_CASE("config: obstacle needs psi below g on the locus") {
    ExperimentConfig c = parse_config(kPut);
    c.type = ProblemType::ParabolicObstacle;
    CHECK_THROWS_AS(validate_config(c), ConfigError); // psi missing
    c.psi = "put:100";
    CHECK_NOTHROW(validate_config(c));
    c.psi = "put:120";
    CHECK_THROWS_AS(validate_config(c), ConfigError);

    c = parse_config(kPut);
    c.psi = "put:100";
    CHECK_THROWS_AS(validate_config(c), ConfigError); // psi on a bvp

    ExperimentConfig e = parse_config(
        "[problem]\ntype=elliptic_obstacle\ng=constant:1\npsi=constant:2\n[domain]\nshape=rectangle\nx0=-1\nx1=1\n"
        "y1=1\n[points]\nlist=0,0,0.5\n");
    CHECK_THROWS_AS(validate_config(e), ConfigError);
    e.psi = "constant:0.5";
    CHECK_NOTHROW(validate_config(e));
}

TEST_CASE("experiment: subcommand names and overrides") {
    for (Subcommand s : {Subcommand::Simulate, Subcommand::PriceBvp, Subcommand::PriceObstacle,
                         Subcommand::OraclePde, Subcommand::Verify, Subcommand::Compare})
        CHECK(parse_subcommand(to_string(s)) == s);
    CHECK_THROWS_AS(parse_subcommand("price"), ConfigError);

    ExperimentConfig c = parse_config(kPut);
    Overrides o;
    o.seed = 99;
    o.workers = 4;
    o.out_dir = "elsewhere";
    o.points = {{0.0, 4.0, 0.2}};
    apply_overrides(c, o);
    CHECK(c.mc.seed == 99);
    CHECK(c.verify.seed == 99);
    CHECK(c.mc.workers == 4);
    CHECK(c.out_dir == "elsewhere");
    REQUIRE(c.points.size() == 1);
    CHECK(c.points[0].x == 4.0);
}

TEST_CASE("experiment: price-bvp artifacts and exit codes") {
    const auto dir = scratch("price");
    const auto cfg_path = dir.string() + ".ini";
    {
        std::ofstream os(cfg_path);
        os << "[problem]\ntype=parabolic_bvp\nid=discount\ng=constant:1\nT=1\n[mc]\nn_paths=1000\ndt=0.01\n"
              "[points]\nlist=0,0,0.09\n[output]\ndir="
           << dir.string() << "\n";
    }
    std::ostringstream log, err;
    CHECK(run_guarded(Subcommand::PriceBvp, cfg_path, {}, log, err) == kExitOk);
    CHECK(log.str().find("discount t=0 x=0 y=0.09 mean=0.9512294245") != std::string::npos);
    const std::string csv = read_file(dir / "results.csv");
    CHECK(csv.rfind("problem_id,t,x,y,mean,std_error,n,bias_bound\n", 0) == 0);
    CHECK(csv.find("discount,0,0,0.089999999999999997,0.95122942450071") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "summary.json"));
    CHECK(std::filesystem::exists(dir / "meta.json"));
    CHECK(read_file(dir / "summary.json").find("\"schema\": \"heston-fk/summary/1\"") != std::string::npos);

    // Rerun with a different worker count: identical CSV.
    Overrides o;
    o.workers = 3;
    std::ostringstream log2;
    REQUIRE(run_guarded(Subcommand::PriceBvp, cfg_path, o, log2, err) == kExitOk);
    CHECK(read_file(dir / "results.csv") == csv);

    CHECK(run_guarded(Subcommand::PriceObstacle, cfg_path, {}, log, err) == kExitConfigError);
    CHECK(run_guarded(Subcommand::PriceBvp, "/nonexistent.ini", {}, log, err) == kExitConfigError);
    o = {};
    o.points = {{0.0, 0.0, -1.0}};
    CHECK(run_guarded(Subcommand::PriceBvp, cfg_path, o, log, err) == kExitConfigError);
    {
        std::ofstream os(cfg_path);
        os << "[problem]\ntype=parabolic_bvp\ng=constant:1\nT=1\n[mc]\nn_paths=10\ndt=1e-9\nstep_cap=100\n"
              "[points]\nlist=0,0,0.09\n[output]\ndir="
           << dir.string() << "\n";
    }
    CHECK(run_guarded(Subcommand::PriceBvp, cfg_path, {}, log, err) == kExitNumerical);
    std::filesystem::remove(cfg_path);
    std::filesystem::remove_all(dir);
}

TEST_CASE("experiment: oracle-pde and compare on a discount problem") {
    const auto dir = scratch("compare");
    ExperimentConfig c = parse_config("[problem]\ntype=parabolic_bvp\nid=disc\ng=constant:1\nT=1\n"
                                      "[mc]\nn_paths=2000\ndt=0.01\n[pde]\nnx=21\nny=11\nnt=20\n"
                                      "[points]\nlist=0,0,0.09\n");
    c.out_dir = dir.string();
    validate_config(c);
    std::ostringstream log;
    CHECK(run_subcommand(Subcommand::OraclePde, c, log) == kExitOk);
    CHECK(std::filesystem::exists(dir / "field.csv"));
    CHECK(read_file(dir / "grid.json").find("\"nx\":21") != std::string::npos);
    CHECK(run_subcommand(Subcommand::Compare, c, log) == kExitOk);
    CHECK(read_file(dir / "report.xml").find("failures=\"0\"") != std::string::npos);
    CHECK(read_file(dir / "comparison.csv").find("mc_vs_pde,0,0,") != std::string::npos);
    c.compare_cf = true;
    CHECK_THROWS_AS(run_subcommand(Subcommand::Compare, c, log), ConfigError);
    std::filesystem::remove_all(dir);
}
