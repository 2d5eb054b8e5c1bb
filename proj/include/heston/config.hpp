#pragma once

#include "heston/diagnostics.hpp"
#include "heston/domain.hpp"
#include "heston/feynman_kac.hpp"
#include "heston/model.hpp"
#include "heston/optimal_stopping.hpp"
#include "heston/pde.hpp"
#include "heston/problem.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace heston {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ProblemType { EllipticBvp, ParabolicBvp, EllipticObstacle, ParabolicObstacle };

std::string_view to_string(ProblemType t);
ProblemType parse_problem_type(std::string_view s);

struct DomainSpec {
    Domain::Shape shape = Domain::Shape::HalfPlane;
    double x0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;
};

struct VerifySettings {
    std::uint64_t n_paths = 20000;
    std::uint64_t seed = 20240601;
};

struct SimulateSettings {
    std::uint64_t n_traces = 4;
    double horizon = 1.0;
};

// INI sections: [model] [problem] [domain] [mc] [pde] [lsmc] [region] [points]
// [compare] [verify] [simulate] [output]. Keys absent from the file take defaults.
struct ExperimentConfig {
    HestonParams params{2.0, 0.09, 0.6, -0.3, 0.05, 0.0};
    ProblemType type = ProblemType::ParabolicBvp;
    std::string id = "problem";
    std::string f;   // catalog spec, empty: no source
    std::string g = "zero";
    std::string psi; // catalog spec, required by obstacle problems
    std::optional<GrowthBound> growth; // empty: taken from the catalog
    double T = 1.0;
    DomainSpec domain;
    std::optional<BoundaryConditionMode> mode; // empty: from beta
    std::optional<StoppingRule> rule;          // empty: from the mode
    McSettings mc;
    Grid2D grid;
    PdeSettings pde;
    LsmcSettings lsmc;
    double T_tilde = 0.5;
    RegionIteration region;
    Grid2D region_grid{13, 7, -1.0, 1.0, 1.0};
    std::vector<QueryPoint> points;
    ComparisonTolerance tolerance;
    bool compare_cf = false;
    VerifySettings verify;
    SimulateSettings simulate;
    std::string out_dir = "out";

    BoundaryConditionMode resolved_mode() const;
    StoppingRule resolved_rule() const;
    bool elliptic() const { return type == ProblemType::EllipticBvp || type == ProblemType::EllipticObstacle; }
    bool obstacle() const { return type == ProblemType::EllipticObstacle || type == ProblemType::ParabolicObstacle; }
};

// Parse errors and unknown keys raise ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// Every key in a fixed order with shortest round-trip numbers; parse_config of
// the result gives back the same configuration.
std::string canonical_config(const ExperimentConfig& cfg);

// "t,x,y"
QueryPoint parse_point(std::string_view s);

Domain build_domain(const ExperimentConfig& cfg);
ProblemData build_data(const ExperimentConfig& cfg);
ParabolicProblem build_parabolic(const ExperimentConfig& cfg);

// Cross-checks at load: beta / boundary mode / stopping rule consistency, growth
// admissibility, psi <= g sampled on the locus, points inside the closed domain.
// Throws ConfigError naming the failed check.
void validate_config(const ExperimentConfig& cfg);

} // namespace heston
