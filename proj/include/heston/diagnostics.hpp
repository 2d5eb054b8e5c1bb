#pragma once

#include "heston/domain.hpp"
#include "heston/estimate.hpp"
#include "heston/feynman_kac.hpp"
#include "heston/model.hpp"
#include "heston/optimal_stopping.hpp"
#include "heston/pde.hpp"
#include "heston/problem.hpp"
#include "heston/sde.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace heston {

struct StatTestReport {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;
    std::string detail;
};

struct DiagnosticRun {
    std::uint64_t n_paths = 100000;
    std::uint64_t seed = 20240601;
    unsigned workers = 1;
};

// Observation times horizon * j / points, j = 0..points, with `substeps` steps between them.
struct TimeGrid {
    double horizon = 1.0;
    std::size_t points = 10;
    std::size_t substeps = 10;

    void validate() const;
    double dt() const { return horizon / static_cast<double>(points * substeps); }
};

struct GridMeans {
    std::vector<double> times;
    std::vector<double> mean;
    std::vector<double> std_error;
    // z_j = (m_{j+1} - m_j) / sqrt(se_j^2 + se_{j+1}^2)
    std::vector<double> increment_z;
};

struct SupermartingaleResult {
    StatTestReport report; // statistic: max_j z_j, pass iff <= 3
    GridMeans means;
    double max_abs_z = 0.0; // two-sided view for the martingale cases
};

// m(s) = E[e^{-r c s} e^{c X(s)}] under `scheme`, X(0) = x0, Y(0) = y0.
SupermartingaleResult supermartingale_test_X(const HestonParams& p, double c, const TimeGrid& grid,
                                             const DiagnosticRun& run, double x0, double y0,
                                             Scheme scheme = Scheme::FullTruncation);

// m(s) = E[e^{-c kappa theta s} e^{c Y(s)}] on exact CIR transitions.
// c > mu is accepted so the negative control can be run; only 0 < c is required.
SupermartingaleResult supermartingale_test_Y(const HestonParams& p, double c, const TimeGrid& grid,
                                             const DiagnosticRun& run, double y0);

// Probability that a CIR path from y0 that ends at y1 after h touched 0 in between
// (squared-Bessel bridge through the time change of the exact transition); 0 when beta >= 1.
double cir_zero_bridge_probability(const HestonParams& p, double y0, double y1, double h);

struct HitTally {
    double y0 = 0.0;
    double dt = 0.0;
    Scheme scheme = Scheme::FullTruncation;
    std::uint64_t n_paths = 0;
    std::uint64_t hits = 0; // paths with a step ending at y <= 0 before truncation
    double frequency() const { return n_paths ? static_cast<double>(hits) / static_cast<double>(n_paths) : 0.0; }
};

HitTally zero_hit_frequency(const HestonParams& p, double y0, Scheme scheme, double dt, double horizon,
                            const DiagnosticRun& run);

// First exit of Y from (a, b) started at y. Level crossings inside a step are
// detected with bridge probabilities: the squared-Bessel bridge at a = 0 on
// exact transitions, the Brownian bridge with frozen local volatility elsewhere.
// With a = 0 and an Euler scheme only steps ending at y <= 0 count.
struct LevelExit {
    Estimate upper;         // indicator of T_b < T_a
    Estimate time;          // T_a ^ T_b, capped at the horizon
    std::uint64_t censored = 0;
};

struct LevelExitSettings {
    Scheme scheme = Scheme::FullTruncation;
    double dt = 1e-3;
    double horizon = 1000.0;
    bool bridge = true;
};

LevelExit level_exit_mc(const HestonParams& p, double a, double b, double y, const LevelExitSettings& s,
                        const DiagnosticRun& run);

struct ZeroTime {
    double y0 = 0.0;
    LevelExit exit;
};

struct BoundaryHitReport {
    std::vector<HitTally> tallies;     // one per (y0, scheme, dt)
    std::vector<ZeroTime> zero_times;  // beta < 1 only, one per y0
    std::vector<StatTestReport> checks;
};

struct BoundaryHitSettings {
    std::vector<double> y0 = {0.1, 0.01, 0.001};
    std::vector<double> dt = {1e-2, 1e-3, 1e-4}; // Euler refinement levels
    std::vector<double> exact_dt = {1e-2};
    double horizon = 1.0;
    // For beta < 1: dt of the first-passage runs to 0 (no upper level) and the
    // pre-registered bound on the last mean.
    double zero_time_dt = 1e-3;
    double zero_time_horizon = 1000.0;
    double final_mean_limit = 0.05;
};

// beta >= 1: exact-scheme hits must be 0 and Euler hit frequencies nonincreasing in dt.
// beta < 1: mean T_0 decreasing in y0 (3 sigma steps) and the last mean below the limit.
BoundaryHitReport boundary_hit_stats(const HestonParams& p, const BoundaryHitSettings& s, const DiagnosticRun& run);

struct OccupationLevel {
    double dt = 0.0;
    double fraction = 0.0; // steps ending at y <= 0 over all steps
};

struct OccupationResult {
    StatTestReport report; // statistic: fraction at the finest dt
    std::vector<OccupationLevel> levels;
};

OccupationResult occupation_time_zero_test(const HestonParams& p, double y0, double horizon,
                                           const std::vector<double>& dt_levels, Scheme scheme,
                                           const DiagnosticRun& run, double threshold = 1e-3);

// Members named "t=<s>" for deterministic times T j / deterministic_times and
// "hit=<level>" for first passages of X through x0 + offset, each capped at T.
struct StoppingFamily {
    std::size_t deterministic_times = 4;
    std::vector<double> x_offsets = {-0.2, -0.1, 0.1, 0.2};
};

struct MomentBoundResult {
    StatTestReport report; // statistic: envelope / e^{p x0}, pass iff <= limit
    std::vector<std::string> members;
    std::vector<Estimate> means;
    double envelope = 0.0;     // max over members of mean + 3 se
    double c = 0.0;            // calibrated moment constant
    double bound = 0.0;        // c / (2 sigma T)
    bool within_bound = false; // p_exp < bound
};

MomentBoundResult moment_bound_test(const HestonParams& p, double x0, double y0, double T, double p_exp,
                                    const StoppingFamily& family, const DiagnosticRun& run, double dt = 1e-2,
                                    double limit = 10.0, const MomentCalibration& cal = {});

struct ComparisonPoint {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    Estimate mc;
    double oracle = 0.0;
    double z = 0.0;   // |mc - oracle| / se
    double rel = 0.0; // |mc - oracle| / |oracle|
    bool pass = false;
};

struct ComparisonTolerance {
    double z = 3.0;
    double rel = 0.01;
};

// Pass iff |mc - oracle| <= max(z se, rel |oracle|).
ComparisonPoint compare_point(double t, double x, double y, const Estimate& mc, double oracle,
                              const ComparisonTolerance& tol);

struct ComparisonTable {
    std::string label;
    std::vector<ComparisonPoint> rows;
    bool pass() const;
};

struct QueryPoint {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
};

ComparisonTable mc_vs_pde(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                          StoppingRule rule, const McSettings& mc, const Grid2D& grid, const PdeSettings& pde,
                          const std::vector<QueryPoint>& points, const ComparisonTolerance& tol = {});

ComparisonTable mc_vs_pde(const HestonParams& p, const ProblemData& data, const Domain& domain, StoppingRule rule,
                          BoundaryConditionMode mode, const McSettings& mc, const Grid2D& grid,
                          const PdeSettings& pde, const std::vector<QueryPoint>& points,
                          const ComparisonTolerance& tol = {});

// CSV: name,statistic,threshold,pass,n_samples,seed,detail
void write_reports_csv(std::ostream& os, const std::vector<StatTestReport>& reports);
void write_junit_xml(std::ostream& os, const std::string& suite, const std::vector<StatTestReport>& reports);
// CSV: label,t,x,y,mc,std_error,n,oracle,z,rel,pass
void write_comparison_csv(std::ostream& os, const std::vector<ComparisonTable>& tables);

} // namespace heston
