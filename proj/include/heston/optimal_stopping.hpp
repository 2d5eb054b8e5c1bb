#pragma once

#include "heston/domain.hpp"
#include "heston/estimate.hpp"
#include "heston/feynman_kac.hpp"
#include "heston/model.hpp"
#include "heston/pde.hpp"
#include "heston/problem.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace heston {

// [t, T] split into ceil((T - t) / T_tilde) equal slabs, so no slab is longer than T_tilde.
struct TimeSlabGrid {
    double T_tilde = 0.0;
    std::vector<double> knots;

    static TimeSlabGrid make(double t, double T, double T_tilde);
    std::size_t slabs() const { return knots.empty() ? 0 : knots.size() - 1; }
};

// Throws ParameterError if psi > g somewhere on a sampled part of the locus
// (terminal slice and, for rectangles, the lateral edges) near (x, y).
void check_compatibility(const ProblemData& data, const ParabolicProblem& prob, double x, double y);

struct LsmcSettings {
    std::uint64_t n_train = 50000;   // regression paths; the low estimate uses mc.n_paths fresh ones
    std::size_t dates_per_slab = 10; // exercise dates per slab, slab end included
    double ridge = 1e-8;             // relative to the mean diagonal of the normal matrix
    bool itm_only = true;            // regress and exercise only where psi > 0
};

// Regressed continuation values on the exercise dates of [t0, T].
// Basis: monomials of total degree <= 3 in standardized (x, y, psi).
struct RegressionPolicy {
    struct DateRule {
        double t = 0.0;
        std::array<double, 3> center{};
        std::array<double, 3> scale{1.0, 1.0, 1.0};
        std::vector<double> beta; // empty: never exercise on this date
    };

    double t0 = 0.0;
    double T = 0.0;
    double spacing = 0.0; // date spacing
    bool itm_only = true;
    double c0 = 0.0;      // continuation value at the start point
    std::vector<DateRule> dates; // dates 1 .. M-1; date M = T pays g

    static constexpr std::size_t kTerms = 20;

    double continuation(std::size_t date, double x, double y, double psi) const;
    // Stop on date k where psi >= continuation (psi > 0 as well when itm_only).
    // Date 0 compares against c0, so the rule belongs to the start point it was fitted for.
    StoppingPolicy as_policy(const ProblemData& data) const;

    std::string to_json() const;
    static RegressionPolicy from_json(std::string_view text);
};

struct ObstacleEstimate {
    Estimate low;  // fresh paths under the regressed policy
    Estimate high; // in-sample backward-induction value
    RegressionPolicy policy;
    TimeSlabGrid slabs;

    const Estimate& value() const { return low; }
};

// Least-squares backward induction over the exercise dates of the slab grid.
ObstacleEstimate value_obstacle_parabolic(const HestonParams& p, const ProblemData& data,
                                          const ParabolicProblem& prob, StoppingRule rule, const McSettings& mc,
                                          const TimeSlabGrid& grid, const LsmcSettings& ls, double t, double x,
                                          double y);

// Per-node mask on a grid; contains() looks up the nearest node and is false off the grid.
struct RegionMask {
    Grid2D grid;
    std::vector<std::uint8_t> mask;

    bool contains(double x, double y) const;
    std::size_t count() const;
    std::string to_json() const;
    static RegionMask from_json(std::string_view text);
};

void write_region_csv(std::ostream& os, const RegionMask& r);

struct RegionIteration {
    std::size_t max_sweeps = 50;
    // Stop where psi >= continuation - tolerance - band_sigma * std_error; near the
    // free boundary psi and the continuation value agree to within noise.
    double tolerance = 0.0;
    double band_sigma = 1.0;
    std::uint64_t final_paths = 0; // paths for the value under the settled region; 0: mc.n_paths
};

struct EllipticObstacleResult {
    Estimate value;
    RegionMask region; // exercise region
    std::size_t sweeps = 0;
};

// Exercise-region policy iteration on the nodes of `grid` that lie in the domain.
// Starts from {psi >= BVP value}; each sweep evaluates, at every node, the value of
// continuing under the current region with that node's cell removed, and stops
// where psi reaches it (up to the tie band).
// NumericalError when the region has not settled after max_sweeps.
EllipticObstacleResult value_obstacle_elliptic(const HestonParams& p, const ProblemData& data, const Domain& domain,
                                               StoppingRule rule, const McSettings& mc, const Grid2D& grid,
                                               double x, double y, const RegionIteration& it = {});

struct ContinuationRegion {
    RegionMask region;        // u > psi + tolerance
    std::size_t below_obstacle = 0; // nodes with u < psi - tolerance
};

ContinuationRegion continuation_region(const Field& value, const DataFn& psi, double tolerance);

// Moments of the exit time from the continuation region (capped at horizon).
Estimate continuation_exit_time(const HestonParams& p, const RegionMask& continuation, const McSettings& mc,
                                double horizon, double x, double y);

// The exercise boundary of a put-like active set: per y row, the largest x node
// that is active (NaN when the row has none).
std::vector<double> exercise_boundary(const Field& f);

// Single-pass policy value against the slab decomposition
//   F = 1{eta < T_k} F1 + 1{eta >= T_k} e^{-r(T_k - t)} F2
// where F2 is re-estimated with fresh paths from each state reached at T_k.
struct SlabIdentity {
    Estimate single;
    Estimate composed;
    double reach_fraction = 0.0; // share of paths alive at T_k
};

SlabIdentity check_slab_identity(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                                 StoppingRule rule, const McSettings& mc, const StoppingPolicy& policy, double t,
                                 double x, double y, double T_k, std::uint64_t inner_paths);

// Calibrated constant of the running-maximum tail bound
//   P(max_{[0,T]} Y >= m) <= 2/sqrt(pi) exp(-c m / (2 sigma^2 T)),
// fitted at the 0.9, 0.99 and 0.999 quantiles of simulated maxima and capped at 1.
struct MomentCalibration {
    std::uint64_t n_paths = 20000;
    std::size_t steps = 200;
    std::uint64_t seed = 7;
};

double calibrate_moment_constant(const HestonParams& p, double y, double T, const MomentCalibration& cal = {});

struct SlabCertificate {
    bool ok = false;
    double p0 = 0.0;
    double c = 0.0;
    double moment_bound = 0.0; // c / (2 sigma T_tilde)
    std::string binding;       // failed constraint, empty when ok
};

// Searches p0 > 1 with p0 M1 <= mu and p0 M2 < c / (2 sigma T_tilde).
SlabCertificate validate_slab_length(const HestonParams& p, const GrowthBound& growth, double T_tilde,
                                     double y, const MomentCalibration& cal = {});

// Largest T_tilde in [lo, hi] that validates, by bisection; lo when none does.
double slab_threshold(const HestonParams& p, const GrowthBound& growth, double y, double lo, double hi,
                      const MomentCalibration& cal = {});

} // namespace heston
