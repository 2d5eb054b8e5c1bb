#pragma once

#include "heston/domain.hpp"
#include "heston/estimate.hpp"
#include "heston/model.hpp"
#include "heston/problem.hpp"
#include "heston/sde.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace heston {

struct McSettings {
    std::uint64_t n_paths = 10000;
    double dt = 1e-3;
    Scheme scheme = Scheme::FullTruncation;
    std::uint64_t seed = 20240601;
    std::uint64_t first_path = 0;
    unsigned workers = 1;
    // Elliptic horizon. 0 picks the smallest T_max whose tail bound is below
    // 0.1 * target_std_error.
    double T_max = 0.0;
    double target_std_error = 1e-3;
    std::size_t step_cap = kDefaultStepCap;
};

struct ParabolicProblem {
    Domain domain = Domain::half_plane();
    double T = 1.0;
    BoundaryConditionMode mode = BoundaryConditionMode::Gamma1Only;
};

// A state-dependent stopping rule, queried at t0 and after each completed step
// that did not exit. Returning true stops the path and pays psi.
using StoppingPolicy = std::function<bool(double t, double x, double y)>;

// Tail of the elliptic representation dropped beyond T:
//   C (e^{-rT}/r + e^{M1 y - (r - M1 kappa theta) T}/(r - M1 kappa theta) + e^{M2 x - r(1-M2)T}/(r(1-M2)))  [source]
// + C (e^{-rT} + e^{M1 y - (r - M1 kappa theta) T} + e^{M2 x - r(1-M2)T})                                    [data]
// The source term is included only when the problem has a source.
double elliptic_tail_bound(const HestonParams& p, const GrowthBound& g, bool with_source, double T, double x,
                           double y);

// Smallest T (to 1e-3 relative) with elliptic_tail_bound <= target.
double elliptic_horizon(const HestonParams& p, const GrowthBound& g, bool with_source, double x, double y,
                        double target);

// Per-path samples behind an Estimate, kept for paired comparisons.
struct PathSamples {
    std::vector<double> values;
    std::vector<ExitPortion> portion;
    std::vector<double> stop_time;
    double dt_used = 0.0;
    double horizon = 0.0;
};

Estimate to_estimate(const PathSamples& s);

PathSamples sample_elliptic(const HestonParams& p, const ProblemData& data, const Domain& domain, StoppingRule rule,
                            const McSettings& mc, double x, double y, const StoppingPolicy& policy = {});

PathSamples sample_parabolic(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                             StoppingRule rule, const McSettings& mc, double t, double x, double y,
                             const StoppingPolicy& policy = {});

// E[e^{-r tau} g(Z(tau)) 1{tau < infinity}] + E[int_0^tau e^{-rs} f(Z(s)) ds].
Estimate estimate_elliptic_bvp(const HestonParams& p, const ProblemData& data, const Domain& domain,
                               StoppingRule rule, const McSettings& mc, double x, double y);

// Same with tau ^ T and terminal data g(T, .).
Estimate estimate_parabolic_bvp(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                                StoppingRule rule, const McSettings& mc, double t, double x, double y);

// J_e for the stopping time theta defined by `policy` (empty: never stop).
Estimate evaluate_J_e(const HestonParams& p, const ProblemData& data, const Domain& domain,
                      const StoppingPolicy& policy, StoppingRule rule, const McSettings& mc, double x, double y);

// J_p with theta capped at T; at T and at exits g takes precedence over psi.
Estimate evaluate_J_p(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                      const StoppingPolicy& policy, StoppingRule rule, const McSettings& mc, double t, double x,
                      double y);

} // namespace heston
