#pragma once

#include "heston/model.hpp"
#include "heston/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace heston {

enum class Scheme { FullTruncation, Reflected, ExactCIRMarginal };

std::string_view to_string(Scheme s);
Scheme parse_scheme(std::string_view name);

inline constexpr std::size_t kDefaultStepCap = 10'000'000;

struct PathConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    Scheme scheme = Scheme::FullTruncation;
    std::uint64_t seed = 20240601;
    std::uint64_t path_index = 0;
    std::size_t step_cap = kDefaultStepCap;

    void validate() const;
    // Number of steps covering the horizon; throws NumericalError above step_cap.
    std::size_t steps() const;
};

struct PathState {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
};

// Increments of (W1, W2) over one step, each N(0, dt).
struct BrownianIncrement {
    double dw1 = 0.0;
    double dw2 = 0.0;
};

// Increment of step `step` on the path selected by cfg.path_index.
BrownianIncrement brownian_increment(const PathConfig& cfg, std::uint64_t step);

// One variance step driven by dw. ExactCIRMarginal ignores dw and draws from
// the transition law using the auxiliary stream of (seed, path_index, step).
double cir_step(const HestonParams& p, const PathState& state, double dw, const PathConfig& cfg,
                std::uint64_t step = 0);

// One (x, y) step. For the Euler schemes y is driven by rho dw1 + sqrt(1 - rho^2) dw2.
PathState heston_step(const HestonParams& p, const PathState& state, const BrownianIncrement& inc,
                      const PathConfig& cfg, std::uint64_t step = 0);

// Exact CIR transition over dt: y' = c * chi'^2_d(lambda) with d = 2 beta,
// c = sigma^2 (1 - e^{-kappa dt}) / (4 kappa), lambda = y e^{-kappa dt} / c.
double sample_cir_exact(const HestonParams& p, double y, double dt, PhiloxEngine& eng);

// Log-asset update paired with an exact variance draw; keeps the correlation
// through the integrated variance (trapezoidal in time).
double exact_scheme_x_update(const HestonParams& p, double x, double y, double y_next, double dt, double z);

enum class StepAction { Continue, Stop };
using PathObserver = std::function<StepAction(const PathState& pre, const PathState& post)>;

// Advances from `start` until the horizon or until the observer stops the path.
// Trace holds the start state followed by every completed step.
std::vector<PathState> simulate_path(const HestonParams& p, const PathState& start, const PathConfig& cfg,
                                     const PathObserver& observer = {});

// CSV columns: path,step,t,x,y
void write_trace_header(std::ostream& os);
void write_trace_csv(std::ostream& os, std::uint64_t path, const std::vector<PathState>& trace);

} // namespace heston
