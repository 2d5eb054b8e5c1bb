#include "heston/sde.hpp"

#include "heston/simd/kernels.hpp"
#include "heston/detail/stepping.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace heston {

std::string_view to_string(Scheme s) {
    switch (s) {
    case Scheme::FullTruncation: return "full_truncation";
    case Scheme::Reflected: return "reflected";
    case Scheme::ExactCIRMarginal: return "exact_cir";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name) {
    if (name == "full_truncation") return Scheme::FullTruncation;
    if (name == "reflected") return Scheme::Reflected;
    if (name == "exact_cir") return Scheme::ExactCIRMarginal;
    throw ParameterError("unknown scheme '" + std::string(name) + "'");
}

void PathConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("dt must be positive");
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ParameterError("horizon must be finite and >= 0");
    if (step_cap == 0) throw ParameterError("step cap must be positive");
}

std::size_t PathConfig::steps() const {
    validate();
    const double n = std::ceil(horizon / dt - 1e-9);
    if (n > static_cast<double>(step_cap)) {
        std::ostringstream os;
        os << "horizon " << horizon << " at dt " << dt << " needs " << n << " steps, above the cap " << step_cap;
        throw NumericalError(os.str());
    }
    return n > 0.0 ? static_cast<std::size_t>(n) : 0;
}

namespace detail {

simd::StepCoefficients step_coefficients(const HestonParams& p, Scheme scheme, double dt) {
    return {dt,
            std::sqrt(dt),
            p.r - p.q,
            p.kappa,
            p.theta,
            p.sigma,
            p.rho,
            std::sqrt(1.0 - p.rho * p.rho),
            scheme == Scheme::Reflected ? 0 : 1};
}

} // namespace detail

BrownianIncrement brownian_increment(const PathConfig& cfg, std::uint64_t step) {
    double z1 = 0.0;
    double z2 = 0.0;
    simd::kernels().normal_pairs(cfg.seed, &cfg.path_index, &step, 1, &z1, &z2);
    const double s = std::sqrt(cfg.dt);
    return {s * z1, s * z2};
}

double cir_step(const HestonParams& p, const PathState& state, double dw, const PathConfig& cfg,
                std::uint64_t step) {
    cfg.validate();
    if (cfg.scheme == Scheme::ExactCIRMarginal) {
        if (state.y < 0.0) throw ParameterError("exact CIR step requires y >= 0");
        PhiloxEngine eng(cfg.seed, cfg.path_index, step);
        return sample_cir_exact(p, state.y, cfg.dt, eng);
    }
    if (cfg.scheme == Scheme::FullTruncation && state.y < 0.0)
        throw ParameterError("full truncation step requires y >= 0");
    const double yp = state.y > 0.0 ? state.y : 0.0;
    const double next = state.y + p.kappa * (p.theta - state.y) * cfg.dt + p.sigma * std::sqrt(yp) * dw;
    if (cfg.scheme == Scheme::FullTruncation) return next > 0.0 ? next : 0.0;
    return next;
}

PathState heston_step(const HestonParams& p, const PathState& state, const BrownianIncrement& inc,
                      const PathConfig& cfg, std::uint64_t step) {
    cfg.validate();
    PathState out;
    out.t = state.t + cfg.dt;
    if (cfg.scheme == Scheme::ExactCIRMarginal) {
        out.y = cir_step(p, state, 0.0, cfg, step);
        out.x = exact_scheme_x_update(p, state.x, state.y, out.y, cfg.dt, inc.dw1 / std::sqrt(cfg.dt));
        return out;
    }
    const double yp = state.y > 0.0 ? state.y : 0.0;
    out.x = state.x + (p.r - p.q - 0.5 * yp) * cfg.dt + std::sqrt(yp) * inc.dw1;
    const double dwy = p.rho * inc.dw1 + std::sqrt(1.0 - p.rho * p.rho) * inc.dw2;
    out.y = cir_step(p, state, dwy, cfg, step);
    return out;
}

double sample_cir_exact(const HestonParams& p, double y, double dt, PhiloxEngine& eng) {
    const double s2 = p.sigma * p.sigma;
    const double one_minus_e = -std::expm1(-p.kappa * dt);
    const double c = s2 * one_minus_e / (4.0 * p.kappa);
    const double d = 4.0 * p.kappa * p.theta / s2;
    const double lambda = y * std::exp(-p.kappa * dt) / c;
    double chi = 0.0;
    if (d >= 1.0) {
        // chi'^2_d(lambda) = (Z + sqrt(lambda))^2 + chi^2_{d-1}
        const double u1 = eng.uniform_open0();
        const double u2 = eng.uniform_open0();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        const double shifted = z + std::sqrt(lambda);
        chi = shifted * shifted;
        if (d > 1.0) chi += 2.0 * std::gamma_distribution<double>(0.5 * (d - 1.0), 1.0)(eng);
    } else {
        // Poisson mixture of central chi-squares with d + 2N degrees of freedom
        long n = 0;
        if (lambda > 0.0) n = std::poisson_distribution<long>(0.5 * lambda)(eng);
        chi = 2.0 * std::gamma_distribution<double>(0.5 * d + static_cast<double>(n), 1.0)(eng);
    }
    return c * chi;
}

double exact_scheme_x_update(const HestonParams& p, double x, double y, double y_next, double dt, double z) {
    const double integrated = 0.5 * (y + y_next) * dt;
    const double rho_bar = std::sqrt(1.0 - p.rho * p.rho);
    const double variance_noise = y_next - y - p.kappa * p.theta * dt + p.kappa * integrated;
    return x + (p.r - p.q) * dt - 0.5 * integrated + p.rho / p.sigma * variance_noise +
           rho_bar * std::sqrt(integrated) * z;
}

std::vector<PathState> simulate_path(const HestonParams& p, const PathState& start, const PathConfig& cfg,
                                     const PathObserver& observer) {
    p.validate();
    if (start.y < 0.0) throw ParameterError("start state must lie in the closed half-plane");
    const std::size_t n = cfg.steps();
    const simd::StepCoefficients coef = detail::step_coefficients(p, cfg.scheme, cfg.dt);
    std::vector<PathState> trace;
    trace.reserve(n + 1);
    trace.push_back(start);
    PathState cur = start;
    for (std::size_t k = 0; k < n; ++k) {
        PathState next = cur;
        detail::advance_one(p, cfg.scheme, coef, cfg.seed, cfg.path_index, k, next.x, next.y);
        next.t = start.t + static_cast<double>(k + 1) * cfg.dt;
        trace.push_back(next);
        if (observer && observer(cur, next) == StepAction::Stop) break;
        cur = next;
    }
    return trace;
}

void write_trace_header(std::ostream& os) { os << "path,step,t,x,y\n"; }

void write_trace_csv(std::ostream& os, std::uint64_t path, const std::vector<PathState>& trace) {
    std::ostringstream line;
    line << std::setprecision(17);
    for (std::size_t k = 0; k < trace.size(); ++k)
        line << path << ',' << k << ',' << trace[k].t << ',' << trace[k].x << ',' << trace[k].y << '\n';
    os << line.str();
}

} // namespace heston
