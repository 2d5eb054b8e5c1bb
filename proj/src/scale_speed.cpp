#include "heston/scale_speed.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace heston {
namespace {

constexpr double kRelTol = 1e-10;
constexpr unsigned kMaxDepth = 18;
// Outer integrals of nested quadratures: the inner rounding noise stops the
// error estimate from reaching kRelTol, so cap the refinement.
constexpr unsigned kOuterDepth = 8;
constexpr double kOuterTol = 1e-9;
// Partial integrals are measured relative to the first slab [x/e, x].
constexpr double kDivergenceThreshold = 1e6;

template <class F>
double integrate(F&& f, double a, double b, const char* what, unsigned depth = kMaxDepth, double tol = kRelTol) {
    if (a == b) return 0.0;
    double error = 0.0;
    double l1 = 0.0;
    double value = 0.0;
    if (std::isfinite(a) && std::isfinite(b)) {
        // Mapped onto [0, 1]: on very short intervals the error control would otherwise refine to full depth.
        const double w = b - a;
        auto unit = [&](double s) { return w * f(a + w * s); };
        value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(unit, 0.0, 1.0, depth, tol, &error, &l1);
    } else {
        value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, depth, tol, &error, &l1);
    }
    if (!std::isfinite(value) || error > 1e-7 * std::max(1.0, l1)) {
        std::ostringstream os;
        os << "quadrature did not converge for " << what << " on [" << a << ", " << b << "], error estimate "
           << error;
        throw NumericalError(os.str());
    }
    return value;
}

} // namespace

ScaleSpeed::ScaleSpeed(const HestonParams& p) : ScaleSpeed(feller_indices(p), p.sigma) {}

ScaleSpeed::ScaleSpeed(const FellerIndices& idx, double sigma)
    : beta_(idx.beta), mu_(idx.mu), sigma2_(sigma * sigma) {
    if (!(beta_ > 0.0) || !(mu_ > 0.0) || !(sigma2_ > 0.0)) throw ParameterError("invalid Feller indices");
}

double ScaleSpeed::scale_density(double y) const { return std::pow(y, -beta_) * std::exp(mu_ * y); }

double ScaleSpeed::speed_density(double y) const {
    return 2.0 / sigma2_ * std::pow(y, beta_ - 1.0) * std::exp(-mu_ * y);
}

double ScaleSpeed::scale(double a, double b) const {
    if (a > b) throw ParameterError("scale integral requires a <= b");
    if (a < 0.0) throw ParameterError("scale integral requires a >= 0");
    // Log variable y = e^u removes the power-law stiffness near small a.
    auto log_body = [this](double u) { return std::exp((1.0 - beta_) * u + mu_ * std::exp(u)); };
    if (a > 0.0) return integrate(log_body, std::log(a), std::log(b), "scale density");
    if (beta_ >= 1.0) return std::numeric_limits<double>::infinity();
    // S(0, a0] with w = y^{1 - beta}: the y^{-beta} singularity becomes a constant factor.
    const double a0 = std::min(b, 1.0 / mu_);
    const double e = 1.0 - beta_;
    auto power_body = [this, e](double w) { return std::exp(mu_ * std::pow(w, 1.0 / e)) / e; };
    const double head = integrate(power_body, 0.0, std::pow(a0, e), "scale density near 0");
    return head + (a0 < b ? integrate(log_body, std::log(a0), std::log(b), "scale density") : 0.0);
}

double ScaleSpeed::speed(double a, double b) const {
    if (a > b) throw ParameterError("speed integral requires a <= b");
    if (a < 0.0) throw ParameterError("speed integral requires a >= 0");
    const double k = 2.0 / sigma2_;
    auto log_body = [this, k](double u) { return k * std::exp(beta_ * u - mu_ * std::exp(u)); };
    if (a > 0.0) return integrate(log_body, std::log(a), std::log(b), "speed density");
    const double a0 = std::min(b, 1.0 / mu_);
    auto power_body = [this, k](double w) { return k / beta_ * std::exp(-mu_ * std::pow(w, 1.0 / beta_)); };
    const double head = integrate(power_body, 0.0, std::pow(a0, beta_), "speed density near 0");
    return head + (a0 < b ? integrate(log_body, std::log(a0), std::log(b), "speed density") : 0.0);
}

double ScaleSpeed::green_upper(double lo, double hi, double b) const {
    if (!(lo <= hi && hi <= b)) throw ParameterError("green_upper requires lo <= hi <= b");
    auto body = [this, b](double u) {
        const double z = std::exp(u);
        if (!(z > 0.0)) return 0.0;
        return scale(z, b) * speed_density(z) * z;
    };
    const double ulo = lo > 0.0 ? std::log(lo) : -std::numeric_limits<double>::infinity();
    return integrate(body, ulo, std::log(hi), "speed-weighted upper scale", kOuterDepth, kOuterTol);
}

double ScaleSpeed::green_lower(double a, double lo, double hi) const {
    if (!(a <= lo && lo <= hi)) throw ParameterError("green_lower requires a <= lo <= hi");
    if (a == 0.0 && beta_ >= 1.0) return std::numeric_limits<double>::infinity();
    auto body = [this, a](double u) {
        const double z = std::exp(u);
        if (!(z > 0.0)) return 0.0;
        return scale(a, z) * speed_density(z) * z;
    };
    const double ulo = lo > 0.0 ? std::log(lo) : -std::numeric_limits<double>::infinity();
    return integrate(body, ulo, std::log(hi), "speed-weighted lower scale", kOuterDepth, kOuterTol);
}

BoundaryCertificate classify_boundary(const FellerIndices& idx, double sigma, double x) {
    if (!(idx.beta > 0.0) || !(idx.mu > 0.0)) throw ParameterError("invalid Feller indices");
    if (!(x > 0.0)) throw ParameterError("certificate window must have x > 0");
    const ScaleSpeed ss(idx, sigma);

    BoundaryCertificate cert{};
    cert.kind = idx.beta >= 1.0 ? BoundaryClass::Entrance : BoundaryClass::RegularReflecting;
    cert.x = x;

    // Partial integrals S[eps, x] in the variable L = -log(eps), accumulated slab by slab.
    auto log_body = [&](double u) { return std::exp((1.0 - idx.beta) * u + idx.mu * std::exp(u)); };
    const double ux = std::log(x);
    double lower = ux;
    double partial = 0.0;
    double first = 0.0;
    for (int k = 0; k < 64; ++k) {
        const double next = ux - std::ldexp(1.0, k);
        const double increment = integrate(log_body, next, lower, "partial scale integral");
        partial += increment;
        lower = next;
        cert.log_eps.push_back(-next);
        cert.partials.push_back(partial);
        if (k == 0) first = partial;
        if (partial > kDivergenceThreshold * first) break;
        if (increment <= 1e-14 * partial) break;
    }
    bool monotone = true;
    for (std::size_t i = 1; i < cert.partials.size(); ++i) monotone = monotone && cert.partials[i] >= cert.partials[i - 1];
    cert.scale_diverges = monotone && cert.partials.back() > kDivergenceThreshold * first;
    cert.scale_integral = idx.beta < 1.0 ? ss.scale(0.0, x) : cert.partials.back();
    cert.speed_integral = ss.speed(0.0, x);
    cert.entrance_integral = ss.green_upper(0.0, x, x);
    return cert;
}

double hitting_probability(const HestonParams& p, double a, double b, double y) {
    if (!(a >= 0.0 && a < b)) throw ParameterError("hitting_probability requires 0 <= a < b");
    if (y < a || y > b) throw ParameterError("hitting_probability requires a <= y <= b");
    const ScaleSpeed ss(p);
    if (a == 0.0 && ss.beta() >= 1.0) return 1.0; // zero is not reached
    if (y == a) return 0.0;
    if (y == b) return 1.0;
    return ss.scale(a, y) / ss.scale(a, b);
}

double expected_exit_time(const HestonParams& p, double a, double b, double y) {
    if (!(a >= 0.0 && a < y && y < b)) throw ParameterError("expected_exit_time requires 0 <= a < y < b");
    const ScaleSpeed ss(p);
    if (a == 0.0 && ss.beta() >= 1.0) throw ParameterError("zero is inaccessible for beta >= 1; use a > 0");
    const double u = ss.scale(a, y) / ss.scale(a, b);
    return u * ss.green_upper(y, b, b) + (1.0 - u) * ss.green_lower(a, a, y);
}

} // namespace heston
