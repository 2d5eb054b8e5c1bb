#include "heston/cf_pricer.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace heston {

std::complex<double> heston_cf(const HestonParams& p, std::complex<double> u, double T, double x, double y) {
    using C = std::complex<double>;
    const C i(0.0, 1.0);
    const double s2 = p.sigma * p.sigma;
    const C a = p.kappa - p.rho * p.sigma * i * u;
    const C d = std::sqrt(a * a + s2 * (i * u + u * u));
    const C g = (a - d) / (a + d);
    const C e = std::exp(-d * T);
    const C big_c = (p.r - p.q) * i * u * T + p.kappa * p.theta / s2 * ((a - d) * T - 2.0 * std::log((1.0 - g * e) / (1.0 - g)));
    const C big_d = (a - d) / s2 * (1.0 - e) / (1.0 - g * e);
    return std::exp(big_c + big_d * y + i * u * x);
}

namespace {

double integrate_tail(const HestonParams& p, double K, double T, double x, double y, bool share_measure) {
    using C = std::complex<double>;
    const C i(0.0, 1.0);
    const double k = std::log(K);
    const C norm = share_measure ? heston_cf(p, -i, T, x, y) : C(1.0);
    auto body = [&](double u) {
        if (u == 0.0) u = 1e-12;
        const C arg = share_measure ? C(u, -1.0) : C(u, 0.0);
        const C v = std::exp(-i * u * k) * heston_cf(p, arg, T, x, y) / (i * u * norm);
        return v.real();
    };
    // The integrand decays like exp(-c u); integrate panels until they stop contributing.
    double v = 0.0;
    double lo = 0.0;
    for (double hi = 1.0; lo < 1e4; hi *= 4.0) {
        double error = 0.0;
        double l1 = 0.0;
        const double piece =
            boost::math::quadrature::gauss_kronrod<double, 61>::integrate(body, lo, hi, 15, 1e-13, &error, &l1);
        if (!std::isfinite(piece) || error > 1e-10 * std::max(1.0, l1)) {
            std::ostringstream os;
            os << "characteristic-function quadrature did not converge on [" << lo << ", " << hi << "], error "
               << error;
            throw NumericalError(os.str());
        }
        v += piece;
        lo = hi;
        if (l1 < 1e-15) break;
    }
    return 0.5 + v / M_PI;
}

} // namespace

double heston_call(const HestonParams& p, double K, double T, double x, double y) {
    p.validate();
    if (!(K > 0.0) || !(T > 0.0) || y < 0.0) throw ParameterError("call needs K > 0, T > 0, y >= 0");
    const double P1 = integrate_tail(p, K, T, x, y, true);
    const double P2 = integrate_tail(p, K, T, x, y, false);
    return std::exp(x - p.q * T) * P1 - K * std::exp(-p.r * T) * P2;
}

double heston_put(const HestonParams& p, double K, double T, double x, double y) {
    return heston_call(p, K, T, x, y) - std::exp(x - p.q * T) + K * std::exp(-p.r * T);
}

double black_scholes_put(double S, double K, double T, double r, double q, double vol) {
    const double sd = vol * std::sqrt(T);
    const double d1 = (std::log(S / K) + (r - q) * T) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    auto N = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    return K * std::exp(-r * T) * N(-d2) - S * std::exp(-q * T) * N(-d1);
}

} // namespace heston
