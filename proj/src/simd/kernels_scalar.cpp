#include "heston/rng.hpp"
#include "heston/simd/kernels.hpp"
#include "math_constants.hpp"

#include <bit>
#include <cmath>

namespace heston::simd {
namespace {

using namespace math_constants;

double polevl5(double x, const double* c) {
    double r = c[0];
    for (int i = 1; i < 6; ++i) r = r * x + c[i];
    return r;
}

double p1evl5(double x, const double* c) {
    double r = x + c[0];
    for (int i = 1; i < 5; ++i) r = r * x + c[i];
    return r;
}

double ref_log(double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    double e = std::bit_cast<double>((bits >> 52) | kExpMagicBits) - kExpMagic - 1022.0;
    double m = std::bit_cast<double>((bits & kMantissaMask) | kHalfBits);
    if (m < kSqrtHalf) {
        e = e - 1.0;
        m = (m + m) - 1.0;
    } else {
        e = e - 0.0;
        m = m - 1.0;
    }
    double z = m * m;
    double y = m * (z * polevl5(m, kLogP) / p1evl5(m, kLogQ));
    y = y - e * kLn2Lo;
    y = y - 0.5 * z;
    z = m + y;
    z = z + e * kLn2Hi;
    return z;
}

void ref_sincos_2pi(double u, double& s_out, double& c_out) {
    const double qd = std::floor(4.0 * u + 0.5);
    const double f = u - 0.25 * qd;
    const double a = f * kTwoPi;
    const double zz = a * a;
    const double s = a + a * zz * polevl5(zz, kSinCoef);
    const double c = 1.0 - 0.5 * zz + zz * zz * polevl5(zz, kCosCoef);
    const bool swap = qd == 1.0 || qd == 3.0;
    const bool sneg = qd == 2.0 || qd == 3.0;
    const bool cneg = qd == 1.0 || qd == 2.0;
    double so = swap ? c : s;
    double co = swap ? s : c;
    if (sneg) so = -so;
    if (cneg) co = -co;
    s_out = so;
    c_out = co;
}

void normal_pairs(std::uint64_t seed, const std::uint64_t* path, const std::uint64_t* step, std::size_t n,
                  double* z1, double* z2) {
    const PhiloxKey key = philox_key(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const PhiloxCounter w = philox4x32_10(brownian_counter(path[i], step[i]), key);
        const std::uint64_t b1 = ((std::uint64_t{w[1]} << 32) | w[0]) >> 12;
        const std::uint64_t b2 = ((std::uint64_t{w[3]} << 32) | w[2]) >> 12;
        const double u1 = 2.0 - std::bit_cast<double>(b1 | kOneBits);
        const double u2 = std::bit_cast<double>(b2 | kOneBits) - 1.0;
        const double radius = std::sqrt(-2.0 * ref_log(u1));
        double s = 0.0;
        double c = 0.0;
        ref_sincos_2pi(u2, s, c);
        z1[i] = radius * c;
        z2[i] = radius * s;
    }
}

void euler_step(const StepCoefficients* cp, std::size_t n, double* x, double* y, const double* z1,
                const double* z2) {
    const StepCoefficients& c = *cp;
    for (std::size_t i = 0; i < n; ++i) {
        const double yv = y[i];
        const double yp = yv > 0.0 ? yv : 0.0;
        const double vol = std::sqrt(yp) * c.sqrt_dt;
        x[i] = x[i] + (c.drift_x - 0.5 * yp) * c.dt + vol * z1[i];
        const double w = c.rho * z1[i] + c.rho_bar * z2[i];
        double yn = yv + c.kappa * (c.theta - yv) * c.dt + c.sigma * vol * w;
        if (c.clip) yn = yn > 0.0 ? yn : 0.0;
        y[i] = yn;
    }
}

void log_batch(const double* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = ref_log(in[i]);
}

void sincos_batch(const double* u, double* s, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) ref_sincos_2pi(u[i], s[i], c[i]);
}

constexpr KernelTable kScalarTable{Isa::Scalar, "scalar", &normal_pairs, &euler_step, &log_batch, &sincos_batch};

} // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

} // namespace heston::simd
