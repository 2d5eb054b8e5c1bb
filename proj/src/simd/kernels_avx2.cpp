// AVX2 variants of the path-simulation kernels. Compiled with -mavx2 only;
// must mirror kernels_scalar.cpp operation for operation.

#include "heston/simd/kernels.hpp"
#include "math_constants.hpp"

#include <immintrin.h>

namespace heston::simd {
namespace {

using namespace math_constants;

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline __m256d polevl5(__m256d x, const double* c) {
    __m256d r = _mm256_set1_pd(c[0]);
    for (int i = 1; i < 6; ++i) r = _mm256_add_pd(_mm256_mul_pd(r, x), _mm256_set1_pd(c[i]));
    return r;
}

inline __m256d p1evl5(__m256d x, const double* c) {
    __m256d r = _mm256_add_pd(x, _mm256_set1_pd(c[0]));
    for (int i = 1; i < 5; ++i) r = _mm256_add_pd(_mm256_mul_pd(r, x), _mm256_set1_pd(c[i]));
    return r;
}

inline __m256d log4(__m256d x) {
    const __m256i bits = _mm256_castpd_si256(x);
    const __m256i ebits = _mm256_or_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(kExpMagicBits));
    __m256d e = _mm256_sub_pd(_mm256_sub_pd(_mm256_castsi256_pd(ebits), _mm256_set1_pd(kExpMagic)),
                              _mm256_set1_pd(1022.0));
    const __m256i mbits =
        _mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(kMantissaMask)), _mm256_set1_epi64x(kHalfBits));
    __m256d m = _mm256_castsi256_pd(mbits);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d small = _mm256_cmp_pd(m, _mm256_set1_pd(kSqrtHalf), _CMP_LT_OQ);
    e = _mm256_sub_pd(e, _mm256_and_pd(small, one));
    const __m256d doubled = _mm256_sub_pd(_mm256_add_pd(m, m), one);
    const __m256d shifted = _mm256_sub_pd(m, one);
    m = _mm256_blendv_pd(shifted, doubled, small);

    __m256d z = _mm256_mul_pd(m, m);
    __m256d y = _mm256_mul_pd(m, _mm256_div_pd(_mm256_mul_pd(z, polevl5(m, kLogP)), p1evl5(m, kLogQ)));
    y = _mm256_sub_pd(y, _mm256_mul_pd(e, _mm256_set1_pd(kLn2Lo)));
    y = _mm256_sub_pd(y, _mm256_mul_pd(_mm256_set1_pd(0.5), z));
    z = _mm256_add_pd(m, y);
    z = _mm256_add_pd(z, _mm256_mul_pd(e, _mm256_set1_pd(kLn2Hi)));
    return z;
}

inline void sincos4(__m256d u, __m256d& s_out, __m256d& c_out) {
    const __m256d qd = _mm256_floor_pd(_mm256_add_pd(_mm256_mul_pd(_mm256_set1_pd(4.0), u), _mm256_set1_pd(0.5)));
    const __m256d f = _mm256_sub_pd(u, _mm256_mul_pd(_mm256_set1_pd(0.25), qd));
    const __m256d a = _mm256_mul_pd(f, _mm256_set1_pd(kTwoPi));
    const __m256d zz = _mm256_mul_pd(a, a);
    const __m256d s = _mm256_add_pd(a, _mm256_mul_pd(_mm256_mul_pd(a, zz), polevl5(zz, kSinCoef)));
    const __m256d c = _mm256_add_pd(_mm256_sub_pd(_mm256_set1_pd(1.0), _mm256_mul_pd(_mm256_set1_pd(0.5), zz)),
                                    _mm256_mul_pd(_mm256_mul_pd(zz, zz), polevl5(zz, kCosCoef)));
    const __m256d q1 = _mm256_cmp_pd(qd, _mm256_set1_pd(1.0), _CMP_EQ_OQ);
    const __m256d q2 = _mm256_cmp_pd(qd, _mm256_set1_pd(2.0), _CMP_EQ_OQ);
    const __m256d q3 = _mm256_cmp_pd(qd, _mm256_set1_pd(3.0), _CMP_EQ_OQ);
    const __m256d swap = _mm256_or_pd(q1, q3);
    const __m256d sign = _mm256_set1_pd(-0.0);
    const __m256d sneg = _mm256_and_pd(_mm256_or_pd(q2, q3), sign);
    const __m256d cneg = _mm256_and_pd(_mm256_or_pd(q1, q2), sign);
    s_out = _mm256_xor_pd(_mm256_blendv_pd(s, c, swap), sneg);
    c_out = _mm256_xor_pd(_mm256_blendv_pd(c, s, swap), cneg);
}

void normal_pairs(std::uint64_t seed, const std::uint64_t* path, const std::uint64_t* step, std::size_t n,
                  double* z1, double* z2) {
    std::uint32_t k0[10];
    std::uint32_t k1[10];
    k0[0] = static_cast<std::uint32_t>(seed);
    k1[0] = static_cast<std::uint32_t>(seed >> 32);
    for (int r = 1; r < 10; ++r) {
        k0[r] = k0[r - 1] + kW0;
        k1[r] = k1[r - 1] + kW1;
    }
    const __m256i lo_mask = _mm256_set1_epi64x(0xFFFFFFFFll);
    const __m256i m0 = _mm256_set1_epi64x(kM0);
    const __m256i m1 = _mm256_set1_epi64x(kM1);
    const __m256i one_bits = _mm256_set1_epi64x(kOneBits);
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d minus_two = _mm256_set1_pd(-2.0);

    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256i pv = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(path + i));
        const __m256i sv = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(step + i));
        __m256i c0 = _mm256_and_si256(sv, lo_mask);
        __m256i c1 = _mm256_setzero_si256();
        __m256i c2 = _mm256_and_si256(pv, lo_mask);
        __m256i c3 = _mm256_srli_epi64(pv, 32);
        for (int r = 0; r < 10; ++r) {
            const __m256i p0 = _mm256_mul_epu32(c0, m0);
            const __m256i p1 = _mm256_mul_epu32(c2, m1);
            const __m256i hi0 = _mm256_srli_epi64(p0, 32);
            const __m256i lo0 = _mm256_and_si256(p0, lo_mask);
            const __m256i hi1 = _mm256_srli_epi64(p1, 32);
            const __m256i lo1 = _mm256_and_si256(p1, lo_mask);
            const __m256i n0 = _mm256_xor_si256(_mm256_xor_si256(hi1, c1), _mm256_set1_epi64x(k0[r]));
            const __m256i n2 = _mm256_xor_si256(_mm256_xor_si256(hi0, c3), _mm256_set1_epi64x(k1[r]));
            c0 = n0;
            c1 = lo1;
            c2 = n2;
            c3 = lo0;
        }
        const __m256i b1 = _mm256_srli_epi64(_mm256_or_si256(_mm256_slli_epi64(c1, 32), c0), 12);
        const __m256i b2 = _mm256_srli_epi64(_mm256_or_si256(_mm256_slli_epi64(c3, 32), c2), 12);
        const __m256d u1 = _mm256_sub_pd(two, _mm256_castsi256_pd(_mm256_or_si256(b1, one_bits)));
        const __m256d u2 = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(b2, one_bits)), one);
        const __m256d radius = _mm256_sqrt_pd(_mm256_mul_pd(minus_two, log4(u1)));
        __m256d s;
        __m256d c;
        sincos4(u2, s, c);
        _mm256_storeu_pd(z1 + i, _mm256_mul_pd(radius, c));
        _mm256_storeu_pd(z2 + i, _mm256_mul_pd(radius, s));
    }
    if (i < n) scalar_kernels().normal_pairs(seed, path + i, step + i, n - i, z1 + i, z2 + i);
}

void euler_step(const StepCoefficients* cp, std::size_t n, double* x, double* y, const double* z1,
                const double* z2) {
    const StepCoefficients& c = *cp;
    const __m256d zero = _mm256_setzero_pd();
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d dt = _mm256_set1_pd(c.dt);
    const __m256d sqrt_dt = _mm256_set1_pd(c.sqrt_dt);
    const __m256d drift_x = _mm256_set1_pd(c.drift_x);
    const __m256d kappa = _mm256_set1_pd(c.kappa);
    const __m256d theta = _mm256_set1_pd(c.theta);
    const __m256d sigma = _mm256_set1_pd(c.sigma);
    const __m256d rho = _mm256_set1_pd(c.rho);
    const __m256d rho_bar = _mm256_set1_pd(c.rho_bar);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d yv = _mm256_loadu_pd(y + i);
        const __m256d a = _mm256_loadu_pd(z1 + i);
        const __m256d b = _mm256_loadu_pd(z2 + i);
        const __m256d yp = _mm256_max_pd(yv, zero);
        const __m256d vol = _mm256_mul_pd(_mm256_sqrt_pd(yp), sqrt_dt);
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d xn = _mm256_add_pd(
            _mm256_add_pd(xv, _mm256_mul_pd(_mm256_sub_pd(drift_x, _mm256_mul_pd(half, yp)), dt)),
            _mm256_mul_pd(vol, a));
        _mm256_storeu_pd(x + i, xn);
        const __m256d w = _mm256_add_pd(_mm256_mul_pd(rho, a), _mm256_mul_pd(rho_bar, b));
        __m256d yn = _mm256_add_pd(
            _mm256_add_pd(yv, _mm256_mul_pd(_mm256_mul_pd(kappa, _mm256_sub_pd(theta, yv)), dt)),
            _mm256_mul_pd(_mm256_mul_pd(sigma, vol), w));
        if (c.clip) yn = _mm256_max_pd(yn, zero);
        _mm256_storeu_pd(y + i, yn);
    }
    if (i < n) scalar_kernels().euler_step(cp, n - i, x + i, y + i, z1 + i, z2 + i);
}

void log_batch(const double* in, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, log4(_mm256_loadu_pd(in + i)));
    if (i < n) scalar_kernels().log(in + i, out + i, n - i);
}

void sincos_batch(const double* u, double* s, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d sv;
        __m256d cv;
        sincos4(_mm256_loadu_pd(u + i), sv, cv);
        _mm256_storeu_pd(s + i, sv);
        _mm256_storeu_pd(c + i, cv);
    }
    if (i < n) scalar_kernels().sincos_2pi(u + i, s + i, c + i, n - i);
}

constexpr KernelTable kAvx2Table{Isa::Avx2, "avx2", &normal_pairs, &euler_step, &log_batch, &sincos_batch};

} // namespace

const KernelTable* avx2_kernels_impl() { return &kAvx2Table; }

} // namespace heston::simd
