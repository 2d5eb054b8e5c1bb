#include "doctest.h"

#include "heston/rng.hpp"
#include "heston/simd/kernels.hpp"

#include <cmath>
#include <cstring>
#include <vector>

using namespace heston;

TEST_CASE("philox4x32-10 known answers") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("engine uniforms stay in (0, 1]") {
    PhiloxEngine eng(7, 3, 11);
    for (int i = 0; i < 10000; ++i) {
        const double u = eng.uniform_open0();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
    }
}

TEST_CASE("reference log and sincos track libm") {
    const auto& k = simd::scalar_kernels();
    std::vector<double> in;
    for (int i = 1; i <= 20000; ++i) in.push_back(std::ldexp(static_cast<double>(i) / 20000.0, (i % 41) - 20));
    in.push_back(1.0);
    in.push_back(0x1.0p-53);
    std::vector<double> out(in.size());
    k.log(in.data(), out.data(), in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double ref = std::log(in[i]);
        CHECK(std::abs(out[i] - ref) <= 4e-16 * std::max(1.0, std::abs(ref)));
    }
    std::vector<double> u;
    for (int i = 0; i < 20000; ++i) u.push_back(static_cast<double>(i) / 20000.0);
    std::vector<double> s(u.size());
    std::vector<double> c(u.size());
    k.sincos_2pi(u.data(), s.data(), c.data(), u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(std::abs(s[i] - std::sin(2.0 * M_PI * u[i])) < 1e-15);
        CHECK(std::abs(c[i] - std::cos(2.0 * M_PI * u[i])) < 1e-15);
    }
}

TEST_CASE("normals have unit variance and no correlation") {
    const std::size_t n = 200000;
    std::vector<std::uint64_t> path(n);
    std::vector<std::uint64_t> step(n, 5);
    for (std::size_t i = 0; i < n; ++i) path[i] = i;
    std::vector<double> z1(n);
    std::vector<double> z2(n);
    simd::scalar_kernels().normal_pairs(99, path.data(), step.data(), n, z1.data(), z2.data());
    double m1 = 0, m2 = 0, v1 = 0, v2 = 0, c12 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        m1 += z1[i];
        m2 += z2[i];
        v1 += z1[i] * z1[i];
        v2 += z2[i] * z2[i];
        c12 += z1[i] * z2[i];
    }
    const double dn = static_cast<double>(n);
    CHECK(std::abs(m1 / dn) < 3.0 / std::sqrt(dn) * 1.5);
    CHECK(std::abs(m2 / dn) < 3.0 / std::sqrt(dn) * 1.5);
    CHECK(std::abs(v1 / dn - 1.0) < 3.0 * std::sqrt(2.0 / dn) * 1.5);
    CHECK(std::abs(v2 / dn - 1.0) < 3.0 * std::sqrt(2.0 / dn) * 1.5);
    CHECK(std::abs(c12 / dn) < 3.0 / std::sqrt(dn) * 1.5);
}

TEST_CASE("avx2 kernels are bit-identical to the scalar reference") {
    const simd::KernelTable* avx = simd::avx2_kernels();
    if (avx == nullptr || !simd::cpu_supports_avx2()) {
        MESSAGE("AVX2 unavailable; equivalence not exercised");
        return;
    }
    const auto& ref = simd::scalar_kernels();
    const std::size_t n = 4099;
    std::vector<std::uint64_t> path(n);
    std::vector<std::uint64_t> step(n);
    for (std::size_t i = 0; i < n; ++i) {
        path[i] = i * 0x9E3779B97F4A7C15ull;
        step[i] = i * 7 + (i >> 3);
    }
    for (std::uint64_t seed : {0ull, 1ull, 0xDEADBEEFCAFEBABEull}) {
        std::vector<double> a1(n), a2(n), b1(n), b2(n);
        ref.normal_pairs(seed, path.data(), step.data(), n, a1.data(), a2.data());
        avx->normal_pairs(seed, path.data(), step.data(), n, b1.data(), b2.data());
        CHECK(std::memcmp(a1.data(), b1.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(a2.data(), b2.data(), n * sizeof(double)) == 0);

        for (int clip : {0, 1}) {
            const simd::StepCoefficients c{1e-3, std::sqrt(1e-3), 0.03, 2.0, 0.09, 0.6, -0.3,
                                           std::sqrt(1 - 0.09), clip};
            std::vector<double> xa(n), ya(n);
            for (std::size_t i = 0; i < n; ++i) {
                xa[i] = 0.01 * static_cast<double>(i % 17);
                ya[i] = 0.001 * static_cast<double>(i % 13) - 0.002;
            }
            std::vector<double> xb = xa, yb = ya;
            ref.euler_step(&c, n, xa.data(), ya.data(), a1.data(), a2.data());
            avx->euler_step(&c, n, xb.data(), yb.data(), a1.data(), a2.data());
            CHECK(std::memcmp(xa.data(), xb.data(), n * sizeof(double)) == 0);
            CHECK(std::memcmp(ya.data(), yb.data(), n * sizeof(double)) == 0);
        }
    }
    std::vector<double> in(n), la(n), lb(n), sa(n), sb(n), ca(n), cb(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    ref.log(in.data(), la.data(), n);
    avx->log(in.data(), lb.data(), n);
    ref.sincos_2pi(in.data(), sa.data(), ca.data(), n);
    avx->sincos_2pi(in.data(), sb.data(), cb.data(), n);
    CHECK(std::memcmp(la.data(), lb.data(), n * sizeof(double)) == 0);
    CHECK(std::memcmp(sa.data(), sb.data(), n * sizeof(double)) == 0);
    CHECK(std::memcmp(ca.data(), cb.data(), n * sizeof(double)) == 0);
}
