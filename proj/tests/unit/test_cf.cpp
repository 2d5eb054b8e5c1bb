#include "doctest.h"

#include "heston/cf_pricer.hpp"

#include <cmath>

using namespace heston;

namespace {
const HestonParams kP{2.0, 0.09, 0.6, -0.3, 0.05, 0.0};
}

TEST_CASE("characteristic function basics") {
    const auto one = heston_cf(kP, {0.0, 0.0}, 1.0, std::log(100.0), 0.09);
    CHECK(std::abs(one - std::complex<double>(1.0, 0.0)) < 1e-14);
    // E[e^{X(T)}] is the forward.
    const auto fwd = heston_cf(kP, {0.0, -1.0}, 1.0, std::log(100.0), 0.09);
    CHECK(fwd.real() == doctest::Approx(100.0 * std::exp(kP.r - kP.q)).epsilon(1e-10));
    CHECK(std::abs(fwd.imag()) < 1e-9);
}

TEST_CASE("frozen European put prices") {
    CHECK(heston_put(kP, 100, 1, std::log(90.0), 0.09) == doctest::Approx(13.038561481836).epsilon(1e-9));
    CHECK(heston_put(kP, 100, 1, std::log(100.0), 0.09) == doctest::Approx(8.882521).epsilon(1e-6));
    CHECK(heston_put(kP, 100, 1, std::log(110.0), 0.09) == doctest::Approx(6.086311).epsilon(1e-6));
}

TEST_CASE("put-call parity") {
    const HestonParams p{1.5, 0.04, 0.5, -0.7, 0.03, 0.01};
    for (double S : {70.0, 100.0, 140.0}) {
        const double c = heston_call(p, 100, 0.5, std::log(S), 0.06);
        const double put = heston_put(p, 100, 0.5, std::log(S), 0.06);
        CHECK(c - put == doctest::Approx(S * std::exp(-0.01 * 0.5) - 100 * std::exp(-0.03 * 0.5)).epsilon(1e-10));
        CHECK(c > 0.0);
        CHECK(put > 0.0);
    }
}

TEST_CASE("small vol-of-vol approaches Black-Scholes with integrated variance") {
    HestonParams p{1.0, 0.04, 0.01, 0.0, 0.02, 0.0};
    const double y = 0.09, T = 1.0;
    const double iv = p.theta + (y - p.theta) * (1.0 - std::exp(-p.kappa * T)) / (p.kappa * T);
    for (double S : {90.0, 100.0, 110.0}) {
        const double h = heston_put(p, 100, T, std::log(S), y);
        const double bs = black_scholes_put(S, 100, T, p.r, p.q, std::sqrt(iv));
        CHECK(std::abs(h - bs) / bs < 1e-3);
    }
}

TEST_CASE("Black-Scholes put reference") {
    // S = K = 100, T = 1, r = 5%, 20% vol
    CHECK(black_scholes_put(100, 100, 1, 0.05, 0.0, 0.2) == doctest::Approx(5.573526022256971).epsilon(1e-12));
}
