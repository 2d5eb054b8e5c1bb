#pragma once

#include "heston/model.hpp"
#include "heston/rng.hpp"
#include "heston/sde.hpp"
#include "heston/simd/kernels.hpp"

#include <cstddef>
#include <cstdint>

namespace heston::detail {

simd::StepCoefficients step_coefficients(const HestonParams& p, Scheme scheme, double dt);

// Advances n lanes by one step. Lane i is path path[i] at step index step[i].
// z1/z2 are scratch buffers of length n.
inline void advance_lanes(const HestonParams& p, Scheme scheme, const simd::StepCoefficients& coef,
                          std::uint64_t seed, const std::uint64_t* path, const std::uint64_t* step, std::size_t n,
                          double* x, double* y, double* z1, double* z2) {
    const simd::KernelTable& k = simd::kernels();
    k.normal_pairs(seed, path, step, n, z1, z2);
    if (scheme != Scheme::ExactCIRMarginal) {
        k.euler_step(&coef, n, x, y, z1, z2);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        PhiloxEngine eng(seed, path[i], step[i]);
        const double y_next = sample_cir_exact(p, y[i], coef.dt, eng);
        x[i] = exact_scheme_x_update(p, x[i], y[i], y_next, coef.dt, z1[i]);
        y[i] = y_next;
    }
}

inline void advance_one(const HestonParams& p, Scheme scheme, const simd::StepCoefficients& coef,
                        std::uint64_t seed, std::uint64_t path, std::uint64_t step, double& x, double& y) {
    double z1 = 0.0;
    double z2 = 0.0;
    advance_lanes(p, scheme, coef, seed, &path, &step, 1, &x, &y, &z1, &z2);
}

} // namespace heston::detail
