#pragma once

// Batched inner loops of the path simulator.
//
// Every kernel has a scalar reference implementation and, where the CPU
// supports it, an AVX2 variant. Variants are bit-identical: they evaluate the
// same polynomial approximations in the same operation order, and the project
// is compiled with -ffp-contract=off so no FMA contraction sneaks in.
//
// The ABI is deliberately plain (pointers + counts) so that the AVX2
// translation unit does not instantiate any inline code shared with the
// portable translation units.

#include <cstddef>
#include <cstdint>

namespace heston::simd {

enum class Isa { Scalar, Avx2 };

struct StepCoefficients {
    double dt;
    double sqrt_dt;
    double drift_x; // r - q
    double kappa;
    double theta;
    double sigma;
    double rho;
    double rho_bar; // sqrt(1 - rho^2)
    int clip;       // 1: full truncation (y' := max(y', 0)); 0: reflected coefficients
};

struct KernelTable {
    Isa isa;
    const char* name;
    // Standard normal pairs for counters (path[i], step[i]) under `seed`.
    void (*normal_pairs)(std::uint64_t seed, const std::uint64_t* path, const std::uint64_t* step, std::size_t n,
                         double* z1, double* z2);
    // One Euler step of (x, y) per lane; z1 drives X, z2 the orthogonal part of Y.
    void (*euler_step)(const StepCoefficients* c, std::size_t n, double* x, double* y, const double* z1,
                       const double* z2);
    // Natural log of positive normal doubles.
    void (*log)(const double* in, double* out, std::size_t n);
    // sin(2 pi u), cos(2 pi u) for u in [0, 1).
    void (*sincos_2pi)(const double* u, double* s, double* c, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_kernels();
bool cpu_supports_avx2();

// Active table: AVX2 when available, unless HESTON_SIMD=scalar is set.
const KernelTable& kernels();
// Throws std::runtime_error when the ISA is unavailable on this machine.
void select_isa(Isa isa);

} // namespace heston::simd
