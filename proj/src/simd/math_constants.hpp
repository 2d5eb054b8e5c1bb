#pragma once

// Constants shared by the scalar and AVX2 kernels. Only constexpr data lives
// here; no inline functions, so both translation units can include it.
// Polynomial coefficients are the Cephes double-precision minimax sets.

#include <cstdint>

namespace heston::simd::math_constants {

inline constexpr std::uint64_t kOneBits = 0x3FF0000000000000ull;
inline constexpr std::uint64_t kHalfBits = 0x3FE0000000000000ull;
inline constexpr std::uint64_t kMantissaMask = 0x000FFFFFFFFFFFFFull;
inline constexpr std::uint64_t kExpMagicBits = 0x4330000000000000ull;
inline constexpr double kExpMagic = 4503599627370496.0; // 2^52

inline constexpr double kSqrtHalf = 0.70710678118654752440;
inline constexpr double kLn2Hi = 0.693359375;
inline constexpr double kLn2Lo = 2.121944400546905827679e-4;
inline constexpr double kTwoPi = 6.283185307179586476925;

// log(1 + x) ~ x - x^2/2 + x^3 P(x)/Q(x) on [sqrt(1/2) - 1, sqrt(2) - 1]
inline constexpr double kLogP[6] = {1.01875663804580931796E-4, 4.97494994976747001425E-1,
                                    4.70579119878881725854E0,  1.44989225341610930846E1,
                                    1.79368678507819816313E1,  7.70838733755885391666E0};
inline constexpr double kLogQ[5] = {1.12873587189167450590E1, 4.52279145837532221105E1, 8.29875266912776603211E1,
                                    7.11544750618563894466E1, 2.31251620126765340583E1};

// sin and cos on [-pi/4, pi/4]
inline constexpr double kSinCoef[6] = {1.58962301576546568060E-10, -2.50507477628578072866E-8,
                                       2.75573136213857245213E-6,  -1.98412698295895385996E-4,
                                       8.33333333332211858878E-3,  -1.66666666666666307295E-1};
inline constexpr double kCosCoef[6] = {-1.13585365213876817300E-11, 2.08757008419747316778E-9,
                                       -2.75573141792967388112E-7,  2.48015872888517045348E-5,
                                       -1.38888888888730564116E-3,  4.16666666666665929218E-2};

} // namespace heston::simd::math_constants
