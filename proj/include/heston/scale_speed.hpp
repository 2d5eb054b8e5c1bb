#pragma once

#include "heston/model.hpp"

#include <vector>

namespace heston {

// Scale and speed densities of the Feller square-root process:
//   s(y) = y^{-beta} e^{mu y},   m(y) = (2 / sigma^2) y^{beta - 1} e^{-mu y}.
class ScaleSpeed {
public:
    explicit ScaleSpeed(const HestonParams& p);
    ScaleSpeed(const FellerIndices& idx, double sigma);

    double beta() const { return beta_; }
    double mu() const { return mu_; }

    double scale_density(double y) const;
    double speed_density(double y) const;

    // S[a, b] for 0 < a <= b. a == 0 is accepted when beta < 1.
    double scale(double a, double b) const;
    // M[a, b]; a == 0 accepted for every beta > 0.
    double speed(double a, double b) const;

    // S[z, b] weighted by the speed density, integrated over z in [lo, hi].
    double green_upper(double lo, double hi, double b) const;
    // S[a, z] weighted by the speed density, integrated over z in [lo, hi].
    double green_lower(double a, double lo, double hi) const;

private:
    double beta_;
    double mu_;
    double sigma2_;
};

enum class BoundaryClass { Entrance, RegularReflecting };

struct BoundaryCertificate {
    BoundaryClass kind;
    double x;                     // right end of the certificate window (0, x]
    bool scale_diverges;          // S(0, x] = infinity
    double scale_integral;        // limit when finite, last partial value otherwise
    std::vector<double> log_eps;  // -log(eps) at each partial integral
    std::vector<double> partials; // S[eps, x]
    double speed_integral;        // M(0, x]
    double entrance_integral;     // N(0) = int_0^x S[y, x] m(y) dy
};

// Classification follows beta >= 1 (entrance) / beta < 1 (regular reflecting);
// the integrals are diagnostics.
BoundaryCertificate classify_boundary(const FellerIndices& idx, double sigma, double x = 1.0);

// P^y(T_b < T_a) = S[a, y] / S[a, b]. a == 0 accepted when beta < 1.
double hitting_probability(const HestonParams& p, double a, double b, double y);

// E^y[T_a ^ T_b] via the Green function of the scale and speed measure.
double expected_exit_time(const HestonParams& p, double a, double b, double y);

} // namespace heston
