#pragma once

#include <stdexcept>
#include <string>

namespace heston {

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Constant coefficients of the Heston generator.
//   -A v = y/2 (v_xx + 2 rho sigma v_xy + sigma^2 v_yy) + (r - q - y/2) v_x
//          + kappa (theta - y) v_y - r v
// r and q are unconstrained here; problem constructors add r > 0 / q >= 0.
struct HestonParams {
    double kappa = 1.0;  // mean reversion rate
    double theta = 0.04; // long-run variance
    double sigma = 0.3;  // vol of vol
    double rho = 0.0;    // correlation of W1 and the variance noise
    double r = 0.0;      // killing / discount rate
    double q = 0.0;      // dividend-like rate

    void validate() const;
};

struct FellerIndices {
    double beta; // 2 kappa theta / sigma^2
    double mu;   // 2 kappa / sigma^2
};

FellerIndices feller_indices(const HestonParams& p);

// |v(x, y)| <= C (1 + e^{M1 y} + e^{M2 x})
struct GrowthBound {
    double C = 1.0;
    double M1 = 0.0;
    double M2 = 0.0;

    double envelope(double x, double y) const;
};

enum class ProblemKind { Elliptic, Parabolic };

struct ValidationResult {
    bool ok = true;
    std::string message;

    explicit operator bool() const { return ok; }
    static ValidationResult pass() { return {}; }
    static ValidationResult fail(std::string why) { return {false, std::move(why)}; }
};

// Elliptic: 0 <= M1 < min{r/(kappa theta), mu}, M2 in [0, 1), r > 0.
// Parabolic: 0 <= M1 < mu, M2 in [0, 1].
ValidationResult validate_growth(const GrowthBound& g, const HestonParams& p, ProblemKind kind);

// Throws ParameterError carrying the failed inequality.
void require_growth(const GrowthBound& g, const HestonParams& p, ProblemKind kind);

struct PointDerivatives {
    double u = 0.0;
    double u_t = 0.0;
    double u_x = 0.0;
    double u_y = 0.0;
    double u_xx = 0.0;
    double u_xy = 0.0;
    double u_yy = 0.0;
};

// Returns A u at (x, y); A is minus the killed Heston generator.
double apply_generator(const HestonParams& p, const PointDerivatives& d, double x, double y);

} // namespace heston
