#include "heston/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace heston {

void HestonParams::validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(kappa) || !finite(theta) || !finite(sigma) || !finite(rho) || !finite(r) || !finite(q))
        throw ParameterError("Heston parameters must be finite");
    if (sigma == 0.0) throw ParameterError("sigma must be nonzero");
    if (!(rho > -1.0 && rho < 1.0)) throw ParameterError("rho must lie in (-1, 1)");
    if (!(kappa > 0.0)) throw ParameterError("kappa must be positive");
    if (!(theta > 0.0)) throw ParameterError("theta must be positive");
}

FellerIndices feller_indices(const HestonParams& p) {
    p.validate();
    const double s2 = p.sigma * p.sigma;
    return {2.0 * p.kappa * p.theta / s2, 2.0 * p.kappa / s2};
}

double GrowthBound::envelope(double x, double y) const {
    return C * (1.0 + std::exp(M1 * y) + std::exp(M2 * x));
}

ValidationResult validate_growth(const GrowthBound& g, const HestonParams& p, ProblemKind kind) {
    const FellerIndices idx = feller_indices(p);
    std::ostringstream why;
    if (!(g.C > 0.0)) {
        why << "growth constant C=" << g.C << " must be positive";
        return ValidationResult::fail(why.str());
    }
    if (!(g.M1 >= 0.0)) {
        why << "M1=" << g.M1 << " must be nonnegative";
        return ValidationResult::fail(why.str());
    }
    if (!(g.M2 >= 0.0)) {
        why << "M2=" << g.M2 << " must be nonnegative";
        return ValidationResult::fail(why.str());
    }
    if (kind == ProblemKind::Elliptic) {
        if (!(p.r > 0.0)) {
            why << "elliptic problems require r > 0 (r=" << p.r << ")";
            return ValidationResult::fail(why.str());
        }
        const double killing_cap = p.r / (p.kappa * p.theta);
        if (!(g.M1 < killing_cap)) {
            why << "M1=" << g.M1 << " must be < r/(kappa theta)=" << killing_cap;
            return ValidationResult::fail(why.str());
        }
        if (!(g.M1 < idx.mu)) {
            why << "M1=" << g.M1 << " must be < mu=" << idx.mu;
            return ValidationResult::fail(why.str());
        }
        if (!(g.M2 < 1.0)) {
            why << "M2=" << g.M2 << " must be < 1 for elliptic problems";
            return ValidationResult::fail(why.str());
        }
    } else {
        if (!(g.M1 < idx.mu)) {
            why << "M1=" << g.M1 << " must be < mu=" << idx.mu;
            return ValidationResult::fail(why.str());
        }
        if (!(g.M2 <= 1.0)) {
            why << "M2=" << g.M2 << " must be <= 1 for parabolic problems";
            return ValidationResult::fail(why.str());
        }
    }
    return ValidationResult::pass();
}

void require_growth(const GrowthBound& g, const HestonParams& p, ProblemKind kind) {
    if (auto res = validate_growth(g, p, kind); !res) throw ParameterError("growth violation: " + res.message);
}

double apply_generator(const HestonParams& p, const PointDerivatives& d, double /*x*/, double y) {
    if (y < 0.0) throw ParameterError("apply_generator requires y >= 0");
    const double second = d.u_xx + 2.0 * p.rho * p.sigma * d.u_xy + p.sigma * p.sigma * d.u_yy;
    return p.r * d.u - 0.5 * y * second - (p.r - p.q - 0.5 * y) * d.u_x - p.kappa * (p.theta - y) * d.u_y;
}

} // namespace heston
