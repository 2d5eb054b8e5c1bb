#include "heston/domain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace heston {

std::string_view to_string(PointClass c) {
    switch (c) {
    case PointClass::Interior: return "interior";
    case PointClass::Gamma0: return "gamma0";
    case PointClass::Gamma1: return "gamma1";
    case PointClass::Exterior: return "exterior";
    }
    return "unknown";
}

std::string_view to_string(StoppingRule r) { return r == StoppingRule::Tau ? "tau" : "nu"; }

std::string_view to_string(BoundaryConditionMode m) {
    return m == BoundaryConditionMode::Gamma1Only ? "gamma1_only" : "full_boundary";
}

StoppingRule parse_rule(std::string_view s) {
    if (s == "tau") return StoppingRule::Tau;
    if (s == "nu") return StoppingRule::Nu;
    throw ParameterError("unknown stopping rule '" + std::string(s) + "'");
}

BoundaryConditionMode parse_mode(std::string_view s) {
    if (s == "gamma1_only") return BoundaryConditionMode::Gamma1Only;
    if (s == "full_boundary") return BoundaryConditionMode::FullBoundary;
    throw ParameterError("unknown boundary mode '" + std::string(s) + "'");
}

Domain Domain::rectangle(double x0, double x1, double y1) {
    if (std::isnan(x0) || std::isnan(x1) || std::isnan(y1) || !(x0 < x1) || !(y1 > 0.0))
        throw ParameterError("rectangle needs x0 < x1 and y1 > 0");
    Domain d;
    d.shape_ = Shape::Rectangle;
    d.x0_ = x0;
    d.x1_ = x1;
    d.y1_ = y1;
    return d;
}

Domain Domain::half_plane() { return Domain{}; }

Domain Domain::custom(Membership inside, Classifier classifier) {
    if (!inside || !classifier) throw ParameterError("custom domain needs a predicate and a classifier");
    Domain d;
    d.shape_ = Shape::Custom;
    d.inside_ = std::move(inside);
    d.classifier_ = std::move(classifier);
    return d;
}

PointClass Domain::classify(double x, double y) const {
    if (y < -kBoundaryTol) throw ParameterError("point lies below the half-plane");
    switch (shape_) {
    case Shape::HalfPlane: return y <= kBoundaryTol ? PointClass::Gamma0 : PointClass::Interior;
    case Shape::Rectangle: {
        if (x < x0_ - kBoundaryTol || x > x1_ + kBoundaryTol || y > y1_ + kBoundaryTol) return PointClass::Exterior;
        const bool lateral =
            std::abs(x - x0_) <= kBoundaryTol || std::abs(x - x1_) <= kBoundaryTol || std::abs(y - y1_) <= kBoundaryTol;
        if (lateral) return PointClass::Gamma1;
        return y <= kBoundaryTol ? PointClass::Gamma0 : PointClass::Interior;
    }
    case Shape::Custom: {
        const PointClass c = classifier_(x, y);
        const bool in = inside_(x, y);
        if (in && c != PointClass::Interior)
            throw ParameterError("custom domain: point is inside O but classified as " + std::string(to_string(c)));
        if (!in && c == PointClass::Interior)
            throw ParameterError("custom domain: point is outside O but classified as interior");
        return c;
    }
    }
    return PointClass::Exterior;
}

PointClass classify_point(const Domain& d, double x, double y) { return d.classify(x, y); }

namespace {

// Fraction of the way from a to b where the coordinate reaches `level` (a on the inside).
double crossing(double a, double b, double level) {
    if (a == b) return 0.0;
    const double s = (a - level) / (a - b);
    return std::clamp(s, 0.0, 1.0);
}

} // namespace

std::optional<ExitEvent> detect_exit(const Domain& d, StoppingRule rule, const PathState& pre,
                                     const PathState& post) {
    const double dt = post.t - pre.t;
    auto at = [&](double s, ExitPortion portion) {
        ExitEvent e;
        e.time = pre.t + s * dt;
        e.x = pre.x + s * (post.x - pre.x);
        e.y = pre.y + s * (post.y - pre.y);
        e.portion = portion;
        return e;
    };

    switch (d.shape_) {
    case Domain::Shape::HalfPlane: {
        if (rule == StoppingRule::Tau && post.y <= 0.0) {
            ExitEvent e = at(crossing(pre.y, post.y, 0.0), ExitPortion::Gamma0);
            e.y = 0.0;
            return e;
        }
        return std::nullopt;
    }
    case Domain::Shape::Rectangle: {
        double best = 2.0;
        int edge = -1; // 0: x0, 1: x1, 2: y1, 3: y = 0
        auto consider = [&](double s, int which) {
            if (s < best) {
                best = s;
                edge = which;
            }
        };
        if (post.x <= d.x0_) consider(crossing(pre.x, post.x, d.x0_), 0);
        if (post.x >= d.x1_) consider(crossing(pre.x, post.x, d.x1_), 1);
        if (post.y >= d.y1_) consider(crossing(pre.y, post.y, d.y1_), 2);
        if (rule == StoppingRule::Tau && post.y <= 0.0) consider(crossing(pre.y, post.y, 0.0), 3);
        if (edge < 0) return std::nullopt;
        ExitEvent e = at(best, ExitPortion::Gamma1);
        switch (edge) {
        case 0: e.x = d.x0_; break;
        case 1: e.x = d.x1_; break;
        case 2: e.y = d.y1_; break;
        default: e.y = 0.0; break;
        }
        if (e.y < 0.0) e.y = 0.0;
        if (edge == 3 && d.classify(e.x, 0.0) == PointClass::Gamma0) e.portion = ExitPortion::Gamma0;
        return e;
    }
    case Domain::Shape::Custom: {
        auto stops = [&](double x, double y) {
            if (y <= 0.0) {
                if (rule == StoppingRule::Tau) return true;
                const PointClass c = d.classifier_(x, 0.0);
                return c == PointClass::Gamma1 || c == PointClass::Exterior;
            }
            return !d.inside_(x, y);
        };
        if (!stops(post.x, post.y)) return std::nullopt;
        double lo = 0.0;
        double hi = 1.0;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (stops(pre.x + mid * (post.x - pre.x), pre.y + mid * (post.y - pre.y)))
                hi = mid;
            else
                lo = mid;
        }
        ExitEvent e = at(hi, ExitPortion::Gamma1);
        if (e.y <= kBoundaryTol) {
            e.y = 0.0;
            e.portion = d.classifier_(e.x, 0.0) == PointClass::Gamma0 ? ExitPortion::Gamma0 : ExitPortion::Gamma1;
        }
        return e;
    }
    }
    return std::nullopt;
}

bool stopping_equivalence(const FellerIndices& idx) { return idx.beta >= 1.0; }

BoundaryConditionMode default_mode(const FellerIndices& idx) {
    return idx.beta >= 1.0 ? BoundaryConditionMode::Gamma1Only : BoundaryConditionMode::FullBoundary;
}

StoppingRule default_rule(BoundaryConditionMode mode) {
    return mode == BoundaryConditionMode::Gamma1Only ? StoppingRule::Nu : StoppingRule::Tau;
}

bool on_locus(PointClass c, BoundaryConditionMode mode) {
    if (c == PointClass::Gamma1) return true;
    return c == PointClass::Gamma0 && mode == BoundaryConditionMode::FullBoundary;
}

} // namespace heston
