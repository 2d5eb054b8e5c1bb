#pragma once

#include "heston/estimate.hpp"
#include "heston/model.hpp"
#include "heston/sde.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace heston {

enum class PointClass { Interior, Gamma0, Gamma1, Exterior };

enum class StoppingRule {
    Tau, // first exit from O, Gamma0 contact included
    Nu,  // first exit through Gamma1 only; the path may sit on Gamma0 and re-enter
};

// Where boundary data is imposed: Gamma1 only (entrance boundary) or all of dO.
enum class BoundaryConditionMode { Gamma1Only, FullBoundary };

std::string_view to_string(PointClass c);
std::string_view to_string(StoppingRule r);
std::string_view to_string(BoundaryConditionMode m);
StoppingRule parse_rule(std::string_view s);
BoundaryConditionMode parse_mode(std::string_view s);

inline constexpr double kBoundaryTol = 1e-12;

struct ExitEvent {
    double time = 0.0;
    double x = 0.0;
    double y = 0.0;
    ExitPortion portion = ExitPortion::Gamma1;
};

class Domain {
public:
    enum class Shape { Rectangle, HalfPlane, Custom };
    using Membership = std::function<bool(double x, double y)>;
    using Classifier = std::function<PointClass(double x, double y)>;

    // (x0, x1) x (0, y1); infinite edges allowed.
    static Domain rectangle(double x0, double x1, double y1);
    static Domain half_plane();
    // `inside` is the membership of O; `classifier` labels points of the closed
    // half-plane. Exit location along a step is found by bisection on `inside`.
    static Domain custom(Membership inside, Classifier classifier);

    Shape shape() const { return shape_; }
    double x0() const { return x0_; }
    double x1() const { return x1_; }
    double y1() const { return y1_; }
    // Gamma1 empty or unbounded in a way no finite path detects (tau = infinity).
    bool gamma1_empty() const { return shape_ == Shape::HalfPlane; }

    PointClass classify(double x, double y) const;

private:
    Shape shape_ = Shape::HalfPlane;
    double x0_ = -std::numeric_limits<double>::infinity();
    double x1_ = std::numeric_limits<double>::infinity();
    double y1_ = std::numeric_limits<double>::infinity();
    Membership inside_;
    Classifier classifier_;

    friend std::optional<ExitEvent> detect_exit(const Domain&, StoppingRule, const PathState&, const PathState&);
};

// Corners of a rectangle on y = 0 count as Gamma1.
PointClass classify_point(const Domain& d, double x, double y);

// First crossing of the stopping locus along the linear segment pre -> post.
// Under Tau, post.y <= 0 is Gamma0 contact.
std::optional<ExitEvent> detect_exit(const Domain& d, StoppingRule rule, const PathState& pre,
                                     const PathState& post);

// tau = nu almost surely iff beta >= 1.
bool stopping_equivalence(const FellerIndices& idx);

BoundaryConditionMode default_mode(const FellerIndices& idx);
StoppingRule default_rule(BoundaryConditionMode mode);

// Whether data is imposed at a point of the given class.
bool on_locus(PointClass c, BoundaryConditionMode mode);

} // namespace heston
