#include "heston/feynman_kac.hpp"

#include "heston/batch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace heston {

double elliptic_tail_bound(const HestonParams& p, const GrowthBound& g, bool with_source, double T, double x,
                           double y) {
    const double r = p.r;
    const double ry = r - g.M1 * p.kappa * p.theta;
    const double rx = r * (1.0 - g.M2);
    if (!(r > 0.0) || !(ry > 0.0) || !(rx > 0.0)) return std::numeric_limits<double>::infinity();
    const double a = std::exp(-r * T);
    const double b = std::exp(g.M1 * y - ry * T);
    const double c = std::exp(g.M2 * x - rx * T);
    double bound = g.C * (a + b + c);
    if (with_source) bound += g.C * (a / r + b / ry + c / rx);
    return bound;
}

double elliptic_horizon(const HestonParams& p, const GrowthBound& g, bool with_source, double x, double y,
                        double target) {
    if (!(target > 0.0)) throw ParameterError("target tail bound must be positive");
    if (!std::isfinite(elliptic_tail_bound(p, g, with_source, 0.0, x, y)))
        throw ParameterError("elliptic tail bound needs r > 0, r > M1 kappa theta and M2 < 1");
    double hi = 1.0;
    while (elliptic_tail_bound(p, g, with_source, hi, x, y) > target) {
        hi *= 2.0;
        if (hi > 1e12) throw NumericalError("elliptic horizon diverges");
    }
    double lo = 0.0;
    while (hi - lo > 1e-3 * hi) {
        const double mid = 0.5 * (lo + hi);
        if (elliptic_tail_bound(p, g, with_source, mid, x, y) > target)
            lo = mid;
        else
            hi = mid;
    }
    return hi;
}

Estimate to_estimate(const PathSamples& s) {
    Estimate e = summarize(s.values);
    for (ExitPortion q : s.portion) ++e.exits[static_cast<std::size_t>(q)];
    return e;
}

namespace {

struct Job {
    const HestonParams* p;
    const ProblemData* data;
    const Domain* domain;
    StoppingRule rule;
    const StoppingPolicy* policy;
    double t0;
    double dt;
    std::size_t steps;
    bool parabolic;
    double T; // terminal time when parabolic
};

double eval(const DataFn& fn, double t, double x, double y) { return fn ? fn(t, x, std::max(y, 0.0)) : 0.0; }

// Discount-weighted step integral: int_0^h e^{-rs} ds.
double step_weight(double r, double h) { return r == 0.0 ? h : -std::expm1(-r * h) / r; }

class Handler {
public:
    Handler(const Job& job, PathSamples& out, std::uint64_t first) : job_(job), out_(out), first_(first) {
        full_weight_ = step_weight(job.p->r, job.dt);
        full_decay_ = std::exp(-job.p->r * job.dt);
    }

    bool begin(std::size_t lane, std::uint64_t path, const PathState& s0) {
        Lane& l = lanes_[lane];
        l.idx = path - first_;
        l.disc = 1.0;
        l.integral = 0.0;
        l.f_prev = eval(job_.data->f, s0.t, s0.x, s0.y);
        return true;
    }

    bool step(std::size_t lane, const PathState& pre, const PathState& post, std::size_t k) {
        Lane& l = lanes_[lane];
        const ProblemData& d = *job_.data;
        const double r = job_.p->r;
        if (const auto ev = detect_exit(*job_.domain, job_.rule, pre, post)) {
            const double h = ev->time - pre.t;
            if (d.f) l.integral += l.disc * step_weight(r, h) * 0.5 * (l.f_prev + eval(d.f, ev->time, ev->x, ev->y));
            finish(l, l.integral + discount(ev->time) * eval(d.g, ev->time, ev->x, ev->y), ev->portion, ev->time);
            return false;
        }
        if (d.f) {
            const double f_post = eval(d.f, post.t, post.x, post.y);
            l.integral += l.disc * full_weight_ * 0.5 * (l.f_prev + f_post);
            l.f_prev = f_post;
        }
        l.disc *= full_decay_;
        if (job_.policy != nullptr && *job_.policy && !(job_.parabolic && k >= job_.steps)) {
            if ((*job_.policy)(post.t, post.x, std::max(post.y, 0.0))) {
                finish(l, l.integral + discount(post.t) * eval(d.psi, post.t, post.x, post.y), ExitPortion::Stopped,
                       post.t);
                return false;
            }
        }
        return true;
    }

    void horizon(std::size_t lane, const PathState& last) {
        Lane& l = lanes_[lane];
        if (job_.parabolic) {
            finish(l, l.integral + discount(job_.T) * eval(job_.data->g, job_.T, last.x, last.y), ExitPortion::Terminal,
                   job_.T);
        } else {
            finish(l, l.integral, ExitPortion::Horizon, last.t);
        }
    }

private:
    struct Lane {
        std::uint64_t idx = 0;
        double disc = 1.0;
        double integral = 0.0;
        double f_prev = 0.0;
    };

    // Payments use the closed form; the running product only weights the source integral.
    double discount(double t) const { return std::exp(-job_.p->r * (t - job_.t0)); }

    void finish(const Lane& l, double value, ExitPortion portion, double t) {
        out_.values[l.idx] = value;
        out_.portion[l.idx] = portion;
        out_.stop_time[l.idx] = t;
    }

    const Job& job_;
    PathSamples& out_;
    std::uint64_t first_;
    double full_weight_;
    double full_decay_;
    std::array<Lane, kBatchLanes> lanes_{};
};

PathSamples run(const Job& job, const McSettings& mc, double x, double y) {
    PathSamples out;
    out.dt_used = job.dt;
    out.values.assign(mc.n_paths, 0.0);
    out.portion.assign(mc.n_paths, ExitPortion::Terminal);
    out.stop_time.assign(mc.n_paths, job.t0);
    const ProblemData& d = *job.data;

    // Paths that stop at t0 all take the same value; no simulation needed.
    auto constant = [&](double v, ExitPortion q) {
        std::fill(out.values.begin(), out.values.end(), v);
        std::fill(out.portion.begin(), out.portion.end(), q);
        return out;
    };
    const PointClass cls = job.domain->classify(x, y);
    if (cls == PointClass::Exterior) throw ParameterError("start point lies outside the domain");
    if (cls == PointClass::Gamma1) return constant(eval(d.g, job.t0, x, y), ExitPortion::Gamma1);
    if (cls == PointClass::Gamma0 && job.rule == StoppingRule::Tau)
        return constant(eval(d.g, job.t0, x, y), ExitPortion::Gamma0);
    if (job.parabolic && job.steps == 0) return constant(eval(d.g, job.T, x, y), ExitPortion::Terminal);
    if (job.policy != nullptr && *job.policy && (*job.policy)(job.t0, x, y))
        return constant(eval(d.psi, job.t0, x, y), ExitPortion::Stopped);

    BatchPlan plan;
    plan.params = *job.p;
    plan.scheme = mc.scheme;
    plan.dt = job.dt;
    plan.max_steps = job.steps;
    plan.seed = mc.seed;
    plan.start = {job.t0, x, y};
    plan.first_path = mc.first_path;
    plan.n_paths = mc.n_paths;
    plan.workers = mc.workers;
    run_batch(plan, [&](unsigned) { return Handler(job, out, mc.first_path); });
    return out;
}

std::size_t checked_steps(double span, double dt, std::size_t cap) {
    const double n = std::ceil(span / dt - 1e-9);
    if (n > static_cast<double>(cap)) {
        std::ostringstream os;
        os << "horizon " << span << " at dt " << dt << " needs " << n << " steps, above the step cap " << cap;
        throw NumericalError(os.str());
    }
    return n > 0.0 ? static_cast<std::size_t>(n) : 0;
}

void check_mc(const McSettings& mc) {
    if (mc.n_paths == 0) throw ParameterError("n_paths must be positive");
    if (!(mc.dt > 0.0) || !std::isfinite(mc.dt)) throw ParameterError("dt must be positive");
}

} // namespace

PathSamples sample_elliptic(const HestonParams& p, const ProblemData& data, const Domain& domain, StoppingRule rule,
                            const McSettings& mc, double x, double y, const StoppingPolicy& policy) {
    p.validate();
    check_mc(mc);
    if (!(p.r > 0.0)) throw ParameterError("elliptic problems require r > 0");
    require_growth(data.growth, p, ProblemKind::Elliptic);
    const double T_max = mc.T_max > 0.0
                             ? mc.T_max
                             : elliptic_horizon(p, data.growth, data.has_source(), x, y, 0.1 * mc.target_std_error);
    Job job{&p, &data, &domain, rule, &policy, 0.0, mc.dt, checked_steps(T_max, mc.dt, mc.step_cap), false, 0.0};
    PathSamples s = run(job, mc, x, y);
    s.horizon = T_max;
    return s;
}

PathSamples sample_parabolic(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                             StoppingRule rule, const McSettings& mc, double t, double x, double y,
                             const StoppingPolicy& policy) {
    p.validate();
    check_mc(mc);
    require_growth(data.growth, p, ProblemKind::Parabolic);
    if (!(prob.T > 0.0)) throw ParameterError("terminal time must be positive");
    if (t > prob.T || t < 0.0) throw ParameterError("t must lie in [0, T]");
    const std::size_t n = checked_steps(prob.T - t, mc.dt, mc.step_cap);
    const double dt = n > 0 ? (prob.T - t) / static_cast<double>(n) : mc.dt;
    Job job{&p, &data, &prob.domain, rule, &policy, t, dt, n, true, prob.T};
    PathSamples s = run(job, mc, x, y);
    s.horizon = prob.T;
    return s;
}

Estimate estimate_elliptic_bvp(const HestonParams& p, const ProblemData& data, const Domain& domain,
                               StoppingRule rule, const McSettings& mc, double x, double y) {
    return evaluate_J_e(p, data, domain, {}, rule, mc, x, y);
}

Estimate estimate_parabolic_bvp(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                                StoppingRule rule, const McSettings& mc, double t, double x, double y) {
    return evaluate_J_p(p, data, prob, {}, rule, mc, t, x, y);
}

Estimate evaluate_J_e(const HestonParams& p, const ProblemData& data, const Domain& domain,
                      const StoppingPolicy& policy, StoppingRule rule, const McSettings& mc, double x, double y) {
    if (policy && !data.has_obstacle()) throw ParameterError("a stopping policy needs an obstacle psi");
    const PathSamples s = sample_elliptic(p, data, domain, rule, mc, x, y, policy);
    Estimate e = to_estimate(s);
    e.bias_bound = elliptic_tail_bound(p, data.growth, data.has_source(), s.horizon, x, y);
    return e;
}

Estimate evaluate_J_p(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                      const StoppingPolicy& policy, StoppingRule rule, const McSettings& mc, double t, double x,
                      double y) {
    if (policy && !data.has_obstacle()) throw ParameterError("a stopping policy needs an obstacle psi");
    return to_estimate(sample_parabolic(p, data, prob, rule, mc, t, x, y, policy));
}

} // namespace heston
