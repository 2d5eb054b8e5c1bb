#include "heston/diagnostics.hpp"

#include "heston/batch.hpp"
#include "heston/rng.hpp"

#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace heston {
namespace {

// Word 1 of the counter selects the stream family (see rng.hpp); bridge draws
// sit far above the auxiliary blocks of the exact sampler.
constexpr std::uint32_t kBridgeStream = 0x40000000u;

double bridge_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    const PhiloxCounter c{static_cast<std::uint32_t>(step), kBridgeStream, static_cast<std::uint32_t>(path),
                          static_cast<std::uint32_t>(path >> 32)};
    const PhiloxCounter out = philox4x32_10(c, philox_key(seed));
    const std::uint64_t bits = (std::uint64_t{out[0]} << 21) ^ (std::uint64_t{out[1]} >> 11);
    return (static_cast<double>(bits & ((std::uint64_t{1} << 53) - 1)) + 0.5) * 0x1.0p-53;
}

std::size_t step_count(double horizon, double dt) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ParameterError("horizon and dt must be positive");
    return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

void check_run(const DiagnosticRun& run) {
    if (run.n_paths < 2) throw ParameterError("diagnostics need at least 2 paths");
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

// Values f(s, state) at the observation times, row j holding all paths.
template <class F>
std::vector<std::vector<double>> sample_grid(const HestonParams& p, Scheme scheme, const TimeGrid& grid,
                                             const DiagnosticRun& run, const PathState& start, F f) {
    grid.validate();
    check_run(run);
    const std::size_t rows = grid.points + 1;
    std::vector<std::vector<double>> out(rows, std::vector<double>(run.n_paths, 0.0));
    struct Handler {
        std::vector<std::vector<double>>* out;
        std::size_t substeps;
        F* f;
        std::array<std::uint64_t, kBatchLanes> path{};
        bool begin(std::size_t lane, std::uint64_t id, const PathState& s0) {
            path[lane] = id;
            (*out)[0][id] = (*f)(s0);
            return true;
        }
        bool step(std::size_t lane, const PathState&, const PathState& post, std::size_t k) {
            if (k % substeps == 0) (*out)[k / substeps][path[lane]] = (*f)(post);
            return true;
        }
        void horizon(std::size_t, const PathState&) {}
    };
    BatchPlan plan;
    plan.params = p;
    plan.scheme = scheme;
    plan.dt = grid.dt();
    plan.max_steps = grid.points * grid.substeps;
    plan.seed = run.seed;
    plan.start = start;
    plan.n_paths = run.n_paths;
    plan.workers = run.workers;
    run_batch(plan, [&](unsigned) { return Handler{&out, grid.substeps, &f}; });
    return out;
}

SupermartingaleResult grid_test(std::string name, const std::vector<std::vector<double>>& rows,
                                const TimeGrid& grid, const DiagnosticRun& run) {
    SupermartingaleResult res;
    GridMeans& g = res.means;
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const Estimate e = summarize(rows[j]);
        g.times.push_back(grid.horizon * static_cast<double>(j) / static_cast<double>(grid.points));
        g.mean.push_back(e.mean);
        g.std_error.push_back(e.std_error);
    }
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
        const double d = g.mean[j + 1] - g.mean[j];
        const double se = std::hypot(g.std_error[j], g.std_error[j + 1]);
        const double z = se > 0.0 ? d / se : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        g.increment_z.push_back(z);
        worst = std::max(worst, z);
        res.max_abs_z = std::max(res.max_abs_z, std::abs(z));
    }
    StatTestReport& r = res.report;
    r.name = std::move(name);
    r.statistic = worst;
    r.threshold = 3.0;
    r.pass = worst <= 3.0;
    r.n_samples = run.n_paths;
    r.seed = run.seed;
    r.detail = "m(0)=" + fmt(g.mean.front()) + " m(T)=" + fmt(g.mean.back()) + " max|z|=" + fmt(res.max_abs_z);
    return res;
}

double hit_fraction_se(const HitTally& t) {
    const double f = t.frequency();
    return std::sqrt(std::max(f * (1.0 - f), 0.0) / static_cast<double>(std::max<std::uint64_t>(t.n_paths, 1)));
}

} // namespace

void TimeGrid::validate() const {
    if (!(horizon > 0.0)) throw ParameterError("time grid horizon must be positive");
    if (points == 0 || substeps == 0) throw ParameterError("time grid needs points and substeps");
}

SupermartingaleResult supermartingale_test_X(const HestonParams& p, double c, const TimeGrid& grid,
                                             const DiagnosticRun& run, double x0, double y0, Scheme scheme) {
    p.validate();
    if (p.q < 0.0) throw ParameterError("the X supermartingale test requires q >= 0");
    if (!(c >= 0.0 && c <= 1.0)) throw ParameterError("the X supermartingale test requires c in [0, 1]");
    const auto rows = sample_grid(p, scheme, grid, run, {0.0, x0, y0},
                                  [&](const PathState& s) { return std::exp(-p.r * c * s.t + c * s.x); });
    return grid_test("supermartingale_X c=" + fmt(c), rows, grid, run);
}

SupermartingaleResult supermartingale_test_Y(const HestonParams& p, double c, const TimeGrid& grid,
                                             const DiagnosticRun& run, double y0) {
    p.validate();
    if (!(c > 0.0)) throw ParameterError("the Y supermartingale test requires c > 0");
    const double kt = p.kappa * p.theta;
    const auto rows = sample_grid(p, Scheme::ExactCIRMarginal, grid, run, {0.0, 0.0, y0},
                                  [&](const PathState& s) { return std::exp(-c * kt * s.t + c * s.y); });
    const double mu = feller_indices(p).mu;
    return grid_test("supermartingale_Y c/mu=" + fmt(c / mu), rows, grid, run);
}

double cir_zero_bridge_probability(const HestonParams& p, double y0, double y1, double h) {
    const double beta = feller_indices(p).beta;
    if (beta >= 1.0) return 0.0;
    if (y0 <= 0.0 || y1 <= 0.0) return 1.0;
    // Y(t) = e^{-kappa t} Q(phi(t)) with Q a squared Bessel process of index nu = beta - 1
    // and phi(t) = sigma^2 (e^{kappa t} - 1) / (4 kappa). Absorbed and reflected transition
    // densities differ by I_{|nu|} vs I_{-|nu|}, so the bridge misses 0 with probability
    // I_{|nu|}(z) / I_{-|nu|}(z), z = sqrt(q0 q1) / phi.
    const double tau = p.sigma * p.sigma * std::expm1(p.kappa * h) / (4.0 * p.kappa);
    const double z = std::sqrt(y0 * y1 * std::exp(p.kappa * h)) / tau;
    const double a = 1.0 - beta;
    if (z > 300.0) return 0.0;
    if (z < 1e-280) return 1.0;
    const double k = boost::math::cyl_bessel_k(a, z);
    const double i_neg = boost::math::cyl_bessel_i(-a, z);
    const double prob = 2.0 / std::numbers::pi * std::sin(a * std::numbers::pi) * k / i_neg;
    return std::clamp(prob, 0.0, 1.0);
}

HitTally zero_hit_frequency(const HestonParams& p, double y0, Scheme scheme, double dt, double horizon,
                            const DiagnosticRun& run) {
    p.validate();
    check_run(run);
    std::vector<std::uint8_t> hit(run.n_paths, 0);
    struct Handler {
        std::vector<std::uint8_t>* hit;
        std::array<std::uint64_t, kBatchLanes> path{};
        bool begin(std::size_t lane, std::uint64_t id, const PathState&) {
            path[lane] = id;
            return true;
        }
        bool step(std::size_t lane, const PathState&, const PathState& post, std::size_t) {
            if (post.y > 0.0) return true;
            (*hit)[path[lane]] = 1;
            return false;
        }
        void horizon(std::size_t, const PathState&) {}
    };
    BatchPlan plan;
    plan.params = p;
    plan.scheme = scheme;
    plan.max_steps = step_count(horizon, dt);
    plan.dt = horizon / static_cast<double>(plan.max_steps);
    plan.seed = run.seed;
    plan.start = {0.0, 0.0, y0};
    plan.n_paths = run.n_paths;
    plan.workers = run.workers;
    run_batch(plan, [&](unsigned) { return Handler{&hit}; });
    HitTally t;
    t.y0 = y0;
    t.dt = plan.dt;
    t.scheme = scheme;
    t.n_paths = run.n_paths;
    for (auto h : hit) t.hits += h;
    return t;
}

LevelExit level_exit_mc(const HestonParams& p, double a, double b, double y, const LevelExitSettings& s,
                        const DiagnosticRun& run) {
    p.validate();
    check_run(run);
    if (!(a >= 0.0 && a < y && y < b)) throw ParameterError("level_exit_mc requires 0 <= a < y < b");
    const bool zero_bridge = a == 0.0 && s.scheme == Scheme::ExactCIRMarginal;
    std::vector<double> upper(run.n_paths, 0.0);
    std::vector<double> time(run.n_paths, 0.0);
    std::vector<std::uint8_t> censored(run.n_paths, 0);

    struct Handler {
        const HestonParams* p;
        const LevelExitSettings* s;
        double a, b, dt;
        bool zero_bridge;
        std::uint64_t seed;
        std::vector<double>* upper;
        std::vector<double>* time;
        std::vector<std::uint8_t>* censored;
        std::array<std::uint64_t, kBatchLanes> path{};

        bool begin(std::size_t lane, std::uint64_t id, const PathState&) {
            path[lane] = id;
            return true;
        }
        bool finish(std::size_t lane, bool up, double t) {
            (*upper)[path[lane]] = up ? 1.0 : 0.0;
            (*time)[path[lane]] = t;
            return false;
        }
        bool step(std::size_t lane, const PathState& pre, const PathState& post, std::size_t k) {
            if (post.y <= a) return finish(lane, false, post.t);
            if (post.y >= b) return finish(lane, true, post.t);
            if (!s->bridge) return true;
            double pa = 0.0;
            double pb = 0.0;
            const double v = p->sigma * p->sigma * std::max(pre.y, 0.0) * dt;
            if (zero_bridge) {
                pa = cir_zero_bridge_probability(*p, pre.y, post.y, dt);
            } else if (a > 0.0 && v > 0.0) {
                const double e = 2.0 * (pre.y - a) * (post.y - a) / v;
                pa = e < 700.0 ? std::exp(-e) : 0.0;
            }
            if (std::isfinite(b) && v > 0.0) {
                const double e = 2.0 * (b - pre.y) * (b - post.y) / v;
                pb = e < 700.0 ? std::exp(-e) : 0.0;
            }
            if (pa == 0.0 && pb == 0.0) return true;
            const double u = bridge_uniform(seed, path[lane], k);
            const double mid = pre.t + 0.5 * dt;
            if (u < pa) return finish(lane, false, mid);
            if (u > 1.0 - pb) return finish(lane, true, mid);
            return true;
        }
        void horizon(std::size_t lane, const PathState& last) {
            (*censored)[path[lane]] = 1;
            (*time)[path[lane]] = last.t;
        }
    };

    BatchPlan plan;
    plan.params = p;
    plan.scheme = s.scheme;
    plan.max_steps = step_count(s.horizon, s.dt);
    plan.dt = s.horizon / static_cast<double>(plan.max_steps);
    plan.seed = run.seed;
    plan.start = {0.0, 0.0, y};
    plan.n_paths = run.n_paths;
    plan.workers = run.workers;
    run_batch(plan, [&](unsigned) {
        return Handler{&p, &s, a, b, plan.dt, zero_bridge, run.seed, &upper, &time, &censored};
    });
    LevelExit out;
    out.upper = summarize(upper);
    out.time = summarize(time);
    for (auto c : censored) out.censored += c;
    return out;
}

BoundaryHitReport boundary_hit_stats(const HestonParams& p, const BoundaryHitSettings& s, const DiagnosticRun& run) {
    p.validate();
    if (s.y0.empty() || s.dt.empty()) throw ParameterError("boundary_hit_stats needs y0 and dt levels");
    const double beta = feller_indices(p).beta;
    std::vector<double> y0 = s.y0;
    std::sort(y0.begin(), y0.end(), std::greater<>());
    std::vector<double> dts = s.dt;
    std::sort(dts.begin(), dts.end(), std::greater<>());

    BoundaryHitReport rep;
    std::uint64_t exact_hits = 0;
    double worst_increase = -std::numeric_limits<double>::infinity();
    for (double y : y0) {
        for (double dt : s.exact_dt) {
            rep.tallies.push_back(zero_hit_frequency(p, y, Scheme::ExactCIRMarginal, dt, s.horizon, run));
            exact_hits += rep.tallies.back().hits;
        }
        for (std::size_t i = 0; i < dts.size(); ++i) {
            rep.tallies.push_back(zero_hit_frequency(p, y, Scheme::FullTruncation, dts[i], s.horizon, run));
            if (i == 0) continue;
            const HitTally& t = rep.tallies.back();
            const HitTally& prev = rep.tallies[rep.tallies.size() - 2];
            const double se = std::hypot(hit_fraction_se(t), hit_fraction_se(prev));
            const double d = t.frequency() - prev.frequency();
            const double z = se > 0.0 ? d / se : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            worst_increase = std::max(worst_increase, z);
        }
    }

    if (beta >= 1.0) {
        StatTestReport exact;
        exact.name = "zero_hits_exact beta=" + fmt(beta);
        exact.statistic = static_cast<double>(exact_hits);
        exact.threshold = 0.0;
        exact.pass = exact_hits == 0;
        exact.n_samples = run.n_paths;
        exact.seed = run.seed;
        exact.detail = "paths per level " + std::to_string(run.n_paths);
        rep.checks.push_back(exact);
        if (dts.size() > 1) {
            StatTestReport euler;
            euler.name = "zero_hits_euler_nonincreasing_in_dt beta=" + fmt(beta);
            euler.statistic = worst_increase;
            euler.threshold = 3.0;
            euler.pass = worst_increase <= 3.0;
            euler.n_samples = run.n_paths;
            euler.seed = run.seed;
            euler.detail = "max z of a frequency increase under refinement";
            rep.checks.push_back(euler);
        }
        return rep;
    }

    LevelExitSettings ls;
    ls.scheme = Scheme::ExactCIRMarginal;
    ls.dt = s.zero_time_dt;
    ls.horizon = s.zero_time_horizon;
    const double b = std::numeric_limits<double>::infinity();
    std::uint64_t censored = 0;
    for (double y : y0) {
        rep.zero_times.push_back({y, level_exit_mc(p, 0.0, b, y, ls, run)});
        censored += rep.zero_times.back().exit.censored;
    }
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < rep.zero_times.size(); ++i) {
        const Estimate& hi = rep.zero_times[i].exit.time;
        const Estimate& lo = rep.zero_times[i + 1].exit.time;
        worst = std::min(worst, (hi.mean - lo.mean) / std::hypot(hi.std_error, lo.std_error));
    }
    StatTestReport dec;
    dec.name = "mean_T0_decreasing beta=" + fmt(beta);
    dec.statistic = rep.zero_times.size() > 1 ? worst : 0.0;
    dec.threshold = 3.0;
    dec.pass = rep.zero_times.size() > 1 && worst > 3.0 && censored == 0;
    dec.n_samples = run.n_paths;
    dec.seed = run.seed;
    dec.detail = "min z of consecutive decreases, censored " + std::to_string(censored);
    rep.checks.push_back(dec);

    const Estimate& last = rep.zero_times.back().exit.time;
    StatTestReport fin;
    fin.name = "mean_T0_final beta=" + fmt(beta);
    fin.statistic = last.mean;
    fin.threshold = s.final_mean_limit;
    fin.pass = last.mean < s.final_mean_limit && censored == 0;
    fin.n_samples = run.n_paths;
    fin.seed = run.seed;
    fin.detail = "y0=" + fmt(rep.zero_times.back().y0) + " se=" + fmt(last.std_error);
    rep.checks.push_back(fin);
    return rep;
}

OccupationResult occupation_time_zero_test(const HestonParams& p, double y0, double horizon,
                                           const std::vector<double>& dt_levels, Scheme scheme,
                                           const DiagnosticRun& run, double threshold) {
    p.validate();
    check_run(run);
    if (dt_levels.empty()) throw ParameterError("occupation test needs dt levels");
    std::vector<double> dts = dt_levels;
    std::sort(dts.begin(), dts.end(), std::greater<>());
    OccupationResult res;
    for (double dt : dts) {
        std::vector<std::uint32_t> zeros(run.n_paths, 0);
        struct Handler {
            std::vector<std::uint32_t>* zeros;
            std::array<std::uint64_t, kBatchLanes> path{};
            bool begin(std::size_t lane, std::uint64_t id, const PathState&) {
                path[lane] = id;
                return true;
            }
            bool step(std::size_t lane, const PathState&, const PathState& post, std::size_t) {
                if (post.y <= 0.0) ++(*zeros)[path[lane]];
                return true;
            }
            void horizon(std::size_t, const PathState&) {}
        };
        BatchPlan plan;
        plan.params = p;
        plan.scheme = scheme;
        plan.max_steps = step_count(horizon, dt);
        plan.dt = horizon / static_cast<double>(plan.max_steps);
        plan.seed = run.seed;
        plan.start = {0.0, 0.0, y0};
        plan.n_paths = run.n_paths;
        plan.workers = run.workers;
        run_batch(plan, [&](unsigned) { return Handler{&zeros}; });
        std::uint64_t total = 0;
        for (auto z : zeros) total += z;
        res.levels.push_back(
            {plan.dt, static_cast<double>(total) / (static_cast<double>(run.n_paths) * plan.max_steps)});
    }
    bool shrinking = true;
    for (std::size_t i = 1; i < res.levels.size(); ++i)
        shrinking = shrinking && res.levels[i].fraction <= res.levels[i - 1].fraction;
    StatTestReport& r = res.report;
    r.name = "occupation_time_zero";
    r.statistic = res.levels.back().fraction;
    r.threshold = threshold;
    r.pass = shrinking && r.statistic < threshold;
    r.n_samples = run.n_paths;
    r.seed = run.seed;
    std::ostringstream os;
    os << "scheme=" << to_string(scheme) << " fractions";
    for (const auto& l : res.levels) os << ' ' << fmt(l.dt) << ':' << fmt(l.fraction);
    r.detail = os.str();
    return res;
}

MomentBoundResult moment_bound_test(const HestonParams& p, double x0, double y0, double T, double p_exp,
                                    const StoppingFamily& family, const DiagnosticRun& run, double dt, double limit,
                                    const MomentCalibration& cal) {
    p.validate();
    check_run(run);
    if (!(p_exp >= 0.0)) throw ParameterError("moment exponent must be nonnegative");
    if (family.deterministic_times == 0 && family.x_offsets.empty()) throw ParameterError("empty stopping family");
    for (double o : family.x_offsets)
        if (o == 0.0) throw ParameterError("x offsets must be nonzero");
    const std::size_t steps = step_count(T, dt);
    const std::size_t nd = family.deterministic_times;
    const std::size_t nl = family.x_offsets.size();

    MomentBoundResult res;
    std::vector<std::size_t> det_step(nd);
    for (std::size_t j = 0; j < nd; ++j) {
        det_step[j] = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(steps * (j + 1)) / static_cast<double>(nd))));
        res.members.push_back("t=" + fmt(T * static_cast<double>(det_step[j]) / static_cast<double>(steps)));
    }
    for (double o : family.x_offsets) res.members.push_back("hit=" + fmt(x0 + o));
    const std::size_t m = nd + nl;
    std::vector<std::vector<double>> val(m, std::vector<double>(run.n_paths, 0.0));

    struct Handler {
        std::vector<std::vector<double>>* val;
        const std::vector<std::size_t>* det_step;
        const std::vector<double>* offsets;
        double x0, p_exp;
        std::size_t nd;
        std::array<std::uint64_t, kBatchLanes> path{};
        std::vector<std::uint8_t> done = std::vector<std::uint8_t>(kBatchLanes * 16, 0);

        bool begin(std::size_t lane, std::uint64_t id, const PathState&) {
            path[lane] = id;
            std::fill_n(done.begin() + lane * 16, 16, 0);
            return true;
        }
        bool step(std::size_t lane, const PathState&, const PathState& post, std::size_t k) {
            const double v = std::exp(p_exp * post.x);
            for (std::size_t j = 0; j < nd; ++j)
                if ((*det_step)[j] == k) (*val)[j][path[lane]] = v;
            for (std::size_t l = 0; l < offsets->size(); ++l) {
                auto& d = done[lane * 16 + l];
                if (d) continue;
                const double o = (*offsets)[l];
                if ((o > 0.0 && post.x >= x0 + o) || (o < 0.0 && post.x <= x0 + o)) {
                    (*val)[nd + l][path[lane]] = v;
                    d = 1;
                }
            }
            return true;
        }
        void horizon(std::size_t lane, const PathState& last) {
            const double v = std::exp(p_exp * last.x);
            for (std::size_t l = 0; l < offsets->size(); ++l)
                if (!done[lane * 16 + l]) (*val)[nd + l][path[lane]] = v;
        }
    };
    if (nl > 16) throw ParameterError("at most 16 x levels in a stopping family");

    BatchPlan plan;
    plan.params = p;
    plan.scheme = Scheme::FullTruncation;
    plan.max_steps = steps;
    plan.dt = T / static_cast<double>(steps);
    plan.seed = run.seed;
    plan.start = {0.0, x0, y0};
    plan.n_paths = run.n_paths;
    plan.workers = run.workers;
    run_batch(plan, [&](unsigned) { return Handler{&val, &det_step, &family.x_offsets, x0, p_exp, nd}; });

    double envelope = 0.0;
    for (const auto& v : val) {
        res.means.push_back(summarize(v));
        envelope = std::max(envelope, res.means.back().mean + 3.0 * res.means.back().std_error);
    }
    res.envelope = envelope;
    res.c = calibrate_moment_constant(p, y0, T, cal);
    res.bound = res.c / (2.0 * p.sigma * T);
    res.within_bound = p_exp < res.bound;
    StatTestReport& r = res.report;
    r.name = "moment_bound p=" + fmt(p_exp) + " T=" + fmt(T);
    r.statistic = envelope / std::exp(p_exp * x0);
    r.threshold = limit;
    r.pass = std::isfinite(r.statistic) && r.statistic <= limit;
    r.n_samples = run.n_paths;
    r.seed = run.seed;
    r.detail = "c=" + fmt(res.c) + " bound=" + fmt(res.bound) + (res.within_bound ? " within" : " outside");
    return res;
}

ComparisonPoint compare_point(double t, double x, double y, const Estimate& mc, double oracle,
                              const ComparisonTolerance& tol) {
    ComparisonPoint c;
    c.t = t;
    c.x = x;
    c.y = y;
    c.mc = mc;
    c.oracle = oracle;
    const double d = std::abs(mc.mean - oracle);
    c.z = mc.std_error > 0.0 ? d / mc.std_error : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    c.rel = oracle != 0.0 ? d / std::abs(oracle) : d;
    c.pass = d <= std::max(tol.z * mc.std_error, tol.rel * std::abs(oracle));
    return c;
}

bool ComparisonTable::pass() const {
    return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const ComparisonPoint& r) { return r.pass; });
}

ComparisonTable mc_vs_pde(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                          StoppingRule rule, const McSettings& mc, const Grid2D& grid, const PdeSettings& pde,
                          const std::vector<QueryPoint>& points, const ComparisonTolerance& tol) {
    std::vector<double> times;
    for (const auto& q : points) times.push_back(q.t);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const std::vector<Field> fields = solve_parabolic(grid, p, data, prob, times, pde);
    ComparisonTable table;
    table.label = data.id;
    for (const auto& q : points) {
        const auto it = std::lower_bound(times.begin(), times.end(), q.t);
        const Field& f = fields[static_cast<std::size_t>(it - times.begin())];
        const Estimate e = estimate_parabolic_bvp(p, data, prob, rule, mc, q.t, q.x, q.y);
        table.rows.push_back(compare_point(q.t, q.x, q.y, e, f.at(q.x, q.y), tol));
    }
    return table;
}

ComparisonTable mc_vs_pde(const HestonParams& p, const ProblemData& data, const Domain& domain, StoppingRule rule,
                          BoundaryConditionMode mode, const McSettings& mc, const Grid2D& grid,
                          const PdeSettings& pde, const std::vector<QueryPoint>& points,
                          const ComparisonTolerance& tol) {
    const Field f = solve_elliptic(grid, p, data, domain, mode, pde);
    ComparisonTable table;
    table.label = data.id;
    for (const auto& q : points) {
        const Estimate e = estimate_elliptic_bvp(p, data, domain, rule, mc, q.x, q.y);
        table.rows.push_back(compare_point(0.0, q.x, q.y, e, f.at(q.x, q.y), tol));
    }
    return table;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

} // namespace

void write_reports_csv(std::ostream& os, const std::vector<StatTestReport>& reports) {
    std::ostringstream out;
    out << std::setprecision(17) << "name,statistic,threshold,pass,n_samples,seed,detail\n";
    for (const auto& r : reports)
        out << csv_field(r.name) << ',' << r.statistic << ',' << r.threshold << ',' << (r.pass ? 1 : 0) << ','
            << r.n_samples << ',' << r.seed << ',' << csv_field(r.detail) << '\n';
    os << out.str();
}

void write_junit_xml(std::ostream& os, const std::string& suite, const std::vector<StatTestReport>& reports) {
    std::size_t failures = 0;
    for (const auto& r : reports) failures += r.pass ? 0 : 1;
    std::ostringstream out;
    out << std::setprecision(17);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<testsuite name=\"" << xml_escape(suite) << "\" tests=\"" << reports.size() << "\" failures=\""
        << failures << "\">\n";
    for (const auto& r : reports) {
        out << "  <testcase classname=\"" << xml_escape(suite) << "\" name=\"" << xml_escape(r.name) << "\">\n";
        out << "    <properties><property name=\"statistic\" value=\"" << r.statistic
            << "\"/><property name=\"threshold\" value=\"" << r.threshold << "\"/><property name=\"n_samples\" value=\""
            << r.n_samples << "\"/><property name=\"seed\" value=\"" << r.seed << "\"/></properties>\n";
        if (!r.pass)
            out << "    <failure message=\"statistic " << r.statistic << " vs threshold " << r.threshold << "\">"
                << xml_escape(r.detail) << "</failure>\n";
        else if (!r.detail.empty())
            out << "    <system-out>" << xml_escape(r.detail) << "</system-out>\n";
        out << "  </testcase>\n";
    }
    out << "</testsuite>\n";
    os << out.str();
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonTable>& tables) {
    std::ostringstream out;
    out << std::setprecision(17) << "label,t,x,y,mc,std_error,n,oracle,z,rel,pass\n";
    for (const auto& t : tables)
        for (const auto& r : t.rows)
            out << csv_field(t.label) << ',' << r.t << ',' << r.x << ',' << r.y << ',' << r.mc.mean << ','
                << r.mc.std_error << ',' << r.mc.n_paths << ',' << r.oracle << ',' << r.z << ',' << r.rel << ','
                << (r.pass ? 1 : 0) << '\n';
    os << out.str();
}

} // namespace heston
