#include "heston/optimal_stopping.hpp"

#include "heston/batch.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

namespace heston {

TimeSlabGrid TimeSlabGrid::make(double t, double T, double T_tilde) {
    if (!(T > t) || !std::isfinite(T) || !std::isfinite(t)) throw ParameterError("slab grid needs t < T");
    if (!(T_tilde > 0.0)) throw ParameterError("slab length must be positive");
    const double n = std::ceil((T - t) / T_tilde - 1e-9);
    if (n > 1e6) throw ParameterError("slab length too small for the horizon");
    const auto N = static_cast<std::size_t>(std::max(1.0, n));
    TimeSlabGrid g;
    g.T_tilde = T_tilde;
    g.knots.resize(N + 1);
    for (std::size_t k = 0; k <= N; ++k) g.knots[k] = t + (T - t) * static_cast<double>(k) / static_cast<double>(N);
    g.knots.back() = T;
    return g;
}

namespace {

double eval(const DataFn& fn, double t, double x, double y) { return fn ? fn(t, x, std::max(y, 0.0)) : 0.0; }

double step_weight(double r, double h) { return r == 0.0 ? h : -std::expm1(-r * h) / r; }

std::string point_text(double t, double x, double y) {
    std::ostringstream os;
    os << std::setprecision(6) << "(t=" << t << ", x=" << x << ", y=" << y << ")";
    return os.str();
}

} // namespace

void check_compatibility(const ProblemData& data, const ParabolicProblem& prob, double x, double y) {
    if (!data.has_obstacle()) return;
    auto check = [&](double t, double px, double py) {
        const double g = eval(data.g, t, px, py);
        const double psi = eval(data.psi, t, px, py);
        if (psi > g + 1e-12 * std::max(1.0, std::abs(g)))
            throw ParameterError("obstacle exceeds the boundary data at " + point_text(t, px, py));
    };
    const Domain& d = prob.domain;
    const double xs = std::isfinite(d.x0()) ? d.x0() : x - 3.0;
    const double xe = std::isfinite(d.x1()) ? d.x1() : x + 3.0;
    const double ye = std::isfinite(d.y1()) ? d.y1() : std::max(2.0, 2.0 * y);
    for (int i = 0; i <= 40; ++i)
        for (int j = 0; j <= 20; ++j) check(prob.T, xs + (xe - xs) * i / 40.0, ye * j / 20.0);
    if (d.shape() != Domain::Shape::Rectangle) return;
    for (int s = 0; s <= 10; ++s) {
        const double t = prob.T * s / 10.0;
        for (int j = 0; j <= 20; ++j) {
            if (std::isfinite(d.x0())) check(t, d.x0(), ye * j / 20.0);
            if (std::isfinite(d.x1())) check(t, d.x1(), ye * j / 20.0);
        }
        if (std::isfinite(d.y1()))
            for (int i = 0; i <= 40; ++i) check(t, xs + (xe - xs) * i / 40.0, d.y1());
    }
}

// ---------------------------------------------------------------------------
// Regression policy

namespace {

void basis(double a, double b, double c, double* out) {
    out[0] = 1.0;
    out[1] = a;
    out[2] = b;
    out[3] = c;
    out[4] = a * a;
    out[5] = a * b;
    out[6] = a * c;
    out[7] = b * b;
    out[8] = b * c;
    out[9] = c * c;
    out[10] = a * a * a;
    out[11] = a * a * b;
    out[12] = a * a * c;
    out[13] = a * b * b;
    out[14] = a * b * c;
    out[15] = a * c * c;
    out[16] = b * b * b;
    out[17] = b * b * c;
    out[18] = b * c * c;
    out[19] = c * c * c;
}

} // namespace

double RegressionPolicy::continuation(std::size_t date, double x, double y, double psi) const {
    if (date == 0) return c0;
    if (date > dates.size()) throw ParameterError("no exercise rule for this date");
    const DateRule& r = dates[date - 1];
    if (r.beta.empty()) return std::numeric_limits<double>::infinity();
    double phi[kTerms];
    basis((x - r.center[0]) / r.scale[0], (y - r.center[1]) / r.scale[1], (psi - r.center[2]) / r.scale[2], phi);
    double v = 0.0;
    for (std::size_t k = 0; k < kTerms; ++k) v += r.beta[k] * phi[k];
    return v;
}

StoppingPolicy RegressionPolicy::as_policy(const ProblemData& data) const {
    if (!data.has_obstacle()) throw ParameterError("a regression policy needs an obstacle psi");
    auto self = std::make_shared<const RegressionPolicy>(*this);
    DataFn psi = data.psi;
    return [self, psi](double t, double x, double y) {
        const double s = (t - self->t0) / self->spacing;
        const double k = std::round(s);
        if (std::abs(s - k) > 1e-6 || k < 0.0 || k > static_cast<double>(self->dates.size())) return false;
        const double v = psi(t, x, std::max(y, 0.0));
        if (self->itm_only && !(v > 0.0)) return false;
        return v >= self->continuation(static_cast<std::size_t>(k), x, y, v);
    };
}

std::string RegressionPolicy::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "heston-regression-policy";
    j["version"] = 1;
    j["t0"] = t0;
    j["T"] = T;
    j["spacing"] = spacing;
    j["itm_only"] = itm_only;
    j["c0"] = c0;
    j["basis"] = "total degree 3 in standardized (x, y, psi)";
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const DateRule& r : dates) {
        nlohmann::ordered_json d;
        d["t"] = r.t;
        d["center"] = r.center;
        d["scale"] = r.scale;
        d["beta"] = r.beta;
        arr.push_back(std::move(d));
    }
    j["dates"] = std::move(arr);
    return j.dump(1);
}

RegressionPolicy RegressionPolicy::from_json(std::string_view text) {
    RegressionPolicy p;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format") != "heston-regression-policy" || j.at("version") != 1)
            throw ParameterError("not a regression policy file");
        p.t0 = j.at("t0");
        p.T = j.at("T");
        p.spacing = j.at("spacing");
        p.itm_only = j.at("itm_only");
        p.c0 = j.at("c0");
        for (const auto& d : j.at("dates")) {
            DateRule r;
            r.t = d.at("t");
            r.center = d.at("center");
            r.scale = d.at("scale");
            r.beta = d.at("beta").get<std::vector<double>>();
            if (!r.beta.empty() && r.beta.size() != kTerms) throw ParameterError("policy rule has the wrong size");
            p.dates.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("bad policy file: ") + e.what());
    }
    if (!(p.spacing > 0.0)) throw ParameterError("policy date spacing must be positive");
    return p;
}

// ---------------------------------------------------------------------------
// Paths recorded on exercise dates

namespace {

struct DatePaths {
    std::size_t n = 0;
    std::size_t M = 0;
    std::vector<double> x, y, integral; // row k = date k, (M + 1) * n
    std::vector<double> disc;           // per date
    std::vector<std::int32_t> last_alive;
    std::vector<double> value; // realized value discounted to t0

    std::size_t at(std::size_t k, std::size_t i) const { return k * n + i; }
};

struct DateJob {
    const HestonParams* p;
    const ProblemData* data;
    const Domain* domain;
    StoppingRule rule;
    const StoppingPolicy* policy;
    double T;
    std::size_t steps_per_date;
    double dt;
    double t0;
};

class DateHandler {
public:
    DateHandler(const DateJob& job, DatePaths& out, std::uint64_t first) : job_(job), out_(out), first_(first) {
        weight_ = step_weight(job.p->r, job.dt);
        decay_ = std::exp(-job.p->r * job.dt);
    }

    bool begin(std::size_t lane, std::uint64_t path, const PathState& s0) {
        Lane& l = lanes_[lane];
        l.idx = path - first_;
        l.disc = 1.0;
        l.integral = 0.0;
        l.f_prev = eval(job_.data->f, s0.t, s0.x, s0.y);
        record(l, 0, s0);
        return true;
    }

    bool step(std::size_t lane, const PathState& pre, const PathState& post, std::size_t k) {
        Lane& l = lanes_[lane];
        const ProblemData& d = *job_.data;
        const double r = job_.p->r;
        if (const auto ev = detect_exit(*job_.domain, job_.rule, pre, post)) {
            const double h = ev->time - pre.t;
            if (d.f) l.integral += l.disc * step_weight(r, h) * 0.5 * (l.f_prev + eval(d.f, ev->time, ev->x, ev->y));
            out_.value[l.idx] = l.integral + discount(ev->time) * eval(d.g, ev->time, ev->x, ev->y);
            return false;
        }
        if (d.f) {
            const double f_post = eval(d.f, post.t, post.x, post.y);
            l.integral += l.disc * weight_ * 0.5 * (l.f_prev + f_post);
            l.f_prev = f_post;
        }
        l.disc *= decay_;
        if (k % job_.steps_per_date != 0) return true;
        const std::size_t date = k / job_.steps_per_date;
        record(l, date, post);
        if (date == out_.M) {
            out_.value[l.idx] = l.integral + discount(job_.T) * eval(d.g, job_.T, post.x, post.y);
            return false;
        }
        if (job_.policy != nullptr && *job_.policy && (*job_.policy)(post.t, post.x, std::max(post.y, 0.0))) {
            out_.value[l.idx] = l.integral + discount(post.t) * eval(d.psi, post.t, post.x, post.y);
            return false;
        }
        return true;
    }

    void horizon(std::size_t, const PathState&) {}

private:
    struct Lane {
        std::uint64_t idx = 0;
        double disc = 1.0;
        double integral = 0.0;
        double f_prev = 0.0;
    };

    double discount(double t) const { return std::exp(-job_.p->r * (t - job_.t0)); }

    void record(const Lane& l, std::size_t date, const PathState& s) {
        const std::size_t a = out_.at(date, l.idx);
        out_.x[a] = s.x;
        out_.y[a] = s.y;
        out_.integral[a] = l.integral;
        out_.last_alive[l.idx] = static_cast<std::int32_t>(date);
    }

    const DateJob& job_;
    DatePaths& out_;
    std::uint64_t first_;
    double weight_;
    double decay_;
    std::array<Lane, kBatchLanes> lanes_{};
};

struct DateLattice {
    std::size_t M = 0;
    std::size_t steps_per_date = 0;
    double spacing = 0.0;
    double dt = 0.0;
};

DateLattice make_lattice(double t, double T, std::size_t dates, double dt_hint, std::size_t cap) {
    DateLattice L;
    L.M = dates;
    L.spacing = (T - t) / static_cast<double>(dates);
    L.steps_per_date = static_cast<std::size_t>(std::max(1.0, std::ceil(L.spacing / dt_hint - 1e-9)));
    if (static_cast<double>(L.M) * static_cast<double>(L.steps_per_date) > static_cast<double>(cap))
        throw NumericalError("exercise lattice needs more steps than the step cap");
    L.dt = (T - t) / static_cast<double>(L.M * L.steps_per_date);
    return L;
}

DatePaths simulate_dates(const HestonParams& p, const ProblemData& data, const Domain& domain, StoppingRule rule,
                         const McSettings& mc, const DateLattice& L, const StoppingPolicy* policy,
                         std::uint64_t first_path, std::uint64_t n, double t, double x, double y, double T) {
    DatePaths out;
    out.n = n;
    out.M = L.M;
    const std::size_t cells = (L.M + 1) * n;
    out.x.assign(cells, 0.0);
    out.y.assign(cells, 0.0);
    out.integral.assign(cells, 0.0);
    out.disc.assign(L.M + 1, 0.0);
    out.last_alive.assign(n, 0);
    out.value.assign(n, 0.0);
    for (std::size_t k = 0; k <= L.M; ++k) out.disc[k] = std::exp(-p.r * L.spacing * static_cast<double>(k));

    DateJob job{&p, &data, &domain, rule, policy, T, L.steps_per_date, L.dt, t};
    BatchPlan plan;
    plan.params = p;
    plan.scheme = mc.scheme;
    plan.dt = L.dt;
    plan.max_steps = L.M * L.steps_per_date;
    plan.seed = mc.seed;
    plan.start = {t, x, y};
    plan.first_path = first_path;
    plan.n_paths = n;
    plan.workers = mc.workers;
    run_batch(plan, [&](unsigned) { return DateHandler(job, out, first_path); });
    return out;
}

Estimate constant_estimate(double v, std::uint64_t n, ExitPortion q) {
    Estimate e;
    e.mean = v;
    e.n_paths = n;
    e.ci95_lo = e.ci95_hi = v;
    e.exits[static_cast<std::size_t>(q)] = n;
    return e;
}

} // namespace

ObstacleEstimate value_obstacle_parabolic(const HestonParams& p, const ProblemData& data,
                                          const ParabolicProblem& prob, StoppingRule rule, const McSettings& mc,
                                          const TimeSlabGrid& grid, const LsmcSettings& ls, double t, double x,
                                          double y) {
    p.validate();
    if (!data.has_obstacle()) throw ParameterError("obstacle problems need psi");
    require_growth(data.growth, p, ProblemKind::Parabolic);
    if (grid.slabs() == 0 || std::abs(grid.knots.front() - t) > 1e-12 || std::abs(grid.knots.back() - prob.T) > 1e-12)
        throw ParameterError("slab grid must span [t, T]");
    if (ls.dates_per_slab == 0) throw ParameterError("need at least one exercise date per slab");
    if (ls.n_train == 0 || mc.n_paths == 0) throw ParameterError("path counts must be positive");
    check_compatibility(data, prob, x, y);

    ObstacleEstimate out;
    out.slabs = grid;
    const DateLattice L = make_lattice(t, prob.T, grid.slabs() * ls.dates_per_slab, mc.dt, mc.step_cap);
    RegressionPolicy& pol = out.policy;
    pol.t0 = t;
    pol.T = prob.T;
    pol.spacing = L.spacing;
    pol.itm_only = ls.itm_only;
    pol.dates.resize(L.M - 1);

    McSettings low_mc = mc;
    low_mc.dt = L.dt;
    low_mc.first_path = mc.first_path + ls.n_train;

    const PointClass cls = prob.domain.classify(x, y);
    const bool simulate = cls == PointClass::Interior || (cls == PointClass::Gamma0 && rule == StoppingRule::Nu);
    const double psi0 = eval(data.psi, t, x, y);
    if (!simulate) {
        out.low = evaluate_J_p(p, data, prob, {}, rule, low_mc, t, x, y);
        out.high = out.low;
        pol.c0 = out.low.mean;
        return out;
    }

    DatePaths P = simulate_dates(p, data, prob.domain, rule, mc, L, nullptr, mc.first_path, ls.n_train, t, x, y,
                                 prob.T);
    const std::size_t n = P.n;
    std::vector<double>& V = P.value;
    std::vector<std::size_t> cand;
    std::vector<double> psi(n);
    for (std::size_t k = L.M - 1; k >= 1; --k) {
        RegressionPolicy::DateRule& rule_k = pol.dates[k - 1];
        rule_k.t = t + static_cast<double>(k) * L.spacing;
        cand.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (P.last_alive[i] < static_cast<std::int32_t>(k)) continue;
            const std::size_t a = P.at(k, i);
            psi[i] = eval(data.psi, rule_k.t, P.x[a], P.y[a]);
            if (!ls.itm_only || psi[i] > 0.0) cand.push_back(i);
        }
        if (cand.empty()) continue;
        if (cand.size() < RegressionPolicy::kTerms) {
            std::ostringstream os;
            os << "regression rank deficiency at t=" << rule_k.t << ": " << cand.size() << " samples for "
               << RegressionPolicy::kTerms << " basis terms";
            throw NumericalError(os.str());
        }
        const double D = P.disc[k];
        // Standardize regressors over the candidate set.
        std::array<double, 3> mean{}, sq{};
        for (std::size_t i : cand) {
            const std::size_t a = P.at(k, i);
            const double v[3] = {P.x[a], P.y[a], psi[i]};
            for (int c = 0; c < 3; ++c) mean[c] += v[c];
        }
        const double m = static_cast<double>(cand.size());
        for (int c = 0; c < 3; ++c) mean[c] /= m;
        for (std::size_t i : cand) {
            const std::size_t a = P.at(k, i);
            const double v[3] = {P.x[a] - mean[0], P.y[a] - mean[1], psi[i] - mean[2]};
            for (int c = 0; c < 3; ++c) sq[c] += v[c] * v[c];
        }
        rule_k.center = mean;
        for (int c = 0; c < 3; ++c) {
            const double sd = std::sqrt(sq[c] / m);
            rule_k.scale[c] = sd > 1e-12 * std::max(1.0, std::abs(mean[c])) ? sd : 1.0;
        }
        Eigen::Matrix<double, RegressionPolicy::kTerms, RegressionPolicy::kTerms> A;
        Eigen::Matrix<double, RegressionPolicy::kTerms, 1> b;
        A.setZero();
        b.setZero();
        Eigen::Matrix<double, RegressionPolicy::kTerms, 1> phi;
        for (std::size_t i : cand) {
            const std::size_t a = P.at(k, i);
            basis((P.x[a] - mean[0]) / rule_k.scale[0], (P.y[a] - mean[1]) / rule_k.scale[1],
                  (psi[i] - mean[2]) / rule_k.scale[2], phi.data());
            const double cont = (V[i] - P.integral[a]) / D;
            A.selfadjointView<Eigen::Lower>().rankUpdate(phi);
            b += cont * phi;
        }
        A = A.selfadjointView<Eigen::Lower>();
        const double lambda = ls.ridge * A.trace() / static_cast<double>(RegressionPolicy::kTerms);
        A.diagonal().array() += lambda;
        Eigen::LDLT<decltype(A)> ldlt(A);
        if (ldlt.info() != Eigen::Success) throw NumericalError("regression normal equations are singular");
        const Eigen::Matrix<double, RegressionPolicy::kTerms, 1> beta = ldlt.solve(b);
        if (!beta.allFinite()) throw NumericalError("regression produced non-finite coefficients");
        rule_k.beta.assign(beta.data(), beta.data() + RegressionPolicy::kTerms);
        for (std::size_t i : cand) {
            const std::size_t a = P.at(k, i);
            if (psi[i] >= pol.continuation(k, P.x[a], P.y[a], psi[i])) V[i] = P.integral[a] + D * psi[i];
        }
    }

    const Estimate cont0 = summarize(V);
    pol.c0 = cont0.mean;
    const bool stop_now = (!ls.itm_only || psi0 > 0.0) && psi0 >= pol.c0;
    out.high = stop_now ? constant_estimate(psi0, n, ExitPortion::Stopped) : cont0;
    out.low = evaluate_J_p(p, data, prob, pol.as_policy(data), rule, low_mc, t, x, y);
    return out;
}

// ---------------------------------------------------------------------------
// Regions

namespace {

bool nearest_node(const Grid2D& g, double x, double y, std::size_t& i, std::size_t& j) {
    const double fi = std::round((x - g.x_min) / g.hx());
    const double fj = std::round(y / g.hy());
    if (!(fi >= 0.0) || !(fj >= 0.0) || fi > static_cast<double>(g.nx - 1) || fj > static_cast<double>(g.ny - 1))
        return false;
    i = static_cast<std::size_t>(fi);
    j = static_cast<std::size_t>(fj);
    return true;
}

} // namespace

bool RegionMask::contains(double x, double y) const {
    std::size_t i = 0, j = 0;
    if (!nearest_node(grid, x, y, i, j)) return false;
    return mask[grid.index(i, j)] != 0;
}

std::size_t RegionMask::count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

std::string RegionMask::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "heston-region-mask";
    j["version"] = 1;
    j["nx"] = grid.nx;
    j["ny"] = grid.ny;
    j["x_min"] = grid.x_min;
    j["x_max"] = grid.x_max;
    j["y_max"] = grid.y_max;
    std::vector<int> rows(mask.begin(), mask.end());
    j["mask"] = rows;
    return j.dump();
}

RegionMask RegionMask::from_json(std::string_view text) {
    RegionMask r;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format") != "heston-region-mask" || j.at("version") != 1)
            throw ParameterError("not a region mask file");
        r.grid.nx = j.at("nx");
        r.grid.ny = j.at("ny");
        r.grid.x_min = j.at("x_min");
        r.grid.x_max = j.at("x_max");
        r.grid.y_max = j.at("y_max");
        for (int v : j.at("mask")) r.mask.push_back(v != 0 ? 1 : 0);
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("bad region file: ") + e.what());
    }
    r.grid.validate();
    if (r.mask.size() != r.grid.size()) throw ParameterError("region mask size does not match the grid");
    return r;
}

void write_region_csv(std::ostream& os, const RegionMask& r) {
    std::ostringstream line;
    line << std::setprecision(17) << "x,y,inside\n";
    for (std::size_t j = 0; j < r.grid.ny; ++j)
        for (std::size_t i = 0; i < r.grid.nx; ++i)
            line << r.grid.x(i) << ',' << r.grid.y(j) << ',' << static_cast<int>(r.mask[r.grid.index(i, j)]) << '\n';
    os << line.str();
}

EllipticObstacleResult value_obstacle_elliptic(const HestonParams& p, const ProblemData& data, const Domain& domain,
                                               StoppingRule rule, const McSettings& mc, const Grid2D& grid,
                                               double x, double y, const RegionIteration& it) {
    if (!data.has_obstacle()) throw ParameterError("obstacle problems need psi");
    if (!(p.r > 0.0)) throw ParameterError("elliptic problems require r > 0");
    grid.validate();
    EllipticObstacleResult out;
    out.region.grid = grid;
    out.region.mask.assign(grid.size(), 0);

    std::vector<std::size_t> nodes;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const PointClass c = domain.classify(grid.x(k % grid.nx), grid.y(k / grid.nx));
        if (c == PointClass::Interior || (c == PointClass::Gamma0 && rule == StoppingRule::Nu)) nodes.push_back(k);
    }
    auto psi_at = [&](std::size_t k) { return eval(data.psi, 0.0, grid.x(k % grid.nx), grid.y(k / grid.nx)); };

    for (std::size_t k : nodes) {
        const Estimate bvp = estimate_elliptic_bvp(p, data, domain, rule, mc, grid.x(k % grid.nx), grid.y(k / grid.nx));
        out.region.mask[k] = psi_at(k) >= bvp.mean - it.tolerance - it.band_sigma * bvp.std_error ? 1 : 0;
    }

    bool settled = false;
    while (out.sweeps < it.max_sweeps) {
        ++out.sweeps;
        const RegionMask current = out.region;
        std::vector<std::uint8_t> next = current.mask;
        for (std::size_t k : nodes) {
            // Value of continuing at node k: the current region without k's own cell.
            const StoppingPolicy without_k = [&current, k](double, double px, double py) {
                std::size_t i = 0, j = 0;
                if (!nearest_node(current.grid, px, py, i, j)) return false;
                const std::size_t idx = current.grid.index(i, j);
                return idx != k && current.mask[idx] != 0;
            };
            const PathSamples s =
                sample_elliptic(p, data, domain, rule, mc, grid.x(k % grid.nx), grid.y(k / grid.nx), without_k);
            const Estimate cont = summarize(s.values);
            next[k] = psi_at(k) >= cont.mean - it.tolerance - it.band_sigma * cont.std_error ? 1 : 0;
        }
        if (next == current.mask) {
            settled = true;
            break;
        }
        out.region.mask = std::move(next);
    }
    if (!settled)
        throw NumericalError("exercise region did not settle after " + std::to_string(it.max_sweeps) + " sweeps");

    const RegionMask& region = out.region;
    McSettings final_mc = mc;
    if (it.final_paths > 0) final_mc.n_paths = it.final_paths;
    out.value = evaluate_J_e(p, data, domain, [&region](double, double px, double py) { return region.contains(px, py); },
                             rule, final_mc, x, y);
    return out;
}

ContinuationRegion continuation_region(const Field& value, const DataFn& psi, double tolerance) {
    ContinuationRegion out;
    out.region.grid = value.grid;
    out.region.mask.assign(value.grid.size(), 0);
    for (std::size_t j = 0; j < value.grid.ny; ++j)
        for (std::size_t i = 0; i < value.grid.nx; ++i) {
            const std::size_t k = value.grid.index(i, j);
            const double o = psi(value.t, value.grid.x(i), value.grid.y(j));
            if (value.u[k] > o + tolerance) out.region.mask[k] = 1;
            if (value.u[k] < o - tolerance) ++out.below_obstacle;
        }
    return out;
}

namespace {

class RegionExitHandler {
public:
    RegionExitHandler(const RegionMask& region, std::vector<double>& out, std::uint64_t first, double t0)
        : region_(region), out_(out), first_(first), t0_(t0) {}

    bool begin(std::size_t lane, std::uint64_t path, const PathState& s0) {
        idx_[lane] = path - first_;
        if (!region_.contains(s0.x, s0.y)) {
            out_[idx_[lane]] = 0.0;
            return false;
        }
        return true;
    }

    bool step(std::size_t lane, const PathState&, const PathState& post, std::size_t) {
        if (region_.contains(post.x, std::max(post.y, 0.0))) return true;
        out_[idx_[lane]] = post.t - t0_;
        return false;
    }

    void horizon(std::size_t lane, const PathState& last) { out_[idx_[lane]] = last.t - t0_; }

private:
    const RegionMask& region_;
    std::vector<double>& out_;
    std::uint64_t first_;
    double t0_;
    std::array<std::uint64_t, kBatchLanes> idx_{};
};

} // namespace

Estimate continuation_exit_time(const HestonParams& p, const RegionMask& continuation, const McSettings& mc,
                                double horizon, double x, double y) {
    if (!(horizon > 0.0)) throw ParameterError("horizon must be positive");
    std::vector<double> times(mc.n_paths, 0.0);
    BatchPlan plan;
    plan.params = p;
    plan.scheme = mc.scheme;
    plan.dt = mc.dt;
    plan.max_steps = static_cast<std::size_t>(std::ceil(horizon / mc.dt - 1e-9));
    plan.seed = mc.seed;
    plan.start = {0.0, x, y};
    plan.first_path = mc.first_path;
    plan.n_paths = mc.n_paths;
    plan.workers = mc.workers;
    run_batch(plan, [&](unsigned) { return RegionExitHandler(continuation, times, mc.first_path, 0.0); });
    return summarize(times);
}

std::vector<double> exercise_boundary(const Field& f) {
    if (f.active.size() != f.grid.size()) throw ParameterError("field carries no active set");
    std::vector<double> b(f.grid.ny, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < f.grid.ny; ++j)
        for (std::size_t i = 0; i < f.grid.nx; ++i)
            if (f.active[f.grid.index(i, j)]) b[j] = f.grid.x(i);
    return b;
}

// ---------------------------------------------------------------------------
// Slab identity

SlabIdentity check_slab_identity(const HestonParams& p, const ProblemData& data, const ParabolicProblem& prob,
                                 StoppingRule rule, const McSettings& mc, const StoppingPolicy& policy, double t,
                                 double x, double y, double T_k, std::uint64_t inner_paths) {
    if (!(T_k > t && T_k < prob.T)) throw ParameterError("split time must lie inside (t, T)");
    if (!data.has_obstacle() && policy) throw ParameterError("a stopping policy needs an obstacle psi");
    const double span = prob.T - t;
    const double frac = (T_k - t) / span;
    const auto steps = static_cast<std::size_t>(std::ceil(span / mc.dt - 1e-9));
    const auto k_split = static_cast<std::size_t>(std::llround(frac * static_cast<double>(steps)));
    if (k_split == 0 || k_split >= steps || std::abs(static_cast<double>(k_split) / steps - frac) > 1e-9)
        throw ParameterError("split time must fall on the simulation grid");

    SlabIdentity out;
    out.single = evaluate_J_p(p, data, prob, policy, rule, mc, t, x, y);

    // Same paths over [t, T_k], recorded at every step so the policy sees what the
    // single pass saw; paths alive at T_k continue with fresh inner paths.
    DateLattice L;
    L.M = k_split;
    L.steps_per_date = 1;
    L.dt = span / static_cast<double>(steps);
    L.spacing = L.dt;
    McSettings outer = mc;
    outer.dt = L.dt;
    const DatePaths P = simulate_dates(p, data, prob.domain, rule, outer, L, &policy, mc.first_path, mc.n_paths, t, x,
                                       y, T_k);
    std::vector<double> composed(mc.n_paths);
    std::uint64_t n_reach = 0;
    for (std::size_t i = 0; i < mc.n_paths; ++i) {
        if (P.last_alive[i] != static_cast<std::int32_t>(L.M)) {
            composed[i] = P.value[i];
            continue;
        }
        ++n_reach;
        const std::size_t a = P.at(L.M, i);
        McSettings inner = outer;
        inner.n_paths = inner_paths;
        inner.first_path = mc.first_path + mc.n_paths + i * inner_paths;
        inner.workers = 1;
        const Estimate tail = evaluate_J_p(p, data, prob, policy, rule, inner, T_k, P.x[a], std::max(P.y[a], 0.0));
        composed[i] = P.integral[a] + P.disc[L.M] * tail.mean;
    }
    out.composed = summarize(composed);
    out.reach_fraction = static_cast<double>(n_reach) / static_cast<double>(mc.n_paths);
    return out;
}

// ---------------------------------------------------------------------------
// Slab length certificate

namespace {

class MaxHandler {
public:
    MaxHandler(std::vector<double>& out, std::uint64_t first) : out_(out), first_(first) {}
    bool begin(std::size_t lane, std::uint64_t path, const PathState& s0) {
        idx_[lane] = path - first_;
        max_[lane] = s0.y;
        return true;
    }
    bool step(std::size_t lane, const PathState&, const PathState& post, std::size_t) {
        max_[lane] = std::max(max_[lane], post.y);
        return true;
    }
    void horizon(std::size_t lane, const PathState&) { out_[idx_[lane]] = max_[lane]; }

private:
    std::vector<double>& out_;
    std::uint64_t first_;
    std::array<std::uint64_t, kBatchLanes> idx_{};
    std::array<double, kBatchLanes> max_{};
};

} // namespace

double calibrate_moment_constant(const HestonParams& p, double y, double T, const MomentCalibration& cal) {
    if (!(T > 0.0)) throw ParameterError("calibration horizon must be positive");
    if (cal.n_paths < 1000 || cal.steps == 0) throw ParameterError("calibration needs at least 1000 paths");
    std::vector<double> maxima(cal.n_paths, 0.0);
    BatchPlan plan;
    plan.params = p;
    plan.scheme = Scheme::FullTruncation;
    plan.dt = T / static_cast<double>(cal.steps);
    plan.max_steps = cal.steps;
    plan.seed = cal.seed;
    plan.start = {0.0, 0.0, y};
    plan.n_paths = cal.n_paths;
    run_batch(plan, [&](unsigned) { return MaxHandler(maxima, 0); });
    std::sort(maxima.begin(), maxima.end());
    const double s2 = p.sigma * p.sigma;
    double c = 1.0;
    for (double q : {0.9, 0.99, 0.999}) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(cal.n_paths - 1)));
        const double m = maxima[idx];
        if (!(m > 0.0)) continue;
        c = std::min(c, 2.0 * s2 * T * std::log(2.0 / std::sqrt(M_PI) / (1.0 - q)) / m);
    }
    return c;
}

SlabCertificate validate_slab_length(const HestonParams& p, const GrowthBound& growth, double T_tilde, double y,
                                     const MomentCalibration& cal) {
    p.validate();
    require_growth(growth, p, ProblemKind::Parabolic);
    if (!(T_tilde > 0.0)) throw ParameterError("slab length must be positive");
    SlabCertificate cert;
    const double mu = feller_indices(p).mu;
    cert.c = calibrate_moment_constant(p, y, T_tilde, cal);
    cert.moment_bound = cert.c / (2.0 * p.sigma * T_tilde);
    const double inf = std::numeric_limits<double>::infinity();
    const double up1 = growth.M1 > 0.0 ? mu / growth.M1 : inf;
    const double up2 = growth.M2 > 0.0 ? cert.moment_bound / growth.M2 : inf;
    if (!(up1 > 1.0)) {
        cert.binding = "p0 M1 <= mu";
        return cert;
    }
    if (!(up2 > 1.0)) {
        cert.binding = "p0 M2 < c / (2 sigma T_tilde)";
        return cert;
    }
    const double u = std::min(up1, up2);
    cert.p0 = std::isinf(u) ? 2.0 : std::min(2.0, 0.5 * (1.0 + u));
    cert.ok = true;
    return cert;
}

double slab_threshold(const HestonParams& p, const GrowthBound& growth, double y, double lo, double hi,
                      const MomentCalibration& cal) {
    if (!(lo > 0.0 && hi > lo)) throw ParameterError("threshold search needs 0 < lo < hi");
    if (!validate_slab_length(p, growth, lo, y, cal).ok) return lo;
    if (validate_slab_length(p, growth, hi, y, cal).ok) return hi;
    double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < 30; ++i) {
        const double m = 0.5 * (a + b);
        if (validate_slab_length(p, growth, std::exp(m), y, cal).ok)
            a = m;
        else
            b = m;
    }
    return std::exp(a);
}

} // namespace heston
