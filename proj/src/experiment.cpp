#include "heston/experiment.hpp"

#include "heston/cf_pricer.hpp"
#include "heston/simd/kernels.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace heston {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kSchema = "heston-fk/summary/1";

struct Row {
    QueryPoint q;
    Estimate est;
};

class Output {
public:
    explicit Output(const std::string& dir) : dir_(dir) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::string& content) const {
        const fs::path path = dir_ / name;
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
        os << content;
        if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
    }

private:
    fs::path dir_;
};

std::ostringstream csv_stream() {
    std::ostringstream os;
    os << std::setprecision(17);
    return os;
}

std::string results_csv(const std::string& id, const std::vector<Row>& rows) {
    auto os = csv_stream();
    os << "problem_id,t,x,y,mean,std_error,n,bias_bound\n";
    for (const Row& r : rows)
        os << id << ',' << r.q.t << ',' << r.q.x << ',' << r.q.y << ',' << r.est.mean << ',' << r.est.std_error
           << ',' << r.est.n_paths << ',' << r.est.bias_bound << '\n';
    return os.str();
}

json to_json(const Estimate& e) {
    json exits = json::object();
    for (std::size_t k = 0; k < kExitPortions; ++k) exits[std::string(to_string(static_cast<ExitPortion>(k)))] = e.exits[k];
    return {{"mean", e.mean},         {"std_error", e.std_error}, {"n", e.n_paths},
            {"ci95", {e.ci95_lo, e.ci95_hi}}, {"bias_bound", e.bias_bound}, {"exits", exits}};
}

json to_json(const QueryPoint& q) { return {{"t", q.t}, {"x", q.x}, {"y", q.y}}; }

json to_json(const StatTestReport& r) {
    return {{"name", r.name},           {"statistic", r.statistic}, {"threshold", r.threshold},
            {"pass", r.pass},           {"n_samples", r.n_samples}, {"seed", r.seed},
            {"detail", r.detail}};
}

json summary_head(Subcommand cmd, const ExperimentConfig& cfg) {
    json s;
    s["schema"] = kSchema;
    s["subcommand"] = std::string(to_string(cmd));
    s["problem_id"] = cfg.id;
    s["config"] = canonical_config(cfg);
    return s;
}

json rows_json(const std::vector<Row>& rows) {
    json a = json::array();
    for (const Row& r : rows) {
        json o = to_json(r.q);
        o["estimate"] = to_json(r.est);
        a.push_back(o);
    }
    return a;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string point_label(const QueryPoint& q) { return "t=" + fmt(q.t) + " x=" + fmt(q.x) + " y=" + fmt(q.y); }

void log_estimate(std::ostream& log, const std::string& id, const QueryPoint& q, const Estimate& e) {
    log << id << ' ' << point_label(q) << " mean=" << fmt(e.mean) << " se=" << fmt(e.std_error)
        << " n=" << e.n_paths;
    if (e.bias_bound > 0.0) log << " bias_bound=" << fmt(e.bias_bound);
    log << '\n';
}

const std::vector<QueryPoint>& require_points(const ExperimentConfig& cfg, Subcommand cmd) {
    if (cfg.points.empty())
        throw ConfigError(std::string(to_string(cmd)) + " needs at least one point ([points] list or --point)");
    return cfg.points;
}

void require_bvp(const ExperimentConfig& cfg, Subcommand cmd) {
    if (cfg.obstacle())
        throw ConfigError(std::string(to_string(cmd)) + " needs problem.type elliptic_bvp or parabolic_bvp");
}

std::string junit(const std::string& suite, const std::vector<StatTestReport>& reports) {
    std::ostringstream os;
    write_junit_xml(os, suite, reports);
    return os.str();
}

// ---------------------------------------------------------------- simulate

int run_simulate(const ExperimentConfig& cfg, std::ostream& log, const Output& out, json& summary) {
    std::vector<QueryPoint> starts = cfg.points;
    if (starts.empty()) starts.push_back({0.0, 0.0, cfg.params.theta});
    if (cfg.simulate.n_traces == 0) throw ConfigError("simulate.n_traces must be positive");

    auto os = csv_stream();
    write_trace_header(os);
    json traces = json::array();
    std::vector<std::vector<double>> finals_x(starts.size()), finals_y(starts.size());
    for (std::uint64_t i = 0; i < cfg.simulate.n_traces; ++i) {
        const std::size_t k = i % starts.size();
        PathConfig pc;
        pc.dt = cfg.mc.dt;
        pc.horizon = cfg.simulate.horizon;
        pc.scheme = cfg.mc.scheme;
        pc.seed = cfg.mc.seed;
        pc.path_index = i;
        pc.step_cap = cfg.mc.step_cap;
        const PathState start{starts[k].t, starts[k].x, starts[k].y};
        const std::vector<PathState> trace = simulate_path(cfg.params, start, pc);
        write_trace_csv(os, i, trace);
        const PathState& last = trace.back();
        finals_x[k].push_back(last.x);
        finals_y[k].push_back(last.y);
        traces.push_back({{"path", i}, {"start", k}, {"steps", trace.size() - 1}, {"t", last.t}, {"x", last.x},
                          {"y", last.y}});
    }
    out.write("traces.csv", os.str());

    for (std::size_t k = 0; k < starts.size(); ++k) {
        log << cfg.id << ' ' << point_label(starts[k]) << " traces=" << finals_x[k].size();
        if (!finals_x[k].empty()) {
            const Estimate ex = summarize(finals_x[k]);
            const Estimate ey = summarize(finals_y[k]);
            log << " mean_x_end=" << fmt(ex.mean) << " mean_y_end=" << fmt(ey.mean);
        }
        log << '\n';
    }
    json st = json::array();
    for (const QueryPoint& q : starts) st.push_back(to_json(q));
    summary["starts"] = st;
    summary["traces"] = traces;
    return kExitOk;
}

// ---------------------------------------------------------------- price-bvp

int run_price_bvp(const ExperimentConfig& cfg, std::ostream& log, const Output& out, json& summary) {
    require_bvp(cfg, Subcommand::PriceBvp);
    const auto& points = require_points(cfg, Subcommand::PriceBvp);
    const ProblemData data = build_data(cfg);
    const StoppingRule rule = cfg.resolved_rule();
    std::vector<Row> rows;
    for (const QueryPoint& q : points) {
        Estimate e;
        if (cfg.elliptic())
            e = estimate_elliptic_bvp(cfg.params, data, build_domain(cfg), rule, cfg.mc, q.x, q.y);
        else
            e = estimate_parabolic_bvp(cfg.params, data, build_parabolic(cfg), rule, cfg.mc, q.t, q.x, q.y);
        log_estimate(log, cfg.id, q, e);
        rows.push_back({q, e});
    }
    out.write("results.csv", results_csv(cfg.id, rows));
    summary["results"] = rows_json(rows);
    return kExitOk;
}

// ---------------------------------------------------------------- price-obstacle

int run_price_obstacle(const ExperimentConfig& cfg, std::ostream& log, const Output& out, json& summary) {
    if (!cfg.obstacle())
        throw ConfigError("price-obstacle needs problem.type elliptic_obstacle or parabolic_obstacle");
    const auto& points = require_points(cfg, Subcommand::PriceObstacle);
    const ProblemData data = build_data(cfg);
    const StoppingRule rule = cfg.resolved_rule();
    std::vector<Row> rows;
    json extra = json::array();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const QueryPoint& q = points[i];
        if (cfg.elliptic()) {
            const EllipticObstacleResult res = value_obstacle_elliptic(cfg.params, data, build_domain(cfg), rule,
                                                                       cfg.mc, cfg.region_grid, q.x, q.y, cfg.region);
            out.write("region_" + std::to_string(i) + ".json", res.region.to_json());
            std::ostringstream rc;
            write_region_csv(rc, res.region);
            out.write("region_" + std::to_string(i) + ".csv", rc.str());
            log_estimate(log, cfg.id, q, res.value);
            extra.push_back({{"sweeps", res.sweeps}, {"exercise_nodes", res.region.count()}});
            rows.push_back({q, res.value});
        } else {
            const SlabCertificate cert = validate_slab_length(cfg.params, data.growth, cfg.T_tilde, q.y);
            if (!cert.ok)
                throw ConfigError("lsmc.T_tilde = " + fmt(cfg.T_tilde) + " is not certified at y = " + fmt(q.y) +
                                  ": " + cert.binding);
            const TimeSlabGrid slabs = TimeSlabGrid::make(q.t, cfg.T, cfg.T_tilde);
            const ObstacleEstimate res = value_obstacle_parabolic(cfg.params, data, build_parabolic(cfg), rule,
                                                                  cfg.mc, slabs, cfg.lsmc, q.t, q.x, q.y);
            out.write("policy_" + std::to_string(i) + ".json", res.policy.to_json());
            log << cfg.id << ' ' << point_label(q) << " low=" << fmt(res.low.mean) << " se=" << fmt(res.low.std_error)
                << " high=" << fmt(res.high.mean) << " se_high=" << fmt(res.high.std_error)
                << " slabs=" << slabs.slabs() << '\n';
            extra.push_back({{"high", to_json(res.high)},
                             {"slabs", slabs.slabs()},
                             {"certificate", {{"p0", cert.p0}, {"c", cert.c}, {"moment_bound", cert.moment_bound}}}});
            rows.push_back({q, res.low});
        }
    }
    out.write("results.csv", results_csv(cfg.id, rows));
    json r = rows_json(rows);
    for (std::size_t i = 0; i < r.size(); ++i) r[i]["obstacle"] = extra[i];
    summary["results"] = r;
    return kExitOk;
}

// ---------------------------------------------------------------- oracle-pde

int run_oracle_pde(const ExperimentConfig& cfg, std::ostream& log, const Output& out, json& summary) {
    const ProblemData data = build_data(cfg);
    const Domain dom = build_domain(cfg);
    const BoundaryConditionMode mode = cfg.resolved_mode();

    std::vector<double> times;
    if (!cfg.elliptic()) {
        times.push_back(0.0);
        for (const QueryPoint& q : cfg.points) times.push_back(q.t);
        std::sort(times.begin(), times.end());
        times.erase(std::unique(times.begin(), times.end()), times.end());
    }

    std::vector<Field> fields;
    json solver;
    if (cfg.elliptic() && cfg.obstacle()) {
        ObstacleSolution s = solve_obstacle_elliptic(cfg.grid, cfg.params, data, dom, mode, cfg.pde);
        solver = {{"psor_sweeps", s.total_sweeps}, {"complementarity", s.complementarity}};
        fields = std::move(s.fields);
    } else if (cfg.elliptic()) {
        fields.push_back(solve_elliptic(cfg.grid, cfg.params, data, dom, mode, cfg.pde));
    } else if (cfg.obstacle()) {
        ObstacleSolution s = solve_obstacle_parabolic(cfg.grid, cfg.params, data, build_parabolic(cfg), times, cfg.pde);
        solver = {{"psor_sweeps", s.total_sweeps},
                  {"max_sweeps_per_step", s.max_sweeps},
                  {"complementarity", s.complementarity}};
        fields = std::move(s.fields);
    } else {
        fields = solve_parabolic(cfg.grid, cfg.params, data, build_parabolic(cfg), times, cfg.pde);
    }

    const Field& first = fields.front();
    std::ostringstream fc;
    fc << std::setprecision(17);
    write_field_csv(fc, first);
    out.write("field.csv", fc.str());
    out.write("grid.json", grid_metadata_json(first) + "\n");

    std::vector<Row> rows;
    for (const QueryPoint& q : cfg.points) {
        std::size_t k = 0;
        if (!cfg.elliptic())
            k = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), q.t) - times.begin());
        Estimate e;
        e.mean = fields[k].at(q.x, q.y);
        e.ci95_lo = e.ci95_hi = e.mean;
        rows.push_back({q, e});
        log << cfg.id << ' ' << point_label(q) << " pde=" << fmt(e.mean) << '\n';
    }
    if (cfg.points.empty()) log << cfg.id << " field at t=" << fmt(first.t) << " written to field.csv\n";
    if (!solver.is_null()) log << cfg.id << " complementarity=" << fmt(solver["complementarity"].get<double>()) << '\n';

    json warn = json::array();
    for (const Field& f : fields)
        for (const std::string& w : f.warnings) warn.push_back(w);
    out.write("results.csv", results_csv(cfg.id, rows));
    summary["results"] = rows_json(rows);
    summary["solver"] = solver;
    summary["warnings"] = warn;
    return kExitOk;
}

// ---------------------------------------------------------------- verify

StatTestReport negative_control(StatTestReport r) {
    r.name += "_negative_control";
    r.pass = !r.pass;
    r.detail = "expected to fail; " + r.detail;
    return r;
}

int run_verify(const ExperimentConfig& cfg, std::ostream& log, const Output& out, json& summary) {
    const HestonParams& p = cfg.params;
    const FellerIndices idx = feller_indices(p);
    DiagnosticRun run;
    run.n_paths = cfg.verify.n_paths;
    run.seed = cfg.verify.seed;
    run.workers = cfg.mc.workers;
    const TimeGrid grid;
    const double y0 = p.theta;

    std::vector<StatTestReport> reports;
    auto add = [&](StatTestReport r) {
        log << (r.pass ? "PASS " : "FAIL ") << r.name << " statistic=" << fmt(r.statistic)
            << " threshold=" << fmt(r.threshold) << '\n';
        reports.push_back(std::move(r));
    };

    for (double c : {0.0, 0.5, 1.0}) add(supermartingale_test_X(p, c, grid, run, 0.0, y0, cfg.mc.scheme).report);
    add(supermartingale_test_Y(p, 0.5 * idx.mu, grid, run, y0).report);
    add(supermartingale_test_Y(p, idx.mu, grid, run, y0).report);
    add(negative_control(supermartingale_test_Y(p, 2.0 * idx.mu, grid, run, y0).report));

    const BoundaryHitReport hits = boundary_hit_stats(p, {}, run);
    for (const StatTestReport& r : hits.checks) add(r);

    add(occupation_time_zero_test(p, y0, 1.0, {1e-2, 1e-3, 1e-4}, Scheme::FullTruncation, run).report);

    const StoppingFamily family;
    const double T = 1.0;
    add(moment_bound_test(p, 0.0, y0, T, 0.0, family, run).report);
    const double c = calibrate_moment_constant(p, y0, T);
    add(moment_bound_test(p, 0.0, y0, T, 0.5 * c / (2.0 * p.sigma * T), family, run).report);
    add(negative_control(moment_bound_test(p, 0.0, y0, 2.0, 10.0, family, run).report));

    std::ostringstream dc;
    write_reports_csv(dc, reports);
    out.write("diagnostics.csv", dc.str());
    out.write("report.xml", junit("verify", reports));

    json a = json::array();
    for (const StatTestReport& r : reports) a.push_back(to_json(r));
    summary["reports"] = a;
    const bool ok = std::all_of(reports.begin(), reports.end(), [](const StatTestReport& r) { return r.pass; });
    log << "verify: " << std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.pass; }) << '/'
        << reports.size() << " passed\n";
    return ok ? kExitOk : kExitTestFailure;
}

// ---------------------------------------------------------------- compare

int run_compare(const ExperimentConfig& cfg, std::ostream& log, const Output& out, json& summary) {
    require_bvp(cfg, Subcommand::Compare);
    const auto& points = require_points(cfg, Subcommand::Compare);
    const ProblemData data = build_data(cfg);
    const StoppingRule rule = cfg.resolved_rule();

    std::vector<ComparisonTable> tables;
    if (cfg.elliptic())
        tables.push_back(mc_vs_pde(cfg.params, data, build_domain(cfg), rule, cfg.resolved_mode(), cfg.mc, cfg.grid,
                                   cfg.pde, points, cfg.tolerance));
    else
        tables.push_back(mc_vs_pde(cfg.params, data, build_parabolic(cfg), rule, cfg.mc, cfg.grid, cfg.pde, points,
                                   cfg.tolerance));
    tables.front().label = "mc_vs_pde";

    if (cfg.compare_cf) {
        const CatalogEntry g = make_catalog(cfg.g);
        if (cfg.elliptic() || cfg.domain.shape != Domain::Shape::HalfPlane || !cfg.f.empty() ||
            (g.name != "put" && g.name != "call"))
            throw ConfigError("compare.cf needs a half-plane parabolic problem with g = put:K or call:K and no f");
        const double K = g.args.at(0);
        ComparisonTable mc_cf{"mc_vs_cf", {}};
        ComparisonTable pde_cf{"pde_vs_cf", {}};
        for (const ComparisonPoint& row : tables.front().rows) {
            const double tau = cfg.T - row.t;
            const double cf = g.name == "put" ? heston_put(cfg.params, K, tau, row.x, row.y)
                                              : heston_call(cfg.params, K, tau, row.x, row.y);
            mc_cf.rows.push_back(compare_point(row.t, row.x, row.y, row.mc, cf, cfg.tolerance));
            Estimate pde;
            pde.mean = row.oracle;
            pde_cf.rows.push_back(compare_point(row.t, row.x, row.y, pde, cf, cfg.tolerance));
        }
        tables.push_back(std::move(mc_cf));
        tables.push_back(std::move(pde_cf));
    }

    std::vector<StatTestReport> reports;
    for (const ComparisonTable& tab : tables)
        for (const ComparisonPoint& row : tab.rows) {
            StatTestReport r;
            r.name = tab.label + " " + point_label({row.t, row.x, row.y});
            r.statistic = std::abs(row.mc.mean - row.oracle);
            r.threshold = std::max(cfg.tolerance.z * row.mc.std_error, cfg.tolerance.rel * std::abs(row.oracle));
            r.pass = row.pass;
            r.n_samples = row.mc.n_paths;
            r.seed = cfg.mc.seed;
            r.detail = "value=" + fmt(row.mc.mean) + " oracle=" + fmt(row.oracle);
            reports.push_back(std::move(r));
        }

    std::vector<Row> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Estimate& e = tables.front().rows[i].mc;
        rows.push_back({points[i], e});
        log << cfg.id << ' ' << point_label(points[i]) << " mc=" << fmt(e.mean) << " se=" << fmt(e.std_error);
        for (const ComparisonTable& tab : tables) {
            const ComparisonPoint& row = tab.rows[i];
            log << ' ' << tab.label << '=' << (row.pass ? "pass" : "FAIL") << "(oracle=" << fmt(row.oracle) << ')';
        }
        log << '\n';
    }

    std::ostringstream cc;
    write_comparison_csv(cc, tables);
    out.write("comparison.csv", cc.str());
    out.write("results.csv", results_csv(cfg.id, rows));
    out.write("report.xml", junit("compare", reports));

    json tj = json::array();
    for (const ComparisonTable& tab : tables) {
        json rs = json::array();
        for (const ComparisonPoint& row : tab.rows)
            rs.push_back({{"t", row.t},   {"x", row.x},       {"y", row.y},       {"value", row.mc.mean},
                          {"std_error", row.mc.std_error}, {"oracle", row.oracle}, {"z", row.z},
                          {"rel", row.rel}, {"pass", row.pass}});
        tj.push_back({{"label", tab.label}, {"pass", tab.pass()}, {"rows", rs}});
    }
    summary["results"] = rows_json(rows);
    summary["tables"] = tj;
    const bool ok = std::all_of(tables.begin(), tables.end(), [](const ComparisonTable& t) { return t.pass(); });
    log << "compare: " << (ok ? "pass" : "FAIL") << '\n';
    return ok ? kExitOk : kExitTestFailure;
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

std::string_view to_string(Subcommand c) {
    switch (c) {
    case Subcommand::Simulate: return "simulate";
    case Subcommand::PriceBvp: return "price-bvp";
    case Subcommand::PriceObstacle: return "price-obstacle";
    case Subcommand::OraclePde: return "oracle-pde";
    case Subcommand::Verify: return "verify";
    case Subcommand::Compare: return "compare";
    }
    return "unknown";
}

Subcommand parse_subcommand(std::string_view s) {
    for (Subcommand c : {Subcommand::Simulate, Subcommand::PriceBvp, Subcommand::PriceObstacle, Subcommand::OraclePde,
                         Subcommand::Verify, Subcommand::Compare})
        if (s == to_string(c)) return c;
    throw ConfigError("unknown subcommand '" + std::string(s) + "'");
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
    if (o.seed) {
        cfg.mc.seed = *o.seed;
        cfg.verify.seed = *o.seed;
    }
    if (o.workers) cfg.mc.workers = *o.workers;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (!o.points.empty()) cfg.points = o.points;
}

int run_subcommand(Subcommand cmd, const ExperimentConfig& cfg, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    const Output out(cfg.out_dir);
    json summary = summary_head(cmd, cfg);

    int code = kExitOk;
    switch (cmd) {
    case Subcommand::Simulate: code = run_simulate(cfg, log, out, summary); break;
    case Subcommand::PriceBvp: code = run_price_bvp(cfg, log, out, summary); break;
    case Subcommand::PriceObstacle: code = run_price_obstacle(cfg, log, out, summary); break;
    case Subcommand::OraclePde: code = run_oracle_pde(cfg, log, out, summary); break;
    case Subcommand::Verify: code = run_verify(cfg, log, out, summary); break;
    case Subcommand::Compare: code = run_compare(cfg, log, out, summary); break;
    }
    summary["exit_code"] = code;
    out.write("summary.json", summary.dump(2) + "\n");

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const json meta = {{"schema", "heston-fk/meta/1"},
                       {"started_utc", started},
                       {"wall_time_s", wall},
                       {"isa", simd::kernels().name},
                       {"workers", cfg.mc.workers}};
    out.write("meta.json", meta.dump(2) + "\n");
    return code;
}

int run_guarded(Subcommand cmd, const std::string& config_path, const Overrides& o, std::ostream& log,
                std::ostream& err) {
    try {
        ExperimentConfig cfg = load_config(config_path);
        apply_overrides(cfg, o);
        validate_config(cfg);
        return run_subcommand(cmd, cfg, log);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const ParameterError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

} // namespace heston
