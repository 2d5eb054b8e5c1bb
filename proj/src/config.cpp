#include "heston/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace heston {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"model", {"kappa", "theta", "sigma", "rho", "r", "q"}},
        {"problem", {"type", "id", "f", "g", "psi", "T", "growth_C", "growth_M1", "growth_M2"}},
        {"domain", {"shape", "x0", "x1", "y1", "mode", "rule"}},
        {"mc", {"n_paths", "dt", "scheme", "seed", "workers", "T_max", "target_std_error", "step_cap"}},
        {"pde", {"nx", "ny", "x_min", "x_max", "y_max", "nt", "rannacher", "psor_omega", "psor_tol",
                 "psor_max_sweeps"}},
        {"lsmc", {"n_train", "dates_per_slab", "T_tilde", "ridge", "itm_only"}},
        {"region", {"nx", "ny", "x_min", "x_max", "y_max", "max_sweeps", "tolerance", "band_sigma", "final_paths"}},
        {"points", {"list"}},
        {"compare", {"z", "rel", "cf"}},
        {"verify", {"n_paths", "seed"}},
        {"simulate", {"n_traces", "horizon"}},
        {"output", {"dir"}},
    };
    return keys;
}

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& s) {
    const char* b = s.c_str();
    char* e = nullptr;
    const double v = std::strtod(b, &e);
    if (e == b || *e != '\0' || std::isnan(v)) throw ConfigError("'" + key + "': not a number: '" + s + "'");
    return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError("'" + key + "': not a nonnegative integer: '" + s + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("'" + key + "': expected true or false, got '" + s + "'");
}

struct Reader {
    const pt::ptree& tree;

    std::optional<std::string> get(const std::string& sec, const std::string& key) const {
        const auto s = tree.get_child_optional(sec);
        if (!s) return std::nullopt;
        const auto v = s->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return *v;
    }
    void real(const std::string& sec, const std::string& key, double& out) const {
        if (auto v = get(sec, key)) out = to_double(sec + "." + key, *v);
    }
    template <class U>
    void integer(const std::string& sec, const std::string& key, U& out) const {
        if (auto v = get(sec, key)) out = static_cast<U>(to_uint(sec + "." + key, *v));
    }
    void text(const std::string& sec, const std::string& key, std::string& out) const {
        if (auto v = get(sec, key)) out = *v;
    }
    void flag(const std::string& sec, const std::string& key, bool& out) const {
        if (auto v = get(sec, key)) out = to_bool(sec + "." + key, *v);
    }
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::string_view shape_name(Domain::Shape s) {
    switch (s) {
    case Domain::Shape::Rectangle: return "rectangle";
    case Domain::Shape::HalfPlane: return "half_plane";
    case Domain::Shape::Custom: return "custom";
    }
    return "custom";
}

template <class F>
auto rethrow_as_config(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const ParameterError& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

} // namespace

std::string_view to_string(ProblemType t) {
    switch (t) {
    case ProblemType::EllipticBvp: return "elliptic_bvp";
    case ProblemType::ParabolicBvp: return "parabolic_bvp";
    case ProblemType::EllipticObstacle: return "elliptic_obstacle";
    case ProblemType::ParabolicObstacle: return "parabolic_obstacle";
    }
    return "unknown";
}

ProblemType parse_problem_type(std::string_view s) {
    for (ProblemType t : {ProblemType::EllipticBvp, ProblemType::ParabolicBvp, ProblemType::EllipticObstacle,
                          ProblemType::ParabolicObstacle})
        if (s == to_string(t)) return t;
    throw ConfigError("unknown problem type '" + std::string(s) + "'");
}

BoundaryConditionMode ExperimentConfig::resolved_mode() const {
    return mode ? *mode : default_mode(feller_indices(params));
}

StoppingRule ExperimentConfig::resolved_rule() const { return rule ? *rule : default_rule(resolved_mode()); }

QueryPoint parse_point(std::string_view s) {
    std::vector<double> v;
    std::size_t start = 0;
    std::string text(s);
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string part = trim(std::string_view(text).substr(start, comma == std::string::npos
                                                                              ? std::string::npos
                                                                              : comma - start));
        v.push_back(to_double("point", part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (v.size() != 3) throw ConfigError("a point is 't,x,y', got '" + text + "'");
    return {v[0], v[1], v[2]};
}

ExperimentConfig parse_config(std::string_view text) {
    pt::ptree tree;
    try {
        std::istringstream is{std::string(text)};
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    const auto& known = known_keys();
    for (const auto& [sec, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ConfigError("key '" + sec + "' outside any section");
        const auto it = known.find(sec);
        if (it == known.end()) throw ConfigError("unknown section [" + sec + "]");
        for (const auto& [key, value] : body)
            if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + sec + "]");
    }

    const Reader r{tree};
    ExperimentConfig c;
    HestonParams& p = c.params;
    r.real("model", "kappa", p.kappa);
    r.real("model", "theta", p.theta);
    r.real("model", "sigma", p.sigma);
    r.real("model", "rho", p.rho);
    r.real("model", "r", p.r);
    r.real("model", "q", p.q);

    if (auto t = r.get("problem", "type")) c.type = parse_problem_type(*t);
    r.text("problem", "id", c.id);
    r.text("problem", "f", c.f);
    r.text("problem", "g", c.g);
    r.text("problem", "psi", c.psi);
    r.real("problem", "T", c.T);
    if (r.get("problem", "growth_C") || r.get("problem", "growth_M1") || r.get("problem", "growth_M2")) {
        GrowthBound g;
        r.real("problem", "growth_C", g.C);
        r.real("problem", "growth_M1", g.M1);
        r.real("problem", "growth_M2", g.M2);
        c.growth = g;
    }

    c.domain.shape = Domain::Shape::HalfPlane;
    if (auto s = r.get("domain", "shape")) {
        if (*s == "rectangle")
            c.domain.shape = Domain::Shape::Rectangle;
        else if (*s != "half_plane")
            throw ConfigError("domain.shape must be rectangle or half_plane, got '" + *s + "'");
    }
    if (c.domain.shape == Domain::Shape::Rectangle) {
        c.domain.x0 = -INFINITY;
        c.domain.x1 = INFINITY;
        c.domain.y1 = INFINITY;
        r.real("domain", "x0", c.domain.x0);
        r.real("domain", "x1", c.domain.x1);
        r.real("domain", "y1", c.domain.y1);
    } else if (r.get("domain", "x0") || r.get("domain", "x1") || r.get("domain", "y1")) {
        throw ConfigError("domain.x0/x1/y1 need shape = rectangle");
    }
    rethrow_as_config("domain", [&] {
        if (auto m = r.get("domain", "mode"); m && *m != "auto") c.mode = parse_mode(*m);
        if (auto s = r.get("domain", "rule"); s && *s != "auto") c.rule = parse_rule(*s);
        return 0;
    });
    rethrow_as_config("mc", [&] {
        if (auto s = r.get("mc", "scheme")) c.mc.scheme = parse_scheme(*s);
        return 0;
    });

    r.integer("mc", "n_paths", c.mc.n_paths);
    r.real("mc", "dt", c.mc.dt);
    r.integer("mc", "seed", c.mc.seed);
    r.integer("mc", "workers", c.mc.workers);
    r.real("mc", "T_max", c.mc.T_max);
    r.real("mc", "target_std_error", c.mc.target_std_error);
    r.integer("mc", "step_cap", c.mc.step_cap);

    r.integer("pde", "nx", c.grid.nx);
    r.integer("pde", "ny", c.grid.ny);
    r.real("pde", "x_min", c.grid.x_min);
    r.real("pde", "x_max", c.grid.x_max);
    r.real("pde", "y_max", c.grid.y_max);
    r.integer("pde", "nt", c.pde.nt);
    r.integer("pde", "rannacher", c.pde.rannacher);
    r.real("pde", "psor_omega", c.pde.psor_omega);
    r.real("pde", "psor_tol", c.pde.psor_tol);
    r.integer("pde", "psor_max_sweeps", c.pde.psor_max_sweeps);

    r.integer("lsmc", "n_train", c.lsmc.n_train);
    r.integer("lsmc", "dates_per_slab", c.lsmc.dates_per_slab);
    r.real("lsmc", "T_tilde", c.T_tilde);
    r.real("lsmc", "ridge", c.lsmc.ridge);
    r.flag("lsmc", "itm_only", c.lsmc.itm_only);

    r.integer("region", "nx", c.region_grid.nx);
    r.integer("region", "ny", c.region_grid.ny);
    r.real("region", "x_min", c.region_grid.x_min);
    r.real("region", "x_max", c.region_grid.x_max);
    r.real("region", "y_max", c.region_grid.y_max);
    r.integer("region", "max_sweeps", c.region.max_sweeps);
    r.real("region", "tolerance", c.region.tolerance);
    r.real("region", "band_sigma", c.region.band_sigma);
    r.integer("region", "final_paths", c.region.final_paths);

    if (auto list = r.get("points", "list")) {
        std::string all = *list;
        std::size_t start = 0;
        while (start < all.size()) {
            const auto semi = all.find(';', start);
            const std::string item = trim(std::string_view(all).substr(start, semi == std::string::npos
                                                                                ? std::string::npos
                                                                                : semi - start));
            if (!item.empty()) c.points.push_back(parse_point(item));
            if (semi == std::string::npos) break;
            start = semi + 1;
        }
    }

    r.real("compare", "z", c.tolerance.z);
    r.real("compare", "rel", c.tolerance.rel);
    r.flag("compare", "cf", c.compare_cf);
    r.integer("verify", "n_paths", c.verify.n_paths);
    r.integer("verify", "seed", c.verify.seed);
    r.integer("simulate", "n_traces", c.simulate.n_traces);
    r.real("simulate", "horizon", c.simulate.horizon);
    r.text("output", "dir", c.out_dir);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string canonical_config(const ExperimentConfig& c) {
    std::ostringstream o;
    const HestonParams& p = c.params;
    o << "[model]\n"
      << "kappa=" << num(p.kappa) << "\ntheta=" << num(p.theta) << "\nsigma=" << num(p.sigma) << "\nrho="
      << num(p.rho) << "\nr=" << num(p.r) << "\nq=" << num(p.q) << "\n\n";
    o << "[problem]\n"
      << "type=" << to_string(c.type) << "\nid=" << c.id << "\nf=" << c.f << "\ng=" << c.g << "\npsi=" << c.psi
      << "\nT=" << num(c.T) << '\n';
    if (c.growth)
        o << "growth_C=" << num(c.growth->C) << "\ngrowth_M1=" << num(c.growth->M1)
          << "\ngrowth_M2=" << num(c.growth->M2) << '\n';
    o << "\n[domain]\nshape=" << shape_name(c.domain.shape) << '\n';
    if (c.domain.shape == Domain::Shape::Rectangle)
        o << "x0=" << num(c.domain.x0) << "\nx1=" << num(c.domain.x1) << "\ny1=" << num(c.domain.y1) << '\n';
    o << "mode=" << (c.mode ? std::string(to_string(*c.mode)) : "auto")
      << "\nrule=" << (c.rule ? std::string(to_string(*c.rule)) : "auto") << "\n\n";
    o << "[mc]\n"
      << "n_paths=" << c.mc.n_paths << "\ndt=" << num(c.mc.dt) << "\nscheme=" << to_string(c.mc.scheme)
      << "\nseed=" << c.mc.seed << "\nworkers=" << c.mc.workers << "\nT_max=" << num(c.mc.T_max)
      << "\ntarget_std_error=" << num(c.mc.target_std_error) << "\nstep_cap=" << c.mc.step_cap << "\n\n";
    o << "[pde]\n"
      << "nx=" << c.grid.nx << "\nny=" << c.grid.ny << "\nx_min=" << num(c.grid.x_min) << "\nx_max="
      << num(c.grid.x_max) << "\ny_max=" << num(c.grid.y_max) << "\nnt=" << c.pde.nt << "\nrannacher="
      << c.pde.rannacher << "\npsor_omega=" << num(c.pde.psor_omega) << "\npsor_tol=" << num(c.pde.psor_tol)
      << "\npsor_max_sweeps=" << c.pde.psor_max_sweeps << "\n\n";
    o << "[lsmc]\n"
      << "n_train=" << c.lsmc.n_train << "\ndates_per_slab=" << c.lsmc.dates_per_slab
      << "\nT_tilde=" << num(c.T_tilde) << "\nridge=" << num(c.lsmc.ridge)
      << "\nitm_only=" << (c.lsmc.itm_only ? "true" : "false") << "\n\n";
    o << "[region]\n"
      << "nx=" << c.region_grid.nx << "\nny=" << c.region_grid.ny << "\nx_min=" << num(c.region_grid.x_min)
      << "\nx_max=" << num(c.region_grid.x_max) << "\ny_max=" << num(c.region_grid.y_max)
      << "\nmax_sweeps=" << c.region.max_sweeps << "\ntolerance=" << num(c.region.tolerance)
      << "\nband_sigma=" << num(c.region.band_sigma) << "\nfinal_paths=" << c.region.final_paths << "\n\n";
    o << "[points]\nlist=";
    for (std::size_t i = 0; i < c.points.size(); ++i)
        o << (i ? "; " : "") << num(c.points[i].t) << ',' << num(c.points[i].x) << ',' << num(c.points[i].y);
    o << "\n\n[compare]\nz=" << num(c.tolerance.z) << "\nrel=" << num(c.tolerance.rel)
      << "\ncf=" << (c.compare_cf ? "true" : "false") << "\n\n";
    o << "[verify]\nn_paths=" << c.verify.n_paths << "\nseed=" << c.verify.seed << "\n\n";
    o << "[simulate]\nn_traces=" << c.simulate.n_traces << "\nhorizon=" << num(c.simulate.horizon) << "\n\n";
    o << "[output]\ndir=" << c.out_dir << '\n';
    return o.str();
}

Domain build_domain(const ExperimentConfig& c) {
    return rethrow_as_config("domain", [&] {
        return c.domain.shape == Domain::Shape::Rectangle ? Domain::rectangle(c.domain.x0, c.domain.x1, c.domain.y1)
                                                          : Domain::half_plane();
    });
}

ProblemData build_data(const ExperimentConfig& c) {
    return rethrow_as_config("problem data", [&] {
        ProblemData d;
        d.id = c.id;
        GrowthBound combined{0.0, 0.0, 0.0};
        bool bounded = true;
        auto add = [&](const std::string& spec, DataFn& slot) {
            if (spec.empty()) return;
            CatalogEntry e = make_catalog(spec);
            slot = e.fn;
            if (!e.growth) {
                bounded = false;
                return;
            }
            combined.C += e.growth->C;
            combined.M1 = std::max(combined.M1, e.growth->M1);
            combined.M2 = std::max(combined.M2, e.growth->M2);
        };
        add(c.g, d.g);
        add(c.f, d.f);
        if (c.obstacle()) add(c.psi, d.psi);
        if (c.growth)
            d.growth = *c.growth;
        else if (bounded)
            d.growth = combined;
        else
            throw ConfigError("problem data has no catalog growth bound; set growth_C, growth_M1, growth_M2");
        return d;
    });
}

ParabolicProblem build_parabolic(const ExperimentConfig& c) {
    ParabolicProblem prob;
    prob.domain = build_domain(c);
    prob.T = c.T;
    prob.mode = c.resolved_mode();
    return prob;
}

void validate_config(const ExperimentConfig& c) {
    rethrow_as_config("model", [&] {
        c.params.validate();
        return 0;
    });
    const FellerIndices idx = feller_indices(c.params);
    const BoundaryConditionMode mode = c.resolved_mode();
    const StoppingRule rule = c.resolved_rule();
    if (mode == BoundaryConditionMode::FullBoundary && idx.beta >= 1.0)
        throw ConfigError("mode full_boundary needs beta < 1 (zero is an entrance boundary at beta = " +
                          num(idx.beta) + ")");
    if (mode == BoundaryConditionMode::FullBoundary && rule != StoppingRule::Tau)
        throw ConfigError("mode full_boundary pairs with rule tau");
    if (mode == BoundaryConditionMode::Gamma1Only && rule != StoppingRule::Nu && idx.beta < 1.0)
        throw ConfigError("rule tau with mode gamma1_only needs beta >= 1");
    if (c.obstacle() && c.psi.empty()) throw ConfigError("obstacle problems need problem.psi");
    if (!c.obstacle() && !c.psi.empty()) throw ConfigError("problem.psi is only used by obstacle problems");
    if (c.g.empty()) throw ConfigError("problem.g is required");
    if (!c.elliptic() && !(c.T > 0.0)) throw ConfigError("problem.T must be positive");
    if (!(c.mc.dt > 0.0)) throw ConfigError("mc.dt must be positive");
    if (c.mc.n_paths < 2) throw ConfigError("mc.n_paths must be at least 2");

    const ProblemData d = build_data(c);
    const Domain dom = build_domain(c);
    const ProblemKind kind = c.elliptic() ? ProblemKind::Elliptic : ProblemKind::Parabolic;
    if (const ValidationResult v = validate_growth(d.growth, c.params, kind); !v)
        throw ConfigError("growth bound: " + v.message);
    if (c.elliptic() && !(c.params.r > 0.0)) throw ConfigError("elliptic problems need r > 0");

    for (const QueryPoint& q : c.points) {
        if (q.y < 0.0) throw ConfigError("point with y < 0");
        const PointClass pc = classify_point(dom, q.x, q.y);
        if (pc == PointClass::Exterior) throw ConfigError("point outside the domain");
        if (!c.elliptic() && (q.t < 0.0 || q.t > c.T)) throw ConfigError("point time outside [0, T]");
        if (c.elliptic() && q.t != 0.0) throw ConfigError("elliptic points use t = 0");
    }

    if (!c.obstacle()) return;
    rethrow_as_config("compatibility", [&] {
        if (!c.elliptic()) {
            const ParabolicProblem prob = build_parabolic(c);
            for (const QueryPoint& q : c.points) check_compatibility(d, prob, q.x, q.y);
            if (c.points.empty()) check_compatibility(d, prob, 0.0, c.params.theta);
            return 0;
        }
        // Elliptic: psi <= g on the stopping locus.
        auto check = [&](double x, double y) {
            if (!on_locus(classify_point(dom, x, y), mode)) return;
            if (d.psi(0.0, x, y) > d.g(0.0, x, y) + 1e-12 * std::max(1.0, std::abs(d.g(0.0, x, y))))
                throw ConfigError("obstacle exceeds the boundary data at (" + num(x) + ", " + num(y) + ")");
        };
        const double xs = std::isfinite(dom.x0()) ? dom.x0() : -3.0;
        const double xe = std::isfinite(dom.x1()) ? dom.x1() : 3.0;
        const double ye = std::isfinite(dom.y1()) ? dom.y1() : 2.0;
        for (int i = 0; i <= 40; ++i) {
            const double x = xs + (xe - xs) * i / 40.0;
            check(x, 0.0);
            check(x, ye);
        }
        for (int j = 0; j <= 40; ++j) {
            check(xs, ye * j / 40.0);
            check(xe, ye * j / 40.0);
        }
        return 0;
    });
}

} // namespace heston
