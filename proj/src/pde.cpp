#include "heston/pde.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace heston {

void Grid2D::validate() const {
    if (nx < 3 || ny < 3) throw ParameterError("grid needs nx >= 3 and ny >= 3");
    if (!(x_min < x_max) || !std::isfinite(x_min) || !std::isfinite(x_max))
        throw ParameterError("grid needs finite x_min < x_max");
    if (!(y_max > 0.0) || !std::isfinite(y_max)) throw ParameterError("grid needs finite y_max > 0");
}

double Field::at(double x, double y) const {
    const double fx = (x - grid.x_min) / grid.hx();
    const double fy = y / grid.hy();
    if (fx < -1e-9 || fx > static_cast<double>(grid.nx - 1) + 1e-9 || fy < -1e-9 ||
        fy > static_cast<double>(grid.ny - 1) + 1e-9)
        throw ParameterError("interpolation point outside the grid");
    const auto ci = static_cast<std::size_t>(std::clamp<long>(std::lround(fx), 1, static_cast<long>(grid.nx) - 2));
    const auto cj = static_cast<std::size_t>(std::clamp<long>(std::lround(fy), 1, static_cast<long>(grid.ny) - 2));
    auto weights = [](double s, double w[3]) {
        // Lagrange basis on nodes -1, 0, 1.
        w[0] = 0.5 * s * (s - 1.0);
        w[1] = 1.0 - s * s;
        w[2] = 0.5 * s * (s + 1.0);
    };
    double wx[3];
    double wy[3];
    weights(fx - static_cast<double>(ci), wx);
    weights(fy - static_cast<double>(cj), wy);
    double v = 0.0;
    for (int b = 0; b < 3; ++b)
        for (int a = 0; a < 3; ++a) v += wx[a] * wy[b] * at_node(ci + a - 1, cj + b - 1);
    return v;
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

enum class Row : std::uint8_t { Pde, Dirichlet, FarX, FarY };

bool same_edge(double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a)); }

struct Layout {
    Grid2D g;
    std::vector<Row> kind;
    std::vector<std::string> warnings;
};

Layout make_layout(const Grid2D& grid, const HestonParams& p, const Domain& domain, BoundaryConditionMode mode) {
    grid.validate();
    p.validate();
    Layout lay{grid, std::vector<Row>(grid.size(), Row::Pde), {}};
    bool left = false;
    bool right = false;
    bool top = false;
    switch (domain.shape()) {
    case Domain::Shape::HalfPlane: break;
    case Domain::Shape::Rectangle: {
        auto edge = [](double domain_edge, double grid_edge) {
            if (!std::isfinite(domain_edge)) return false;
            if (same_edge(domain_edge, grid_edge)) return true;
            std::ostringstream os;
            os << "grid edge " << grid_edge << " does not match the domain edge " << domain_edge;
            throw ParameterError(os.str());
        };
        left = edge(domain.x0(), grid.x_min);
        right = edge(domain.x1(), grid.x_max);
        top = edge(domain.y1(), grid.y_max);
        break;
    }
    case Domain::Shape::Custom: throw ParameterError("the finite-difference oracle supports rectangles and the half-plane");
    }
    const FellerIndices idx = feller_indices(p);
    if (mode == BoundaryConditionMode::Gamma1Only && idx.beta < 1.0)
        lay.warnings.emplace_back("beta < 1 with gamma1_only: degenerate-row closure at y = 0");
    if (mode == BoundaryConditionMode::FullBoundary && idx.beta >= 1.0)
        lay.warnings.emplace_back("beta >= 1 with full_boundary: data imposed on an entrance boundary");

    for (std::size_t j = 0; j < grid.ny; ++j) {
        for (std::size_t i = 0; i < grid.nx; ++i) {
            Row& k = lay.kind[grid.index(i, j)];
            if (i == 0)
                k = left ? Row::Dirichlet : Row::FarX;
            else if (i == grid.nx - 1)
                k = right ? Row::Dirichlet : Row::FarX;
            else if (j == grid.ny - 1)
                k = top ? Row::Dirichlet : Row::FarY;
            else if (j == 0)
                k = mode == BoundaryConditionMode::FullBoundary ? Row::Dirichlet : Row::Pde;
        }
    }
    return lay;
}

// L holds the discrete A on PDE rows (zero elsewhere); B the algebraic rows.
struct Operator {
    SpMat L;
    SpMat B;
    SpMat P; // identity on PDE rows
};

Operator assemble(const Layout& lay, const HestonParams& p) {
    const Grid2D& g = lay.g;
    const double hx = g.hx();
    const double hy = g.hy();
    std::vector<Eigen::Triplet<double>> lt;
    std::vector<Eigen::Triplet<double>> bt;
    std::vector<Eigen::Triplet<double>> pt;
    lt.reserve(g.size() * 9);
    for (std::size_t j = 0; j < g.ny; ++j) {
        for (std::size_t i = 0; i < g.nx; ++i) {
            const auto row = static_cast<int>(g.index(i, j));
            auto L = [&](std::size_t ii, std::size_t jj, double v) {
                if (v != 0.0) lt.emplace_back(row, static_cast<int>(g.index(ii, jj)), v);
            };
            auto B = [&](std::size_t ii, std::size_t jj, double v) {
                bt.emplace_back(row, static_cast<int>(g.index(ii, jj)), v);
            };
            switch (lay.kind[row]) {
            case Row::Dirichlet: B(i, j, 1.0); continue;
            case Row::FarX: {
                const std::size_t a = i == 0 ? 1 : i - 1;
                const std::size_t b = i == 0 ? 2 : i - 2;
                B(i, j, 1.0);
                B(a, j, -2.0);
                B(b, j, 1.0);
                continue;
            }
            case Row::FarY:
                B(i, j, 1.0);
                B(i, j - 1, -2.0);
                B(i, j - 2, 1.0);
                continue;
            case Row::Pde: break;
            }
            pt.emplace_back(row, row, 1.0);
            double diag = p.r;
            const double bx = p.r - p.q - 0.5 * g.y(j);
            if (j == 0) {
                // r u - (r - q) u_x - kappa theta u_y, one-sided in the drift direction
                if (bx > 0.0) {
                    diag += bx / hx;
                    L(i + 1, j, -bx / hx);
                } else if (bx < 0.0) {
                    diag -= bx / hx;
                    L(i - 1, j, bx / hx);
                }
                const double by = p.kappa * p.theta;
                diag += by / hy;
                L(i, j + 1, -by / hy);
                L(i, j, diag);
                continue;
            }
            const double y = g.y(j);
            const double ax = 0.5 * y;
            const double ay = 0.5 * p.sigma * p.sigma * y;
            const double cxy = p.rho * p.sigma * y;
            const double by = p.kappa * (p.theta - y);
            double xp = -ax / (hx * hx);
            double xm = -ax / (hx * hx);
            double yp = -ay / (hy * hy);
            double ym = -ay / (hy * hy);
            diag += 2.0 * ax / (hx * hx) + 2.0 * ay / (hy * hy);
            // -b u_x: central while the cell Peclet number allows, upwind otherwise
            if (std::abs(bx) * hx <= 2.0 * ax) {
                xp -= bx / (2.0 * hx);
                xm += bx / (2.0 * hx);
            } else if (bx > 0.0) {
                diag += bx / hx;
                xp -= bx / hx;
            } else {
                diag -= bx / hx;
                xm += bx / hx;
            }
            if (std::abs(by) * hy <= 2.0 * ay) {
                yp -= by / (2.0 * hy);
                ym += by / (2.0 * hy);
            } else if (by > 0.0) {
                diag += by / hy;
                yp -= by / hy;
            } else {
                diag -= by / hy;
                ym += by / hy;
            }
            L(i + 1, j, xp);
            L(i - 1, j, xm);
            L(i, j + 1, yp);
            L(i, j - 1, ym);
            const double m = cxy / (4.0 * hx * hy);
            L(i + 1, j + 1, -m);
            L(i - 1, j - 1, -m);
            L(i + 1, j - 1, m);
            L(i - 1, j + 1, m);
            L(i, j, diag);
        }
    }
    const auto n = static_cast<int>(g.size());
    Operator op{SpMat(n, n), SpMat(n, n), SpMat(n, n)};
    op.L.setFromTriplets(lt.begin(), lt.end());
    op.B.setFromTriplets(bt.begin(), bt.end());
    op.P.setFromTriplets(pt.begin(), pt.end());
    return op;
}

double eval(const DataFn& fn, double t, double x, double y) { return fn ? fn(t, x, y) : 0.0; }

// Source on PDE rows, data on Dirichlet rows, 0 on far-field rows.
void data_vectors(const Layout& lay, const ProblemData& d, double t, Vec& f, Vec& bc) {
    const Grid2D& g = lay.g;
    f = Vec::Zero(static_cast<Eigen::Index>(g.size()));
    bc = Vec::Zero(static_cast<Eigen::Index>(g.size()));
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i) {
            const std::size_t k = g.index(i, j);
            if (lay.kind[k] == Row::Pde)
                f[k] = eval(d.f, t, g.x(i), g.y(j));
            else if (lay.kind[k] == Row::Dirichlet)
                bc[k] = eval(d.g, t, g.x(i), g.y(j));
        }
}

Vec grid_values(const Grid2D& g, const DataFn& fn, double t) {
    Vec v(static_cast<Eigen::Index>(g.size()));
    for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i) v[g.index(i, j)] = eval(fn, t, g.x(i), g.y(j));
    return v;
}

class Solver {
public:
    Solver(const SpMat& M, double tol) : M_(M), tol_(tol) {
        lu_.analyzePattern(M_);
        lu_.factorize(M_);
        if (lu_.info() != Eigen::Success) throw NumericalError("sparse LU factorization failed");
    }

    Vec solve(const Vec& b) const {
        Vec u = lu_.solve(b);
        const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
        for (int it = 0; it < 5; ++it) {
            const Vec r = b - M_ * u;
            if (r.lpNorm<Eigen::Infinity>() <= tol_ * scale) return u;
            u += lu_.solve(r);
        }
        const double res = (b - M_ * u).lpNorm<Eigen::Infinity>() / scale;
        if (res > tol_) {
            std::ostringstream os;
            os << "linear solve stalled at relative residual " << res;
            throw NumericalError(os.str());
        }
        return u;
    }

private:
    SpMat M_;
    double tol_;
    Eigen::SparseLU<SpMat> lu_;
};

std::size_t psor(const RowMat& M, const Vec& b, const Vec& psi, const std::vector<Row>& kind, Vec& u,
                 const PdeSettings& s) {
    const auto n = M.outerSize();
    std::vector<double> diag(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) diag[i] = M.coeff(i, i);
    for (std::size_t sweep = 1; sweep <= s.psor_max_sweeps; ++sweep) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = b[i];
            for (RowMat::InnerIterator it(M, i); it; ++it)
                if (it.col() != i) acc -= it.value() * u[it.col()];
            double next = u[i] + s.psor_omega * (acc / diag[i] - u[i]);
            if (kind[i] != Row::Dirichlet) next = std::max(next, psi[i]);
            worst = std::max(worst, std::abs(next - u[i]));
            u[i] = next;
        }
        if (worst < s.psor_tol) return sweep;
    }
    std::ostringstream os;
    os << "PSOR did not converge in " << s.psor_max_sweeps << " sweeps";
    throw NumericalError(os.str());
}

double complementarity(const RowMat& M, const Vec& b, const Vec& psi, const std::vector<Row>& kind, const Vec& u,
                       std::vector<std::uint8_t>& active) {
    const Vec r = M * u - b;
    double worst = 0.0;
    active.assign(static_cast<std::size_t>(u.size()), 0);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (kind[i] == Row::Dirichlet) continue;
        const double c = std::min(r[i] / M.coeff(i, i), u[i] - psi[i]);
        worst = std::max(worst, std::abs(c));
        active[i] = u[i] - psi[i] <= 1e-9 * std::max(1.0, std::abs(psi[i])) ? 1 : 0;
    }
    return worst;
}

Field make_field(const Layout& lay, double t, const Vec& u) {
    Field f;
    f.grid = lay.g;
    f.t = t;
    f.u.assign(u.data(), u.data() + u.size());
    f.warnings = lay.warnings;
    return f;
}

// Backward time marching shared by the linear and obstacle parabolic solves.
template <class StepSolve>
std::vector<Field> march(const Layout& lay, const Operator& op, const ProblemData& data, const ParabolicProblem& prob,
                         const std::vector<double>& times, const PdeSettings& s, StepSolve&& step_solve) {
    if (times.empty()) throw ParameterError("no output times requested");
    for (double t : times)
        if (t < 0.0 || t > prob.T) throw ParameterError("output times must lie in [0, T]");
    if (s.nt == 0) throw ParameterError("nt must be positive");
    const double t_min = *std::min_element(times.begin(), times.end());

    // Knots: uniform steps plus the requested times.
    std::vector<double> knots;
    for (std::size_t k = 0; k <= s.nt; ++k)
        knots.push_back(prob.T - (prob.T - t_min) * static_cast<double>(k) / static_cast<double>(s.nt));
    for (double t : times) knots.push_back(t);
    std::sort(knots.begin(), knots.end(), std::greater<>());
    knots.erase(std::unique(knots.begin(), knots.end(),
                            [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a)); }),
                knots.end());

    Vec u = grid_values(lay.g, data.g, prob.T);
    std::map<double, Field> snap;
    auto record = [&](double t) {
        for (double want : times)
            if (std::abs(want - t) <= 1e-12 * (1.0 + std::abs(t))) snap.emplace(want, make_field(lay, want, u));
    };
    record(prob.T);

    Vec f_old;
    Vec bc;
    data_vectors(lay, data, prob.T, f_old, bc);
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double t_old = knots[k];
        const double t_new = knots[k + 1];
        const double dt = t_old - t_new;
        if (k < s.rannacher) {
            // two implicit half steps
            const double t_mid = t_old - 0.5 * dt;
            Vec f_mid;
            data_vectors(lay, data, t_mid, f_mid, bc);
            u = step_solve(0.5 * dt, 1.0, op.P * u + 0.5 * dt * f_mid + bc, t_mid, u);
            Vec f_new;
            data_vectors(lay, data, t_new, f_new, bc);
            u = step_solve(0.5 * dt, 1.0, op.P * u + 0.5 * dt * f_new + bc, t_new, u);
            f_old = f_new;
        } else {
            Vec f_new;
            data_vectors(lay, data, t_new, f_new, bc);
            const Vec rhs = op.P * u - 0.5 * dt * (op.L * u) + 0.5 * dt * (f_old + f_new) + bc;
            u = step_solve(dt, 0.5, rhs, t_new, u);
            f_old = f_new;
        }
        record(t_new);
    }
    std::vector<Field> out;
    for (double t : times) out.push_back(snap.at(t));
    return out;
}

} // namespace

Field solve_elliptic(const Grid2D& grid, const HestonParams& p, const ProblemData& data, const Domain& domain,
                     BoundaryConditionMode mode, const PdeSettings& s) {
    const Layout lay = make_layout(grid, p, domain, mode);
    const Operator op = assemble(lay, p);
    Vec f;
    Vec bc;
    data_vectors(lay, data, 0.0, f, bc);
    const Solver solver(op.L + op.B, s.solve_tol);
    return make_field(lay, 0.0, solver.solve(f + bc));
}

std::vector<Field> solve_parabolic(const Grid2D& grid, const HestonParams& p, const ProblemData& data,
                                   const ParabolicProblem& prob, const std::vector<double>& times,
                                   const PdeSettings& s) {
    if (!(prob.T > 0.0)) throw ParameterError("terminal time must be positive");
    const Layout lay = make_layout(grid, p, prob.domain, prob.mode);
    const Operator op = assemble(lay, p);
    std::map<std::pair<double, double>, std::unique_ptr<Solver>> cache;
    auto step = [&](double dt, double weight, const Vec& rhs, double, const Vec&) {
        auto& slot = cache[{dt, weight}];
        if (!slot) slot = std::make_unique<Solver>(SpMat(op.P + (weight * dt) * op.L + op.B), s.solve_tol);
        return slot->solve(rhs);
    };
    return march(lay, op, data, prob, times, s, step);
}

ObstacleSolution solve_obstacle_elliptic(const Grid2D& grid, const HestonParams& p, const ProblemData& data,
                                         const Domain& domain, BoundaryConditionMode mode, const PdeSettings& s) {
    if (!data.has_obstacle()) throw ParameterError("obstacle solve needs psi");
    const Layout lay = make_layout(grid, p, domain, mode);
    const Operator op = assemble(lay, p);
    Vec f;
    Vec bc;
    data_vectors(lay, data, 0.0, f, bc);
    const SpMat M = op.L + op.B;
    const RowMat Mr(M);
    const Vec b = f + bc;
    const Vec psi = grid_values(lay.g, data.psi, 0.0);
    Vec u = Solver(M, s.solve_tol).solve(b).cwiseMax(psi);
    ObstacleSolution out;
    out.total_sweeps = out.max_sweeps = psor(Mr, b, psi, lay.kind, u, s);
    Field field = make_field(lay, 0.0, u);
    out.complementarity = complementarity(Mr, b, psi, lay.kind, u, field.active);
    out.fields.push_back(std::move(field));
    return out;
}

ObstacleSolution solve_obstacle_parabolic(const Grid2D& grid, const HestonParams& p, const ProblemData& data,
                                          const ParabolicProblem& prob, const std::vector<double>& times,
                                          const PdeSettings& s) {
    if (!data.has_obstacle()) throw ParameterError("obstacle solve needs psi");
    if (!(prob.T > 0.0)) throw ParameterError("terminal time must be positive");
    const Layout lay = make_layout(grid, p, prob.domain, prob.mode);
    const Operator op = assemble(lay, p);
    ObstacleSolution out;
    std::map<std::pair<double, double>, RowMat> cache;
    std::map<double, std::vector<std::uint8_t>> active_at;
    auto step = [&](double dt, double weight, const Vec& rhs, double t_new, const Vec& u_old) {
        auto it = cache.find({dt, weight});
        if (it == cache.end()) it = cache.emplace(std::make_pair(dt, weight), RowMat(op.P + (weight * dt) * op.L + op.B)).first;
        const RowMat& M = it->second;
        const Vec psi = grid_values(lay.g, data.psi, t_new);
        Vec u = u_old.cwiseMax(psi);
        const std::size_t sweeps = psor(M, rhs, psi, lay.kind, u, s);
        out.total_sweeps += sweeps;
        out.max_sweeps = std::max(out.max_sweeps, sweeps);
        std::vector<std::uint8_t> active;
        out.complementarity = std::max(out.complementarity, complementarity(M, rhs, psi, lay.kind, u, active));
        active_at[t_new] = std::move(active);
        return u;
    };
    out.fields = march(lay, op, data, prob, times, s, step);
    const Vec psi_T = grid_values(lay.g, data.psi, prob.T);
    for (Field& f : out.fields) {
        auto it = active_at.find(f.t);
        if (it != active_at.end()) {
            f.active = it->second;
        } else {
            f.active.assign(f.u.size(), 0);
            for (std::size_t k = 0; k < f.u.size(); ++k) f.active[k] = f.u[k] - psi_T[k] <= 1e-9 ? 1 : 0;
        }
    }
    return out;
}

void write_field_csv(std::ostream& os, const Field& f) {
    std::ostringstream line;
    line << std::setprecision(17);
    line << (f.active.empty() ? "x,y,value\n" : "x,y,value,active\n");
    for (std::size_t j = 0; j < f.grid.ny; ++j)
        for (std::size_t i = 0; i < f.grid.nx; ++i) {
            line << f.grid.x(i) << ',' << f.grid.y(j) << ',' << f.at_node(i, j);
            if (!f.active.empty()) line << ',' << static_cast<int>(f.active[f.grid.index(i, j)]);
            line << '\n';
        }
    os << line.str();
}

std::string grid_metadata_json(const Field& f) {
    const nlohmann::ordered_json j = {{"nx", f.grid.nx},       {"ny", f.grid.ny},       {"x_min", f.grid.x_min},
                                      {"x_max", f.grid.x_max}, {"y_max", f.grid.y_max}, {"hx", f.grid.hx()},
                                      {"hy", f.grid.hy()},     {"t", f.t}};
    return j.dump();
}

} // namespace heston
