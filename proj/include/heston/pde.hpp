#pragma once

#include "heston/domain.hpp"
#include "heston/feynman_kac.hpp"
#include "heston/model.hpp"
#include "heston/problem.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace heston {

// Uniform grid on [x_min, x_max] x [0, y_max]; node (i, j) has index j * nx + i.
struct Grid2D {
    std::size_t nx = 101;
    std::size_t ny = 51;
    double x_min = -1.0;
    double x_max = 1.0;
    double y_max = 1.0;

    void validate() const;
    double hx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
    double hy() const { return y_max / static_cast<double>(ny - 1); }
    double x(std::size_t i) const { return x_min + hx() * static_cast<double>(i); }
    double y(std::size_t j) const { return hy() * static_cast<double>(j); }
    std::size_t index(std::size_t i, std::size_t j) const { return j * nx + i; }
    std::size_t size() const { return nx * ny; }
};

struct Field {
    Grid2D grid;
    double t = 0.0;
    std::vector<double> u;
    std::vector<std::uint8_t> active; // obstacle solves: 1 where u = psi
    std::vector<std::string> warnings;

    double at_node(std::size_t i, std::size_t j) const { return u[grid.index(i, j)]; }
    // Biquadratic interpolation on the nearest 3 x 3 nodes.
    double at(double x, double y) const;
};

struct PdeSettings {
    std::size_t nt = 200;          // time steps over [t, T]
    std::size_t rannacher = 2;     // leading implicit steps, each split in two halves
    double solve_tol = 1e-10;      // relative residual of the linear solves
    double psor_omega = 1.2;
    std::size_t psor_max_sweeps = 50000;
    double psor_tol = 1e-9;        // max update per sweep
};

// Domain edges at finite x0, x1, y1 must coincide with grid edges; grid edges
// strictly inside an unbounded direction are far-field rows (linear extrapolation).
// At y = 0, Gamma1Only closes the system with the degenerate first-order row;
// FullBoundary imposes g.
Field solve_elliptic(const Grid2D& grid, const HestonParams& p, const ProblemData& data, const Domain& domain,
                     BoundaryConditionMode mode, const PdeSettings& s = {});

// Crank-Nicolson backward from T with Rannacher start; one field per requested
// time (times within [0, T], any order).
std::vector<Field> solve_parabolic(const Grid2D& grid, const HestonParams& p, const ProblemData& data,
                                   const ParabolicProblem& prob, const std::vector<double>& times,
                                   const PdeSettings& s = {});

struct ObstacleSolution {
    std::vector<Field> fields;
    std::size_t total_sweeps = 0;
    std::size_t max_sweeps = 0;
    // max over nodes (and steps) of |min(row residual / diagonal, u - psi)|.
    double complementarity = 0.0;
};

// min{A u - f, u - psi} = 0 by projected SOR.
ObstacleSolution solve_obstacle_elliptic(const Grid2D& grid, const HestonParams& p, const ProblemData& data,
                                         const Domain& domain, BoundaryConditionMode mode,
                                         const PdeSettings& s = {});

// min{-u_t + A u - f, u - psi} = 0, u(T) = g(T); PSOR at every time step.
ObstacleSolution solve_obstacle_parabolic(const Grid2D& grid, const HestonParams& p, const ProblemData& data,
                                          const ParabolicProblem& prob, const std::vector<double>& times,
                                          const PdeSettings& s = {});

// CSV: x,y,value[,active]
void write_field_csv(std::ostream& os, const Field& f);
// {"nx":..,"ny":..,"x_min":..,"x_max":..,"y_max":..,"hx":..,"hy":..,"t":..}
std::string grid_metadata_json(const Field& f);

} // namespace heston
