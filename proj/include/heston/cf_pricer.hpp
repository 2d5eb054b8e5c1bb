#pragma once

#include "heston/model.hpp"

#include <complex>

namespace heston {

// E[exp(i u X(T))] for X(0) = x, Y(0) = y, in the rotation-free form of
// Albrecher et al. (2007).
std::complex<double> heston_cf(const HestonParams& p, std::complex<double> u, double T, double x, double y);

// European prices on S = e^x from Gil-Pelaez inversion; the put comes from parity.
double heston_call(const HestonParams& p, double K, double T, double x, double y);
double heston_put(const HestonParams& p, double K, double T, double x, double y);

// Black-Scholes with continuous dividend yield q; used as a sanity oracle.
double black_scholes_put(double S, double K, double T, double r, double q, double vol);

} // namespace heston
