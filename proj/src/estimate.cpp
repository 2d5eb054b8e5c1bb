#include "heston/estimate.hpp"

#include "heston/model.hpp"

#include <cmath>
#include <limits>

namespace heston {

std::string_view to_string(ExitPortion p) {
    switch (p) {
    case ExitPortion::Gamma0: return "gamma0";
    case ExitPortion::Gamma1: return "gamma1";
    case ExitPortion::Terminal: return "terminal";
    case ExitPortion::Horizon: return "horizon";
    case ExitPortion::Stopped: return "stopped";
    }
    return "unknown";
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t h = v.size() / 2;
    return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

Estimate summarize(std::span<const double> samples) {
    Estimate e;
    e.n_paths = samples.size();
    if (samples.empty()) return e;
    const double n = static_cast<double>(samples.size());
    e.mean = pairwise_sum(samples) / n;
    if (!std::isfinite(e.mean)) throw NumericalError("non-finite Monte Carlo mean");
    std::vector<double> dev(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i] - e.mean;
        dev[i] = d * d;
    }
    const double var = samples.size() > 1 ? pairwise_sum(dev) / (n - 1.0) : 0.0;
    e.std_error = std::sqrt(var / n);
    e.ci95_lo = e.mean - 1.96 * e.std_error;
    e.ci95_hi = e.mean + 1.96 * e.std_error;
    return e;
}

Estimate summarize_difference(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ParameterError("paired samples differ in length");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return summarize(d);
}

double z_score(double a, double se_a, double b, double se_b) {
    const double diff = std::abs(a - b);
    const double se = std::sqrt(se_a * se_a + se_b * se_b);
    if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / se;
}

} // namespace heston
