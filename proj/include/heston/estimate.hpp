#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace heston {

// Pairwise summation; the association order depends only on the length.
double pairwise_sum(std::span<const double> v);

// Horizon: elliptic path truncated at T_max. Stopped: a stopping policy fired.
enum class ExitPortion { Gamma0 = 0, Gamma1 = 1, Terminal = 2, Horizon = 3, Stopped = 4 };
inline constexpr std::size_t kExitPortions = 5;

std::string_view to_string(ExitPortion p);

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t n_paths = 0;
    double ci95_lo = 0.0;
    double ci95_hi = 0.0;
    double bias_bound = 0.0; // dropped-tail bound from horizon truncation
    // Paths ending on each ExitPortion (index by enum value).
    std::array<std::uint64_t, kExitPortions> exits{};
};

// Mean and standard error of per-path samples, ordered by path index.
Estimate summarize(std::span<const double> samples);

// Estimate of E[a - b] from paired samples.
Estimate summarize_difference(std::span<const double> a, std::span<const double> b);

// |a - b| / sqrt(se_a^2 + se_b^2); 0 when both errors vanish and a == b.
double z_score(double a, double se_a, double b, double se_b);

} // namespace heston
