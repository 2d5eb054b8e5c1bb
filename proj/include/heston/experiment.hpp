#pragma once

#include "heston/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace heston {

enum class Subcommand { Simulate, PriceBvp, PriceObstacle, OraclePde, Verify, Compare };

std::string_view to_string(Subcommand c);
Subcommand parse_subcommand(std::string_view s);

inline constexpr int kExitOk = 0;
inline constexpr int kExitTestFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumerical = 3;

// Command-line values that take precedence over the file.
struct Overrides {
    std::optional<std::uint64_t> seed; // mc.seed and verify.seed
    std::optional<unsigned> workers;
    std::optional<std::string> out_dir;
    std::vector<QueryPoint> points; // non-empty: replaces points.list
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

// Runs one subcommand on a validated configuration and writes its artifacts to
// cfg.out_dir:
//   results.csv   problem_id,t,x,y,mean,std_error,n,bias_bound
//   summary.json  schema "heston-fk/summary/1": config, results, reports
//   meta.json     wall time, kernel ISA, workers (the only non-reproducible file)
// plus traces.csv (simulate), policy_<i>.json or region_<i>.json/.csv
// (price-obstacle), field.csv and grid.json (oracle-pde), diagnostics.csv
// (verify), comparison.csv (compare) and report.xml (verify, compare).
// One line per queried point goes to `log`. Returns kExitOk or kExitTestFailure;
// ConfigError, ParameterError and NumericalError propagate.
int run_subcommand(Subcommand cmd, const ExperimentConfig& cfg, std::ostream& log);

// Loads, overrides and validates the configuration, then runs. Exceptions map
// to exit codes: configuration and parameter errors 2, numerical failures 3.
int run_guarded(Subcommand cmd, const std::string& config_path, const Overrides& o, std::ostream& log,
                std::ostream& err);

} // namespace heston
