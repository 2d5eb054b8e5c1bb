#include "heston/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    using namespace heston;

    CLI::App app{"Feynman-Kac Monte Carlo and PDE oracles for the Heston model"};
    app.require_subcommand(1);

    struct Args {
        std::string config;
        std::uint64_t seed = 0;
        unsigned workers = 0;
        std::string out;
        std::vector<std::string> points;
    } args;

    const std::pair<Subcommand, const char*> commands[] = {
        {Subcommand::Simulate, "Write sample paths of (X, Y)"},
        {Subcommand::PriceBvp, "Monte Carlo value of an elliptic or parabolic boundary value problem"},
        {Subcommand::PriceObstacle, "Optimal stopping value by regression or exercise-region iteration"},
        {Subcommand::OraclePde, "Finite-difference solution on the configured grid"},
        {Subcommand::Verify, "Statistical diagnostics of the model properties"},
        {Subcommand::Compare, "Monte Carlo against the PDE oracle (and the Fourier price when enabled)"},
    };
    std::vector<std::pair<Subcommand, CLI::App*>> subs;
    for (const auto& [cmd, help] : commands) {
        CLI::App* sub = app.add_subcommand(std::string(to_string(cmd)), help);
        sub->add_option("--config", args.config, "Configuration file (INI)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", args.seed, "Seed of the Monte Carlo and diagnostic streams");
        sub->add_option("--workers", args.workers, "Worker threads (results do not depend on it)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", args.out, "Output directory");
        sub->add_option("--point", args.points, "Query point t,x,y (repeatable)");
        subs.emplace_back(cmd, sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    Overrides o;
    for (const auto& [cmd, sub] : subs) {
        if (!sub->parsed()) continue;
        if (sub->count("--seed")) o.seed = args.seed;
        if (sub->count("--workers")) o.workers = args.workers;
        if (sub->count("--out")) o.out_dir = args.out;
        try {
            for (const std::string& p : args.points) o.points.push_back(parse_point(p));
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return kExitConfigError;
        }
        return run_guarded(cmd, args.config, o, std::cout, std::cerr);
    }
    return kExitConfigError;
}
