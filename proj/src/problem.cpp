#include "heston/problem.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace heston {

namespace {

std::vector<double> parse_args(std::string_view s) {
    std::vector<double> out;
    while (!s.empty()) {
        const std::size_t comma = s.find(',');
        std::string_view tok = s.substr(0, comma);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || ptr != tok.data() + tok.size())
            throw ParameterError("bad number '" + std::string(tok) + "' in data spec");
        out.push_back(v);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

void expect_args(const CatalogEntry& e, std::size_t n) {
    if (e.args.size() != n)
        throw ParameterError("data spec '" + e.name + "' takes " + std::to_string(n) + " arguments");
}

} // namespace

CatalogEntry make_catalog(std::string_view spec) {
    CatalogEntry e;
    const std::size_t colon = spec.find(':');
    e.name = std::string(spec.substr(0, colon));
    if (colon != std::string_view::npos) e.args = parse_args(spec.substr(colon + 1));
    const auto& a = e.args;

    if (e.name == "zero") {
        expect_args(e, 0);
        e.fn = [](double, double, double) { return 0.0; };
        e.growth = GrowthBound{1e-300, 0.0, 0.0};
    } else if (e.name == "constant") {
        expect_args(e, 1);
        const double c = a[0];
        e.fn = [c](double, double, double) { return c; };
        e.growth = GrowthBound{std::max(std::abs(c), 1e-300), 0.0, 0.0};
    } else if (e.name == "affine") {
        expect_args(e, 3);
        const double c0 = a[0], bx = a[1], by = a[2];
        e.fn = [c0, bx, by](double, double x, double y) { return c0 + bx * x + by * y; };
        if (bx == 0.0 && by == 0.0) e.growth = GrowthBound{std::max(std::abs(c0), 1e-300), 0.0, 0.0};
    } else if (e.name == "put") {
        expect_args(e, 1);
        const double K = a[0];
        if (!(K > 0.0)) throw ParameterError("put strike must be positive");
        e.fn = [K](double, double x, double) { return std::max(K - std::exp(x), 0.0); };
        e.growth = GrowthBound{K, 0.0, 0.0};
    } else if (e.name == "call") {
        expect_args(e, 1);
        const double K = a[0];
        if (!(K > 0.0)) throw ParameterError("call strike must be positive");
        e.fn = [K](double, double x, double) { return std::max(std::exp(x) - K, 0.0); };
        e.growth = GrowthBound{1.0, 0.0, 1.0};
    } else if (e.name == "down_and_out_put_continuous") {
        expect_args(e, 3);
        const double K = a[0], L = a[1], w = a[2];
        if (!(K > 0.0) || !(L > 0.0) || !(w > 0.0))
            throw ParameterError("down_and_out_put_continuous needs K, L, w > 0");
        const double xb = std::log(L);
        e.fn = [K, xb, w](double, double x, double) {
            const double ramp = std::clamp((x - xb) / w, 0.0, 1.0);
            return std::max(K - std::exp(x), 0.0) * ramp;
        };
        e.growth = GrowthBound{K, 0.0, 0.0};
    } else if (e.name == "bump") {
        expect_args(e, 4);
        const double amp = a[0], xc = a[1], yc = a[2], w = a[3];
        if (!(w > 0.0)) throw ParameterError("bump width must be positive");
        e.fn = [amp, xc, yc, w](double, double x, double y) {
            const double dx = x - xc, dy = y - yc;
            return amp * std::exp(-(dx * dx + dy * dy) / (2.0 * w * w));
        };
        e.growth = GrowthBound{std::max(std::abs(amp), 1e-300), 0.0, 0.0};
    } else {
        throw ParameterError("unknown data spec '" + e.name + "'");
    }
    return e;
}

std::string canonical_spec(const CatalogEntry& e) {
    std::ostringstream os;
    os << std::setprecision(17) << e.name;
    for (std::size_t i = 0; i < e.args.size(); ++i) os << (i == 0 ? ':' : ',') << e.args[i];
    return os.str();
}

} // namespace heston
