#pragma once

#include "heston/model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace heston {

// Data of one of the four problems. Elliptic problems ignore t.
using DataFn = std::function<double(double t, double x, double y)>;

struct ProblemData {
    DataFn f;   // source; empty means 0
    DataFn g;   // boundary and terminal data
    DataFn psi; // obstacle; empty when the problem has none
    GrowthBound growth;
    std::string id = "problem";

    bool has_source() const { return static_cast<bool>(f); }
    bool has_obstacle() const { return static_cast<bool>(psi); }
};

// Built-in data functions addressable from configuration files.
//   constant:c
//   affine:a,bx,by                   a + bx x + by y
//   put:K                            (K - e^x)^+
//   call:K                           (e^x - K)^+
//   down_and_out_put_continuous:K,L,w
//                                    (K - e^x)^+ min(1, max(0, (x - log L) / w))
//   bump:amp,xc,yc,w                 amp exp(-((x - xc)^2 + (y - yc)^2) / (2 w^2))
//   zero
struct CatalogEntry {
    std::string name;
    std::vector<double> args;
    DataFn fn;
    // Growth bound of |fn| when one holds on the whole half-plane.
    std::optional<GrowthBound> growth;
};

CatalogEntry make_catalog(std::string_view spec);
// Inverse of make_catalog for the canonical spelling, e.g. "put:100".
std::string canonical_spec(const CatalogEntry& e);

} // namespace heston
