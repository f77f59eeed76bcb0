#pragma once

#include <vector>

namespace fewstep {

/// phi_1(h) ... phi_order(h) of the exponential-integrator family,
/// phi_k(z) = int_0^1 exp((1 - d) z) d^(k-1) / (k-1)! dd.
struct PhiTable {
    int order = 0;
    std::vector<double> values;  // values[k - 1] = phi_k(h)

    double operator[](int k) const { return values.at(static_cast<std::size_t>(k - 1)); }
};

// |h| below this uses the power series; above it the recurrence
// phi_{k+1}(z) = (phi_k(z) - 1/k!) / z seeded with phi_1 = expm1(z)/z.
inline constexpr double kPhiSeriesThreshold = 0.5;

PhiTable phi_functions(double h, int order);

// Both branches exposed so their agreement can be checked directly.
PhiTable phi_series(double h, int order);
PhiTable phi_recurrence(double h, int order);

}  // namespace fewstep
