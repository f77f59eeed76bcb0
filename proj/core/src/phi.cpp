#include "fewstep/phi.hpp"

#include <cmath>

#include "fewstep/errors.hpp"

namespace fewstep {

namespace {

void check_order(int order) {
    if (order < 1) throw ArgumentError("phi_functions: order must be >= 1");
}

}  // namespace

PhiTable phi_series(double h, int order) {
    check_order(order);
    PhiTable table{order, std::vector<double>(static_cast<std::size_t>(order))};
    for (int k = 1; k <= order; ++k) {
        // phi_k(h) = sum_{n>=0} h^n / (n + k)!
        double inv_fact = 1.0;
        for (int m = 2; m <= k; ++m) inv_fact /= m;
        double term = inv_fact;
        double sum = term;
        for (int n = 1; n < 64; ++n) {
            term *= h / static_cast<double>(n + k);
            const double next = sum + term;
            if (next == sum) break;
            sum = next;
        }
        table.values[static_cast<std::size_t>(k - 1)] = sum;
    }
    return table;
}

PhiTable phi_recurrence(double h, int order) {
    check_order(order);
    if (h == 0.0) return phi_series(h, order);
    PhiTable table{order, std::vector<double>(static_cast<std::size_t>(order))};
    double phi = std::expm1(h) / h;
    double inv_fact = 1.0;  // 1/k!
    table.values[0] = phi;
    for (int k = 1; k < order; ++k) {
        inv_fact /= k;
        phi = (phi - inv_fact) / h;
        table.values[static_cast<std::size_t>(k)] = phi;
    }
    return table;
}

PhiTable phi_functions(double h, int order) {
    if (!std::isfinite(h)) throw ArgumentError("phi_functions: h must be finite");
    return std::abs(h) < kPhiSeriesThreshold ? phi_series(h, order) : phi_recurrence(h, order);
}

}  // namespace fewstep
