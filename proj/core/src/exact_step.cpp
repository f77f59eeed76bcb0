#include "fewstep/exact_step.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "fewstep/errors.hpp"

namespace fewstep {

GaussLegendre gauss_legendre(int n) {
    if (n < 1) throw ArgumentError("gauss_legendre: n must be >= 1");
    GaussLegendre gl{std::vector<double>(static_cast<std::size_t>(n)),
                     std::vector<double>(static_cast<std::size_t>(n))};
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        // map [-1, 1] -> [0, 1]; nodes ascending
        gl.nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + z);
        gl.weights[static_cast<std::size_t>(n - 1 - i)] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    return gl;
}

namespace {

struct Collocation {
    GaussLegendre gl;
    std::vector<std::vector<double>> a;  // a[m][l] = int_0^{c_m} l_l(s) ds
};

Collocation make_collocation(int n) {
    Collocation col{gauss_legendre(n), {}};
    const auto& c = col.gl.nodes;
    col.a.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    // Integrate each Lagrange basis polynomial over [0, c_m] with the same
    // rule rescaled; exact for degree n-1.
    for (int m = 0; m < n; ++m) {
        for (int q = 0; q < n; ++q) {
            const double s = c[m] * c[q];
            const double w = c[m] * col.gl.weights[q];
            for (int l = 0; l < n; ++l) {
                double basis = 1.0;
                for (int r = 0; r < n; ++r) {
                    if (r != l) basis *= (s - c[r]) / (c[l] - c[r]);
                }
                col.a[m][l] += w * basis;
            }
        }
    }
    return col;
}

// Returns I = int e^{-lambda} eps dlambda over [lam0, lam1] along the
// trajectory y = x / alpha with dy/dlambda = -e^{-lambda} eps.
Vector integrate_panels(const NoiseSchedule& schedule, const Vector& y0, double lam0, double lam1,
                        int panels, const EpsilonFn& eps_fn, const Collocation& col, int max_picard) {
    const std::size_t s = col.gl.nodes.size();
    const double H = (lam1 - lam0) / panels;
    Vector y = y0;
    Vector total = Vector::Zero(y0.size());
    std::vector<Vector> stage(s, y0);
    std::vector<Vector> f(s, Vector::Zero(y0.size()));
    std::vector<double> lam_nodes(s), t_nodes(s), alpha_nodes(s);
    for (int p = 0; p < panels; ++p) {
        const double la = lam0 + p * H;
        for (std::size_t m = 0; m < s; ++m) {
            lam_nodes[m] = la + col.gl.nodes[m] * H;
            t_nodes[m] = time_from_lambda(schedule, lam_nodes[m]);
            alpha_nodes[m] = schedule.alpha(t_nodes[m]);
            stage[m] = y;
        }
        bool converged = false;
        for (int it = 0; it < max_picard; ++it) {
            for (std::size_t m = 0; m < s; ++m) {
                f[m] = std::exp(-lam_nodes[m]) * eps_fn(alpha_nodes[m] * stage[m], t_nodes[m]);
            }
            double change = 0.0;
            for (std::size_t m = 0; m < s; ++m) {
                Vector next = y;
                for (std::size_t l = 0; l < s; ++l) next -= H * col.a[m][l] * f[l];
                change = std::max(change, (next - stage[m]).lpNorm<Eigen::Infinity>() /
                                              (1.0 + next.lpNorm<Eigen::Infinity>()));
                stage[m] = std::move(next);
            }
            if (!std::isfinite(change)) break;
            if (change < 1e-15) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            std::ostringstream os;
            os << "exact_step_integrand: collocation fixed point did not converge on panel " << p
               << " of " << panels << " (lambda in [" << la << ", " << la + H << "])";
            throw NumericalError(os.str());
        }
        for (std::size_t m = 0; m < s; ++m) {
            f[m] = std::exp(-lam_nodes[m]) * eps_fn(alpha_nodes[m] * stage[m], t_nodes[m]);
        }
        Vector incr = Vector::Zero(y0.size());
        for (std::size_t l = 0; l < s; ++l) incr += H * col.gl.weights[l] * f[l];
        total += incr;
        y -= incr;
    }
    return total;
}

}  // namespace

Vector exact_step_integrand(const NoiseSchedule& schedule, const Vector& x_prev, double t_prev,
                            double t_next, const EpsilonFn& eps_fn, const ExactStepOptions& options) {
    if (!(t_next < t_prev)) throw ArgumentError("exact_step_integrand: need t_next < t_prev");
    const auto p = alpha_sigma_lambda(schedule, t_prev);
    const auto n = alpha_sigma_lambda(schedule, t_next);
    if (!x_prev.allFinite()) throw NumericalError("exact_step_integrand: non-finite input state");

    const Collocation col = make_collocation(options.nodes);
    const Vector y0 = x_prev / p.alpha;
    int panels = std::max(1, static_cast<int>(std::ceil((n.lambda - p.lambda) / options.max_panel_h)));

    Vector prev = integrate_panels(schedule, y0, p.lambda, n.lambda, panels, eps_fn, col, options.max_picard);
    double last_diff = INFINITY;
    while (panels * 2 <= options.max_panels) {
        panels *= 2;
        Vector next =
            integrate_panels(schedule, y0, p.lambda, n.lambda, panels, eps_fn, col, options.max_picard);
        const double scale = 1.0 + n.alpha * next.lpNorm<Eigen::Infinity>() +
                             (n.alpha / p.alpha) * x_prev.lpNorm<Eigen::Infinity>();
        last_diff = n.alpha * (next - prev).lpNorm<Eigen::Infinity>() / scale;
        prev = std::move(next);
        if (last_diff <= options.tol) {
            return (n.alpha / p.alpha) * x_prev - n.alpha * prev;
        }
    }
    std::ostringstream os;
    os << "exact_step_integrand: quadrature did not converge (last relative change " << last_diff
       << " > tol " << options.tol << " with " << panels << " panels, lambda " << p.lambda << " -> "
       << n.lambda << ")";
    throw NumericalError(os.str());
}

}  // namespace fewstep
