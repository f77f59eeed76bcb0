#pragma once

#include <functional>
#include <vector>

#include "fewstep/schedule.hpp"
#include "fewstep/types.hpp"

namespace fewstep {

using EpsilonFn = std::function<Vector(const Vector& x, double t)>;

// Gauss-Legendre nodes and weights on [0, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussLegendre gauss_legendre(int n);

struct ExactStepOptions {
    int nodes = 8;              // collocation points per panel
    double max_panel_h = 0.25;  // initial panel width in lambda
    int max_panels = 1 << 14;
    double tol = 1e-13;         // relative agreement between refinements
    int max_picard = 200;
};

/// Reference evaluation of
///   x_next = (alpha_next / alpha_prev) x_prev
///            - alpha_next int_{lambda_prev}^{lambda_next} e^{-lambda} eps(x_lambda, t_lambda) dlambda
/// along the self-consistent trajectory. The trajectory is resolved with
/// Gauss-Legendre collocation in lambda, refined by panel doubling until two
/// successive refinements agree. Slow; meant for tests and teachers.
///
/// Throws NumericalError when refinement does not converge.
Vector exact_step_integrand(const NoiseSchedule& schedule, const Vector& x_prev, double t_prev,
                            double t_next, const EpsilonFn& eps_fn, const ExactStepOptions& options = {});

}  // namespace fewstep
