#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "fewstep/coefficients.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/schedule.hpp"

namespace fewstep {

enum class Preset {
    Ipndm,           // constant Adams-Bashforth weights with a lower-order ramp (LMS)
    DpmSolverPP,     // multistep DPM-Solver(++) 1/2M/3M (LMS)
    UniPc,           // UniP predictor with UniC corrector (PC)
    AdamsBashforth,  // exponentially weighted Lagrange extrapolation in lambda (LMS)
    DpmSolverSingle, // singlestep DPM-Solver(++) 1/2S/3S (SS)
    GaussianRandom,  // i.i.d. N(0, 1) draws (any kind)
};

std::string_view to_string(Preset preset);
Preset preset_from_string(std::string_view name);

bool preset_compatible(SolverKind kind, Preset preset);

// Per-step weights of a classical solver expressed in the layout of
// SolverCoefficients. Weights that depend on step ratios are computed from
// the lambda values of grid.steps. Throws ArgumentError for incompatible
// (kind, preset) pairs or unsupported orders.
SolverCoefficients init_preset(SolverKind kind, int order, int steps, Preset preset, Prediction prediction,
                               const NoiseSchedule& schedule, const TimeGrid& grid, std::uint64_t seed = 0,
                               StepDomain domain = StepDomain::Lambda);

// Extrapolation weights of order m = nodes.size(): b_j = int w l_j / int w
// over [0, h], where l_j is the Lagrange basis on nodes (lambda offsets from
// the current step start, nodes[0] = 0) and w(s) = exp(-s) for noise or
// exp(s) for data prediction.
std::vector<double> exponential_lagrange_weights(const std::vector<double>& nodes, double h,
                                                 Prediction prediction);

}  // namespace fewstep
