#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fewstep/coefficients.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/schedule.hpp"
#include "fewstep/score_model.hpp"
#include "fewstep/solver.hpp"

namespace fewstep {

enum class LossKind { L2, L2Normalized };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

// L2: mean over dimensions of the squared difference.
// L2Normalized: ||x - target||^2 / ||target||^2.
double terminal_loss(LossKind kind, const Vector& x, const Vector& target);
Vector terminal_loss_gradient(LossKind kind, const Vector& x, const Vector& target);

struct AdjointResult {
    Vector grad_coeffs;
    Vector grad_xi;    // empty unless time params were supplied
    Vector grad_xi_c;  // empty unless time params were supplied
    std::vector<double> grad_steps;        // cotangent on grid.steps
    std::vector<double> grad_score_times;  // cotangent on grid.score_times
    Vector grad_x0;
    double loss_value = 0.0;
    int vjp_calls = 0;
};

// Reverse pass through solve(). Each model evaluation in the trace is
// pulled back exactly once, re-evaluated at its stored input. When params is
// non-null the grid cotangents are mapped onto (xi, xi_c); params must then
// materialize to trace.grid.
AdjointResult backward(const SolveTrace& trace, const SolverCoefficients& coeffs,
                       const LearnableTimeParams* params, const NoiseSchedule& schedule,
                       const EpsilonModel& model, const Vector& loss_cotangent);

// Forward loss against `target` followed by backward(); fills loss_value.
AdjointResult loss_gradients(const SolveTrace& trace, const SolverCoefficients& coeffs,
                             const LearnableTimeParams* params, const NoiseSchedule& schedule,
                             const EpsilonModel& model, LossKind loss, const Vector& target);

struct GradientCheckSpec {
    SolverKind kind = SolverKind::Lms;
    int order = 2;
    int steps = 4;
    int dim = 2;
    int components = 3;
    Prediction prediction = Prediction::Noise;
    ScheduleKind schedule = ScheduleKind::VpLinear;
    StepDomain domain = StepDomain::Lambda;
    int instances = 100;
    std::uint64_t seed = 0;
    double fd_step = 1e-5;
    bool tied = false;
};

struct GradientCheckReport {
    double max_rel_coeffs = 0.0;
    double max_rel_time = 0.0;
    double max_rel_x = 0.0;
    int instances = 0;
    double tolerance = 0.0;
    bool passed = false;
    std::vector<std::string> failures;
};

// Finite-difference oracle over random instances. Per block and instance the
// deviation is ||g_adjoint - g_fd||_inf / max(||g_fd||_inf, 1e-8); the report
// keeps the maximum over instances. Deviations never throw.
GradientCheckReport check_gradients(const GradientCheckSpec& spec, double tolerance);

}  // namespace fewstep
