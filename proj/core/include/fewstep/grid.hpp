#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "fewstep/schedule.hpp"
#include "fewstep/types.hpp"

namespace fewstep {

enum class GridKind { Uniform, Quadratic, Edm, LogSnr };

std::string_view to_string(GridKind kind);
GridKind grid_kind_from_string(std::string_view name);

/// Solver time grid t_0 = T > t_1 > ... > t_N = t_min together with the
/// times at which the score model is queried (equal to the steps except at
/// interior indices when offsets are learned).
struct TimeGrid {
    std::vector<double> steps;
    std::vector<double> score_times;

    int N() const { return static_cast<int>(steps.size()) - 1; }
};

// Learnable parametrization of a TimeGrid: logits xi drive the step
// positions through a cumulative softmax, xi_c are raw score-time offsets
// clipped to +-clip_fraction * (smallest gap).
struct LearnableTimeParams {
    Vector xi;
    Vector xi_c;
    double clip_fraction = 0.5;

    int N() const { return static_cast<int>(xi.size()) - 1; }
};

struct TimeParamsGradient {
    Vector xi;
    Vector xi_c;
};

std::vector<double> time_uniform(double T, double t_end, int N);
std::vector<double> time_quadratic(double T, double t_end, int N);

TimeGrid heuristic_grid(const NoiseSchedule& schedule, int N, GridKind kind, double rho = 7.0);

// Throws ArgumentError unless steps are strictly decreasing from T to t_min
// and score_times agree with steps at the endpoints.
void validate_grid(const TimeGrid& grid, const NoiseSchedule& schedule);

TimeGrid materialize(const LearnableTimeParams& params, const NoiseSchedule& schedule);

// Logits that reproduce `grid` exactly (up to rounding) under materialize().
// Score-time offsets are taken from grid.score_times - grid.steps.
LearnableTimeParams params_from_grid(const TimeGrid& grid, const NoiseSchedule& schedule,
                                     double clip_fraction = 0.5);

// Reverse-mode derivative of materialize(). Saturated clips pass no gradient
// to xi_c; the clip bound itself depends on xi through the smallest gap.
TimeParamsGradient grid_gradient_vjp(const LearnableTimeParams& params, const NoiseSchedule& schedule,
                                     std::span<const double> cotangent_steps,
                                     std::span<const double> cotangent_score_times);

}  // namespace fewstep
