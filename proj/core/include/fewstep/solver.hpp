#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fewstep/coefficients.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/schedule.hpp"
#include "fewstep/score_model.hpp"

namespace fewstep {

/// Exponential-integrator wrapper x_to = A x_from + B * Delta together with
/// the partial derivatives of A and B in both endpoint times.
///
/// Noise prediction: A = alpha_to / alpha_from, B = -sigma_to (e^h - 1).
/// Data prediction:  A = sigma_to / sigma_from, B = -alpha_to (e^{-h} - 1).
/// h = lambda_to - lambda_from, or t_to - t_from in the time domain.
struct StepMap {
    double A;
    double B;
    double dA_dfrom;
    double dA_dto;
    double dB_dfrom;
    double dB_dto;
};

StepMap step_map(const NoiseSchedule& schedule, Prediction prediction, StepDomain domain, double t_from,
                 double t_to);

struct StageTime {
    double t;
    bool clamped;
};

// Time of the SS stage whose lambda is lambda(t_from) + c, clamped to the
// schedule's range.
StageTime ss_stage_time(const NoiseSchedule& schedule, double t_from, double c);

struct SolveTrace {
    SolverKind kind = SolverKind::Lms;
    int order = 1;
    TimeGrid grid;
    std::vector<Vector> states;     // x_0 .. x_N
    std::vector<Vector> predicted;  // PC: predictor output of step i at [i - 1]
    // Model outputs. LMS: e_0 .. e_{N-1}; PC: e_0 .. e_N with e_i taken at the
    // predicted state; SS: stage j of step i at [(i - 1) k + j - 1].
    std::vector<Vector> evals;
    std::vector<Vector> stage_inputs;  // SS, same indexing as evals
    std::vector<double> stage_times;   // SS, same indexing as evals
    std::vector<std::uint8_t> stage_clamped;
    int nfe_used = 0;
    int clamped_stages = 0;

    int N() const { return static_cast<int>(states.size()) - 1; }
    const Vector& terminal() const { return states.back(); }
};

// One LMS update. history[j - 1] holds the model output at step i - j and
// must contain at least min(k, i) entries.
Vector lms_step(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid, int i,
                const Vector& x_prev, std::span<const Vector> history);

struct PcStepResult {
    Vector predicted;
    Vector evaluation;  // model output at (predicted, t^c_i)
    Vector corrected;
};

PcStepResult pc_step(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid,
                     int i, const Vector& x_prev, std::span<const Vector> history, const EpsilonModel& model);

struct SsStepResult {
    Vector next;
    std::vector<Vector> stage_inputs;
    std::vector<Vector> stages;
    std::vector<double> stage_times;
    std::vector<std::uint8_t> clamped;
};

SsStepResult ss_step(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid,
                     int i, const Vector& x_prev, const EpsilonModel& model);

// Full trajectory from x_T. Noise or data prediction follows coeffs.prediction().
SolveTrace solve(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid,
                 const EpsilonModel& model, const Vector& x_T);

// Model evaluations solve() performs.
int expected_nfe(SolverKind kind, int order, int steps);

}  // namespace fewstep
