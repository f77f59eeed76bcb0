#include "fewstep/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fewstep/errors.hpp"

namespace fewstep {

StepMap step_map(const NoiseSchedule& schedule, Prediction prediction, StepDomain domain, double t_from,
                 double t_to) {
    const ScheduleValues p = schedule.values(t_from);
    const ScheduleValues n = schedule.values(t_to);
    const ScheduleDerivatives dp = schedule.derivatives(t_from);
    const ScheduleDerivatives dn = schedule.derivatives(t_to);
    StepMap m{};
    if (domain == StepDomain::Lambda) {
        if (prediction == Prediction::Noise) {
            m.A = n.alpha / p.alpha;
            m.B = -n.sigma * std::expm1(n.lambda - p.lambda);
            m.dA_dfrom = -n.alpha * dp.dalpha / (p.alpha * p.alpha);
            m.dA_dto = dn.dalpha / p.alpha;
            // B = sigma_n - alpha_n sigma_p / alpha_p
            m.dB_dto = dn.dsigma - dn.dalpha * p.sigma / p.alpha;
            m.dB_dfrom = -n.alpha * (dp.dsigma * p.alpha - p.sigma * dp.dalpha) / (p.alpha * p.alpha);
        } else {
            m.A = n.sigma / p.sigma;
            m.B = -n.alpha * std::expm1(p.lambda - n.lambda);
            m.dA_dfrom = -n.sigma * dp.dsigma / (p.sigma * p.sigma);
            m.dA_dto = dn.dsigma / p.sigma;
            // B = alpha_n - sigma_n alpha_p / sigma_p
            m.dB_dto = dn.dalpha - dn.dsigma * p.alpha / p.sigma;
            m.dB_dfrom = -n.sigma * (dp.dalpha * p.sigma - p.alpha * dp.dsigma) / (p.sigma * p.sigma);
        }
        return m;
    }
    const double h = t_to - t_from;
    if (prediction == Prediction::Noise) {
        m.A = n.alpha / p.alpha;
        m.dA_dfrom = -n.alpha * dp.dalpha / (p.alpha * p.alpha);
        m.dA_dto = dn.dalpha / p.alpha;
        m.B = -n.sigma * std::expm1(h);
        m.dB_dto = -dn.dsigma * std::expm1(h) - n.sigma * std::exp(h);
        m.dB_dfrom = n.sigma * std::exp(h);
    } else {
        m.A = n.sigma / p.sigma;
        m.dA_dfrom = -n.sigma * dp.dsigma / (p.sigma * p.sigma);
        m.dA_dto = dn.dsigma / p.sigma;
        m.B = -n.alpha * std::expm1(-h);
        m.dB_dto = -dn.dalpha * std::expm1(-h) + n.alpha * std::exp(-h);
        m.dB_dfrom = -n.alpha * std::exp(-h);
    }
    return m;
}

StageTime ss_stage_time(const NoiseSchedule& schedule, double t_from, double c) {
    if (c == 0.0) return {t_from, false};
    const double lam = schedule.lambda(t_from) + c;
    if (lam <= schedule.lambda_T()) return {schedule.T(), true};
    if (lam >= schedule.lambda_min()) return {schedule.t_min(), true};
    return {time_from_lambda(schedule, lam), false};
}

int expected_nfe(SolverKind kind, int order, int steps) {
    switch (kind) {
        case SolverKind::Lms: return steps;
        case SolverKind::Pc: return steps + 1;
        case SolverKind::Ss: return order * steps;
    }
    return 0;
}

namespace {

void check_step(const SolverCoefficients& coeffs, const TimeGrid& grid, int i) {
    if (grid.N() != coeffs.steps()) throw ArgumentError("grid step count differs from coefficient N");
    if (i < 1 || i > coeffs.steps()) throw ArgumentError("step index out of range");
}

void check_finite(const Vector& v, int step, const char* what) {
    if (!v.allFinite()) {
        throw DivergenceError(static_cast<std::size_t>(step),
                              std::string("non-finite ") + what + " at step " + std::to_string(step));
    }
}

Vector weighted_history(const SolverCoefficients& coeffs, int i, std::span<const Vector> history) {
    const int m = coeffs.row_width(i);
    if (history.size() < static_cast<std::size_t>(m)) {
        throw StateError("step " + std::to_string(i) + " needs " + std::to_string(m) +
                         " history entries, got " + std::to_string(history.size()));
    }
    Vector delta = coeffs.b(i, 1) * history[0];
    for (int j = 2; j <= m; ++j) delta += coeffs.b(i, j) * history[j - 1];
    return delta;
}

Vector output(const SolverCoefficients& coeffs, const EpsilonModel& model, const NoiseSchedule& schedule,
              const Vector& x, double t) {
    return model_output(coeffs.prediction(), model, schedule, x, t);
}

}  // namespace

Vector lms_step(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid, int i,
                const Vector& x_prev, std::span<const Vector> history) {
    check_step(coeffs, grid, i);
    if (history.empty()) throw StateError("lms_step called with an empty history");
    const StepMap m = step_map(schedule, coeffs.prediction(), coeffs.step_domain(), grid.steps[i - 1], grid.steps[i]);
    return m.A * x_prev + m.B * weighted_history(coeffs, i, history);
}

PcStepResult pc_step(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid,
                     int i, const Vector& x_prev, std::span<const Vector> history, const EpsilonModel& model) {
    if (coeffs.kind() != SolverKind::Pc) throw ArgumentError("pc_step needs PC coefficients");
    check_step(coeffs, grid, i);
    if (history.empty()) throw StateError("pc_step called with an empty history");
    const StepMap m = step_map(schedule, coeffs.prediction(), coeffs.step_domain(), grid.steps[i - 1], grid.steps[i]);
    PcStepResult r;
    r.predicted = m.A * x_prev + m.B * weighted_history(coeffs, i, history);
    check_finite(r.predicted, i, "predicted state");
    r.evaluation = output(coeffs, model, schedule, r.predicted, grid.score_times[i]);
    Vector corr = coeffs.corrector(i, 1) * r.evaluation;
    for (int j = 2; j <= coeffs.row_width(i); ++j) corr += coeffs.corrector(i, j) * history[j - 2];
    r.corrected = m.A * x_prev + m.B * corr;
    return r;
}

SsStepResult ss_step(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid,
                     int i, const Vector& x_prev, const EpsilonModel& model) {
    if (coeffs.kind() != SolverKind::Ss) throw ArgumentError("ss_step needs SS coefficients");
    check_step(coeffs, grid, i);
    const int k = coeffs.order();
    const double t_prev = grid.steps[i - 1];
    SsStepResult r;
    r.stage_inputs.reserve(k);
    r.stages.reserve(k);
    r.stage_inputs.push_back(x_prev);
    r.stage_times.push_back(grid.score_times[i - 1]);
    r.clamped.push_back(0);
    r.stages.push_back(output(coeffs, model, schedule, x_prev, grid.score_times[i - 1]));
    for (int j = 2; j <= k; ++j) {
        const StageTime s = ss_stage_time(schedule, t_prev, coeffs.ss_c(i, j));
        const StepMap m = step_map(schedule, coeffs.prediction(), coeffs.step_domain(), t_prev, s.t);
        Vector mix = coeffs.ss_a(i, j, 1) * r.stages[0];
        for (int l = 2; l < j; ++l) mix += coeffs.ss_a(i, j, l) * r.stages[l - 1];
        Vector u = m.A * x_prev + m.B * mix;
        check_finite(u, i, "stage input");
        r.stages.push_back(output(coeffs, model, schedule, u, s.t));
        r.stage_inputs.push_back(std::move(u));
        r.stage_times.push_back(s.t);
        r.clamped.push_back(s.clamped ? 1 : 0);
    }
    const StepMap m = step_map(schedule, coeffs.prediction(), coeffs.step_domain(), t_prev, grid.steps[i]);
    Vector delta = coeffs.b(i, 1) * r.stages[0];
    for (int j = 2; j <= k; ++j) delta += coeffs.b(i, j) * r.stages[j - 1];
    r.next = m.A * x_prev + m.B * delta;
    return r;
}

SolveTrace solve(const SolverCoefficients& coeffs, const NoiseSchedule& schedule, const TimeGrid& grid,
                 const EpsilonModel& model, const Vector& x_T) {
    const int N = coeffs.steps();
    if (grid.N() != N) throw ArgumentError("grid step count differs from coefficient N");
    if (x_T.size() != model.dim()) throw ArgumentError("x_T dimension differs from model dimension");
    if (!x_T.allFinite()) throw ArgumentError("x_T must be finite");

    SolveTrace tr;
    tr.kind = coeffs.kind();
    tr.order = coeffs.order();
    tr.grid = grid;
    tr.states.reserve(static_cast<std::size_t>(N + 1));
    tr.states.push_back(x_T);
    const int k = coeffs.order();

    if (coeffs.kind() == SolverKind::Ss) {
        tr.evals.reserve(static_cast<std::size_t>(N * k));
        for (int i = 1; i <= N; ++i) {
            SsStepResult r = ss_step(coeffs, schedule, grid, i, tr.states.back(), model);
            for (int j = 0; j < k; ++j) {
                tr.evals.push_back(std::move(r.stages[j]));
                tr.stage_inputs.push_back(std::move(r.stage_inputs[j]));
                tr.stage_times.push_back(r.stage_times[j]);
                tr.stage_clamped.push_back(r.clamped[j]);
                tr.clamped_stages += r.clamped[j];
            }
            tr.nfe_used += k;
            check_finite(r.next, i, "state");
            tr.states.push_back(std::move(r.next));
        }
        return tr;
    }

    std::vector<Vector> history;  // most recent first
    history.reserve(static_cast<std::size_t>(k));
    auto push_history = [&](const Vector& e) {
        history.insert(history.begin(), e);
        if (history.size() > static_cast<std::size_t>(k)) history.pop_back();
    };

    tr.evals.push_back(output(coeffs, model, schedule, x_T, grid.score_times[0]));
    ++tr.nfe_used;
    push_history(tr.evals.back());

    for (int i = 1; i <= N; ++i) {
        if (coeffs.kind() == SolverKind::Lms) {
            Vector x = lms_step(coeffs, schedule, grid, i, tr.states.back(), history);
            check_finite(x, i, "state");
            tr.states.push_back(std::move(x));
            if (i < N) {
                tr.evals.push_back(output(coeffs, model, schedule, tr.states.back(), grid.score_times[i]));
                ++tr.nfe_used;
                push_history(tr.evals.back());
            }
        } else {
            PcStepResult r = pc_step(coeffs, schedule, grid, i, tr.states.back(), history, model);
            ++tr.nfe_used;
            check_finite(r.corrected, i, "state");
            tr.predicted.push_back(std::move(r.predicted));
            tr.evals.push_back(std::move(r.evaluation));
            tr.states.push_back(std::move(r.corrected));
            push_history(tr.evals.back());
        }
    }
    return tr;
}

}  // namespace fewstep
