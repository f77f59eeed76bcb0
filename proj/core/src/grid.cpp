#include "fewstep/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fewstep/errors.hpp"

namespace fewstep {

namespace {

void require_steps(int N) {
    if (N < 1) throw ArgumentError("grid: N must be >= 1");
}

TimeGrid from_steps(std::vector<double> steps) {
    TimeGrid g;
    g.score_times = steps;
    g.steps = std::move(steps);
    return g;
}

struct SoftmaxCumsum {
    std::vector<double> e;     // exp(xi_n - max), n < N
    std::vector<double> tail;  // tail[i] = sum_{n=i}^{N-1} e[n]
};

SoftmaxCumsum softmax_cumsum(const Vector& xi) {
    const int N = static_cast<int>(xi.size()) - 1;
    SoftmaxCumsum sc;
    sc.e.resize(static_cast<std::size_t>(N));
    sc.tail.assign(static_cast<std::size_t>(N + 1), 0.0);
    // xi_N only normalizes tau' and cancels in the rescale.
    const double mx = xi.head(N).maxCoeff();
    for (int n = 0; n < N; ++n) sc.e[n] = std::exp(xi[n] - mx);
    for (int n = N - 1; n >= 0; --n) sc.tail[n] = sc.tail[n + 1] + sc.e[n];
    return sc;
}

// Index of the smallest gap t_i - t_{i+1}.
int argmin_gap(const std::vector<double>& steps) {
    int best = 0;
    for (int i = 1; i + 1 < static_cast<int>(steps.size()); ++i) {
        if (steps[i] - steps[i + 1] < steps[best] - steps[best + 1]) best = i;
    }
    return best;
}

}  // namespace

std::string_view to_string(GridKind kind) {
    switch (kind) {
        case GridKind::Uniform: return "uniform";
        case GridKind::Quadratic: return "quadratic";
        case GridKind::Edm: return "edm";
        case GridKind::LogSnr: return "logsnr";
    }
    return "unknown";
}

GridKind grid_kind_from_string(std::string_view name) {
    if (name == "uniform") return GridKind::Uniform;
    if (name == "quadratic") return GridKind::Quadratic;
    if (name == "edm") return GridKind::Edm;
    if (name == "logsnr") return GridKind::LogSnr;
    throw ArgumentError("unknown grid kind '" + std::string(name) + "'");
}

std::vector<double> time_uniform(double T, double t_end, int N) {
    require_steps(N);
    std::vector<double> t(static_cast<std::size_t>(N + 1));
    for (int n = 0; n <= N; ++n) t[n] = T + (static_cast<double>(n) / N) * (t_end - T);
    t[N] = t_end;
    return t;
}

std::vector<double> time_quadratic(double T, double t_end, int N) {
    require_steps(N);
    std::vector<double> t(static_cast<std::size_t>(N + 1));
    for (int n = 0; n <= N; ++n) {
        const double s = static_cast<double>(n) / N;
        t[n] = T + s * s * (t_end - T);
    }
    t[N] = t_end;
    return t;
}

TimeGrid heuristic_grid(const NoiseSchedule& schedule, int N, GridKind kind, double rho) {
    require_steps(N);
    const double T = schedule.T();
    const double t_end = schedule.t_min();
    switch (kind) {
        case GridKind::Uniform: return from_steps(time_uniform(T, t_end, N));
        case GridKind::Quadratic: return from_steps(time_quadratic(T, t_end, N));
        case GridKind::Edm: {
            if (!(rho > 0.0)) throw ArgumentError("EDM grid: rho must be > 0");
            // kappa = sigma / alpha = exp(-lambda)
            const double k_hi = std::exp(-schedule.lambda_T() / rho);
            const double k_lo = std::exp(-schedule.lambda_min() / rho);
            std::vector<double> t(static_cast<std::size_t>(N + 1));
            t[0] = T;
            t[N] = t_end;
            for (int n = 1; n < N; ++n) {
                const double base = k_hi + (static_cast<double>(n) / N) * (k_lo - k_hi);
                const double lam = -rho * std::log(base);
                t[n] = time_from_lambda(schedule, std::clamp(lam, schedule.lambda_T(), schedule.lambda_min()));
            }
            return from_steps(std::move(t));
        }
        case GridKind::LogSnr: {
            const double l0 = schedule.lambda_T();
            const double l1 = schedule.lambda_min();
            std::vector<double> t(static_cast<std::size_t>(N + 1));
            t[0] = T;
            t[N] = t_end;
            for (int n = 1; n < N; ++n) {
                const double lam = l0 + (static_cast<double>(n) / N) * (l1 - l0);
                t[n] = time_from_lambda(schedule, std::clamp(lam, l0, l1));
            }
            return from_steps(std::move(t));
        }
    }
    throw ArgumentError("unknown grid kind");
}

void validate_grid(const TimeGrid& grid, const NoiseSchedule& schedule) {
    const int N = grid.N();
    if (N < 1) throw ArgumentError("grid must have at least two points");
    if (grid.score_times.size() != grid.steps.size()) {
        throw ArgumentError("grid: score_times and steps differ in length");
    }
    if (grid.steps.front() != schedule.T() || grid.steps.back() != schedule.t_min()) {
        throw ArgumentError("grid endpoints must equal T and t_min");
    }
    for (int i = 0; i < N; ++i) {
        if (!(grid.steps[i] > grid.steps[i + 1])) throw ArgumentError("grid steps must be strictly decreasing");
    }
    if (grid.score_times.front() != grid.steps.front() || grid.score_times.back() != grid.steps.back()) {
        throw ArgumentError("grid score_times must match steps at the endpoints");
    }
    for (double t : grid.score_times) {
        if (!schedule.contains(t)) throw ArgumentError("grid score time outside [t_min, T]");
    }
}

TimeGrid materialize(const LearnableTimeParams& params, const NoiseSchedule& schedule) {
    const int N = params.N();
    require_steps(N);
    if (params.xi_c.size() != params.xi.size()) throw ArgumentError("xi and xi_c differ in length");
    const double L = schedule.T() - schedule.t_min();
    const auto sc = softmax_cumsum(params.xi);
    TimeGrid g;
    g.steps.resize(static_cast<std::size_t>(N + 1));
    g.steps[0] = schedule.T();
    g.steps[N] = schedule.t_min();
    for (int i = 1; i < N; ++i) g.steps[i] = schedule.t_min() + L * (sc.tail[i] / sc.tail[0]);

    g.score_times = g.steps;
    if (N >= 2) {
        const int m = argmin_gap(g.steps);
        const double delta = params.clip_fraction * (g.steps[m] - g.steps[m + 1]);
        for (int i = 1; i < N; ++i) g.score_times[i] = g.steps[i] + std::clamp(params.xi_c[i], -delta, delta);
    }
    return g;
}

LearnableTimeParams params_from_grid(const TimeGrid& grid, const NoiseSchedule& schedule,
                                     double clip_fraction) {
    validate_grid(grid, schedule);
    if (!(clip_fraction > 0.0 && clip_fraction < 1.0)) {
        throw ArgumentError("clip_fraction must lie in (0, 1)");
    }
    const int N = grid.N();
    LearnableTimeParams p;
    p.clip_fraction = clip_fraction;
    p.xi.resize(N + 1);
    p.xi_c.resize(N + 1);
    double mean_log = 0.0;
    for (int n = 0; n < N; ++n) {
        p.xi[n] = std::log(grid.steps[n] - grid.steps[n + 1]);
        mean_log += p.xi[n] / N;
    }
    p.xi[N] = mean_log;
    for (int n = 0; n <= N; ++n) p.xi_c[n] = grid.score_times[n] - grid.steps[n];
    return p;
}

TimeParamsGradient grid_gradient_vjp(const LearnableTimeParams& params, const NoiseSchedule& schedule,
                                     std::span<const double> cotangent_steps,
                                     std::span<const double> cotangent_score_times) {
    const int N = params.N();
    require_steps(N);
    if (cotangent_steps.size() != static_cast<std::size_t>(N + 1) ||
        cotangent_score_times.size() != static_cast<std::size_t>(N + 1)) {
        throw ArgumentError("grid_gradient_vjp: cotangent length must be N + 1");
    }
    TimeParamsGradient grad{Vector::Zero(N + 1), Vector::Zero(N + 1)};
    const TimeGrid g = materialize(params, schedule);

    std::vector<double> t_bar(static_cast<std::size_t>(N + 1));
    for (int i = 0; i <= N; ++i) t_bar[i] = cotangent_steps[i] + cotangent_score_times[i];

    if (N >= 2) {
        const int m = argmin_gap(g.steps);
        const double delta = params.clip_fraction * (g.steps[m] - g.steps[m + 1]);
        double delta_bar = 0.0;
        for (int i = 1; i < N; ++i) {
            const double c = params.xi_c[i];
            if (c > -delta && c < delta) {
                grad.xi_c[i] = cotangent_score_times[i];
            } else {
                delta_bar += (c > 0.0 ? 1.0 : -1.0) * cotangent_score_times[i];
            }
        }
        t_bar[m] += params.clip_fraction * delta_bar;
        t_bar[m + 1] -= params.clip_fraction * delta_bar;
    }

    // t_i = t_min + L tail_i / tail_0 for interior i; endpoints are constants.
    const double L = schedule.T() - schedule.t_min();
    const auto sc = softmax_cumsum(params.xi);
    const double s0 = sc.tail[0];
    // d t_i / d xi_n = L e_n / s0 * ([n >= i] - tail_i / s0)
    double weighted = 0.0;  // sum_i t_bar_i tail_i / s0
    for (int i = 1; i < N; ++i) weighted += t_bar[i] * sc.tail[i] / s0;
    double prefix = 0.0;  // sum_{i=1}^{n} t_bar_i
    for (int n = 0; n < N; ++n) {
        if (n >= 1) prefix += t_bar[n];
        grad.xi[n] = L * sc.e[n] / s0 * (prefix - weighted);
    }
    return grad;
}

}  // namespace fewstep
