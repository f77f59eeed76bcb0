#include "fewstep/teacher.hpp"

#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "fewstep/errors.hpp"
#include "fewstep/parallel.hpp"
#include "fewstep/solver.hpp"

namespace fewstep {

std::string_view to_string(TeacherKind kind) {
    switch (kind) {
        case TeacherKind::ExactGaussian: return "exact_gaussian";
        case TeacherKind::AdaptiveRK: return "adaptive_rk";
        case TeacherKind::FineFixedStep: return "fine_fixed_step";
    }
    return "unknown";
}

TeacherKind teacher_kind_from_string(std::string_view name) {
    if (name == "exact_gaussian") return TeacherKind::ExactGaussian;
    if (name == "adaptive_rk") return TeacherKind::AdaptiveRK;
    if (name == "fine_fixed_step") return TeacherKind::FineFixedStep;
    throw ArgumentError("unknown teacher kind '" + std::string(name) + "'");
}

namespace {

namespace odeint = boost::numeric::odeint;
using OdeState = std::vector<double>;

Vector adaptive_rk(const TeacherConfig& config, const NoiseSchedule& schedule, const EpsilonModel& model,
                   const Vector& x_T) {
    if (!(config.rel_tol > 0.0) || !(config.abs_tol > 0.0)) throw ArgumentError("teacher tolerances must be > 0");
    const Eigen::Index d = x_T.size();
    // dx/dt = f(t) x + g^2(t) / (2 sigma_t) eps(x, t)
    auto rhs = [&](const OdeState& x, OdeState& dxdt, double t) {
        const Eigen::Map<const Vector> xv(x.data(), d);
        const OdeCoefficients c = schedule.ode_coefficients(t);
        const double s = c.g_sq_t / (2.0 * schedule.sigma(t));
        const Vector e = model.epsilon(schedule, xv, t);
        Eigen::Map<Vector> out(dxdt.data(), d);
        out = c.f_t * xv + s * e;
    };
    auto stepper = odeint::make_controlled(config.abs_tol, config.rel_tol, odeint::runge_kutta_dopri5<OdeState>());
    OdeState x(x_T.data(), x_T.data() + d);
    double t = schedule.T();
    const double t_end = schedule.t_min();
    double dt = -(schedule.T() - t_end) * 1e-3;
    long attempts = 0;
    while (t > t_end) {
        if (attempts++ >= config.max_steps) {
            std::ostringstream os;
            os << "adaptive teacher exhausted " << config.max_steps << " steps at t = " << t << " (target " << t_end
               << ", rel_tol " << config.rel_tol << ")";
            throw AccuracyError(os.str());
        }
        const bool last = t + dt <= t_end;
        if (last) dt = t_end - t;
        const auto result = stepper.try_step(rhs, x, t, dt);
        if (result == odeint::success && last) t = t_end;
        if (!std::isfinite(dt) || std::abs(dt) < 1e-300) throw AccuracyError("adaptive teacher step size underflow");
    }
    Vector out = Eigen::Map<const Vector>(x.data(), d);
    if (!out.allFinite()) throw AccuracyError("adaptive teacher produced a non-finite state");
    return out;
}

Vector fine_fixed_step(const TeacherConfig& config, const NoiseSchedule& schedule, const EpsilonModel& model,
                       const Vector& x_T) {
    int steps = config.fine_nfe;
    if (config.fine_solver == SolverKind::Ss) steps = config.fine_nfe / config.fine_order;
    if (config.fine_solver == SolverKind::Pc) steps = config.fine_nfe - 1;
    if (steps < 1) throw ArgumentError("fine_nfe too small for the fine teacher solver");
    const TimeGrid grid = heuristic_grid(schedule, steps, config.fine_grid);
    const SolverCoefficients c = init_preset(config.fine_solver, config.fine_order, steps, config.fine_preset,
                                             config.fine_prediction, schedule, grid);
    return solve(c, schedule, grid, model, x_T).terminal();
}

}  // namespace

Vector teacher_solve(const TeacherConfig& config, const NoiseSchedule& schedule, const EpsilonModel& model,
                     const Vector& x_T) {
    if (x_T.size() != model.dim()) throw ArgumentError("x_T dimension differs from model dimension");
    if (!x_T.allFinite()) throw ArgumentError("x_T must be finite");
    switch (config.kind) {
        case TeacherKind::ExactGaussian: {
            auto flow = model.exact_flow(schedule, x_T, schedule.T(), schedule.t_min());
            if (!flow) throw ArgumentError("exact_gaussian teacher needs a model with a closed-form flow");
            return *flow;
        }
        case TeacherKind::AdaptiveRK: return adaptive_rk(config, schedule, model, x_T);
        case TeacherKind::FineFixedStep: return fine_fixed_step(config, schedule, model, x_T);
    }
    throw ArgumentError("unknown teacher kind");
}

std::uint64_t record_id(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over the pair
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

std::vector<Vector> draw_noise(std::size_t count, int dim, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> xs(count, Vector(dim));
    for (auto& x : xs) {
        for (int q = 0; q < dim; ++q) x[q] = scale * normal(rng);
    }
    return xs;
}

}  // namespace

Dataset generate_dataset(const TeacherConfig& config, const NoiseSchedule& schedule, const EpsilonModel& model,
                         std::size_t count, std::uint64_t seed, double validation_fraction, int workers) {
    if (count < 1) throw ArgumentError("dataset count must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ArgumentError("validation_fraction must lie in [0, 1)");
    }
    Dataset ds;
    ds.dim = model.dim();
    const auto xs = draw_noise(count, ds.dim, schedule.tilde_sigma(), seed);
    ds.records.resize(count);
    parallel_for(
        count,
        [&](std::size_t n) {
            TrainRecord& r = ds.records[n];
            r.id = record_id(seed, n);
            r.x_T = xs[n];
            r.x_T_prime = xs[n];
            r.teacher_out = teacher_solve(config, schedule, model, xs[n]);
        },
        workers);
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(count)));
    ds.train_count = count - std::min(n_val, count - 1);
    return ds;
}

std::vector<EvalSample> generate_eval_samples(const TeacherConfig& config, const NoiseSchedule& schedule,
                                              const EpsilonModel& model, std::size_t count, std::uint64_t seed,
                                              int workers) {
    const auto xs = draw_noise(count, model.dim(), schedule.tilde_sigma(), seed);
    std::vector<EvalSample> out(count);
    parallel_for(
        count,
        [&](std::size_t n) {
            out[n].x_T = xs[n];
            out[n].teacher_out = teacher_solve(config, schedule, model, xs[n]);
        },
        workers);
    return out;
}

}  // namespace fewstep
