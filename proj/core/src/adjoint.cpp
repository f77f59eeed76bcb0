#include "fewstep/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fewstep/errors.hpp"
#include "fewstep/presets.hpp"

namespace fewstep {

std::string_view to_string(LossKind kind) { return kind == LossKind::L2 ? "l2" : "l2_normalized"; }

LossKind loss_kind_from_string(std::string_view name) {
    if (name == "l2") return LossKind::L2;
    if (name == "l2_normalized") return LossKind::L2Normalized;
    throw ArgumentError("unknown loss '" + std::string(name) + "'");
}

namespace {

constexpr double kNormFloor = 1e-12;

double target_norm2(const Vector& target) { return std::max(target.squaredNorm(), kNormFloor); }

}  // namespace

double terminal_loss(LossKind kind, const Vector& x, const Vector& target) {
    if (x.size() != target.size()) throw ArgumentError("loss: dimension mismatch");
    const double sq = (x - target).squaredNorm();
    return kind == LossKind::L2 ? sq / static_cast<double>(x.size()) : sq / target_norm2(target);
}

Vector terminal_loss_gradient(LossKind kind, const Vector& x, const Vector& target) {
    if (x.size() != target.size()) throw ArgumentError("loss: dimension mismatch");
    const double scale = kind == LossKind::L2 ? 2.0 / static_cast<double>(x.size()) : 2.0 / target_norm2(target);
    return scale * (x - target);
}

namespace {

void pull_eval(const SolveTrace& tr, const SolverCoefficients& coeffs, const NoiseSchedule& schedule,
               const EpsilonModel& model, const Vector& x, double t, std::size_t eval_index, const Vector& cot,
               Vector& x_bar, double& t_bar, int& calls) {
    const VjpResult v = model_output_vjp(coeffs.prediction(), model, schedule, x, t, tr.evals[eval_index], cot);
    ++calls;
    x_bar += v.x;
    t_bar += v.t;
}

void add_map_time(const StepMap& m, double a_bar, double b_bar, double& from_bar, double& to_bar) {
    from_bar += a_bar * m.dA_dfrom + b_bar * m.dB_dfrom;
    to_bar += a_bar * m.dA_dto + b_bar * m.dB_dto;
}

void backward_multistep(const SolveTrace& tr, const SolverCoefficients& coeffs, const NoiseSchedule& schedule,
                        const EpsilonModel& model, Vector x_bar_N, AdjointResult& out) {
    const int N = tr.N();
    const int d = static_cast<int>(x_bar_N.size());
    const bool pc = coeffs.kind() == SolverKind::Pc;
    const TimeGrid& g = tr.grid;
    std::vector<Vector> e_bar(tr.evals.size(), Vector::Zero(d));
    std::vector<Vector> x_bar(static_cast<std::size_t>(N + 1), Vector::Zero(d));
    x_bar[N] = std::move(x_bar_N);
    auto& ts = out.grad_steps;
    auto& tc = out.grad_score_times;

    for (int i = N; i >= 1; --i) {
        const int m = coeffs.row_width(i);
        const StepMap sm = step_map(schedule, coeffs.prediction(), coeffs.step_domain(), g.steps[i - 1], g.steps[i]);
        const Vector& xp = tr.states[i - 1];
        double a_bar = 0.0;
        double b_bar = 0.0;

        if (pc) {
            const Vector& xb = x_bar[i];
            Vector corr = coeffs.corrector(i, 1) * tr.evals[i];
            for (int j = 2; j <= m; ++j) corr += coeffs.corrector(i, j) * tr.evals[i - j + 1];
            a_bar += xb.dot(xp);
            b_bar += xb.dot(corr);
            out.grad_coeffs[static_cast<Eigen::Index>(coeffs.corrector_index(i, 1))] += sm.B * xb.dot(tr.evals[i]);
            e_bar[i] += sm.B * coeffs.corrector(i, 1) * xb;
            for (int j = 2; j <= m; ++j) {
                out.grad_coeffs[static_cast<Eigen::Index>(coeffs.corrector_index(i, j))] +=
                    sm.B * xb.dot(tr.evals[i - j + 1]);
                e_bar[i - j + 1] += sm.B * coeffs.corrector(i, j) * xb;
            }
            x_bar[i - 1] += sm.A * xb;

            // e_i is complete: it feeds corrector i and later steps only.
            Vector xp_bar = Vector::Zero(d);
            pull_eval(tr, coeffs, schedule, model, tr.predicted[i - 1], g.score_times[i], static_cast<std::size_t>(i),
                      e_bar[i], xp_bar, tc[i], out.vjp_calls);

            Vector pred = coeffs.b(i, 1) * tr.evals[i - 1];
            for (int j = 2; j <= m; ++j) pred += coeffs.b(i, j) * tr.evals[i - j];
            a_bar += xp_bar.dot(xp);
            b_bar += xp_bar.dot(pred);
            for (int j = 1; j <= m; ++j) {
                out.grad_coeffs[static_cast<Eigen::Index>(coeffs.b_index(i, j))] += sm.B * xp_bar.dot(tr.evals[i - j]);
                e_bar[i - j] += sm.B * coeffs.b(i, j) * xp_bar;
            }
            x_bar[i - 1] += sm.A * xp_bar;
        } else {
            const Vector& xb = x_bar[i];
            Vector delta = coeffs.b(i, 1) * tr.evals[i - 1];
            for (int j = 2; j <= m; ++j) delta += coeffs.b(i, j) * tr.evals[i - j];
            a_bar += xb.dot(xp);
            b_bar += xb.dot(delta);
            for (int j = 1; j <= m; ++j) {
                out.grad_coeffs[static_cast<Eigen::Index>(coeffs.b_index(i, j))] += sm.B * xb.dot(tr.evals[i - j]);
                e_bar[i - j] += sm.B * coeffs.b(i, j) * xb;
            }
            x_bar[i - 1] += sm.A * xb;
        }
        add_map_time(sm, a_bar, b_bar, ts[i - 1], ts[i]);

        if (!pc) {
            // e_{i-1} is read by steps i .. i + k - 1, all processed now.
            pull_eval(tr, coeffs, schedule, model, tr.states[i - 1], g.score_times[i - 1],
                      static_cast<std::size_t>(i - 1), e_bar[i - 1], x_bar[i - 1], tc[i - 1], out.vjp_calls);
        }
    }
    if (pc) {
        pull_eval(tr, coeffs, schedule, model, tr.states[0], g.score_times[0], 0, e_bar[0], x_bar[0], tc[0],
                  out.vjp_calls);
    }
    out.grad_x0 = std::move(x_bar[0]);
}

void backward_singlestep(const SolveTrace& tr, const SolverCoefficients& coeffs, const NoiseSchedule& schedule,
                         const EpsilonModel& model, Vector x_bar_N, AdjointResult& out) {
    const int N = tr.N();
    const int k = coeffs.order();
    const int d = static_cast<int>(x_bar_N.size());
    const TimeGrid& g = tr.grid;
    auto& ts = out.grad_steps;
    auto& tc = out.grad_score_times;
    Vector x_bar = std::move(x_bar_N);

    for (int i = N; i >= 1; --i) {
        const std::size_t base = static_cast<std::size_t>((i - 1) * k);
        const Vector& xp = tr.states[i - 1];
        const double t_prev = g.steps[i - 1];
        std::vector<Vector> kappa_bar(static_cast<std::size_t>(k), Vector::Zero(d));
        Vector xp_bar = Vector::Zero(d);

        const StepMap fm = step_map(schedule, coeffs.prediction(), coeffs.step_domain(), t_prev, g.steps[i]);
        Vector delta = coeffs.b(i, 1) * tr.evals[base];
        for (int j = 2; j <= k; ++j) delta += coeffs.b(i, j) * tr.evals[base + j - 1];
        add_map_time(fm, x_bar.dot(xp), x_bar.dot(delta), ts[i - 1], ts[i]);
        for (int j = 1; j <= k; ++j) {
            out.grad_coeffs[static_cast<Eigen::Index>(coeffs.b_index(i, j))] += fm.B * x_bar.dot(tr.evals[base + j - 1]);
            kappa_bar[j - 1] += fm.B * coeffs.b(i, j) * x_bar;
        }
        xp_bar += fm.A * x_bar;

        for (int j = k; j >= 2; --j) {
            const std::size_t e = base + static_cast<std::size_t>(j - 1);
            const double s = tr.stage_times[e];
            Vector u_bar = Vector::Zero(d);
            double s_bar = 0.0;
            pull_eval(tr, coeffs, schedule, model, tr.stage_inputs[e], s, e, kappa_bar[j - 1], u_bar, s_bar,
                      out.vjp_calls);

            const StepMap sm = step_map(schedule, coeffs.prediction(), coeffs.step_domain(), t_prev, s);
            Vector mix = coeffs.ss_a(i, j, 1) * tr.evals[base];
            for (int l = 2; l < j; ++l) mix += coeffs.ss_a(i, j, l) * tr.evals[base + l - 1];
            for (int l = 1; l < j; ++l) {
                out.grad_coeffs[static_cast<Eigen::Index>(coeffs.ss_a_index(i, j, l))] +=
                    sm.B * u_bar.dot(tr.evals[base + l - 1]);
                kappa_bar[l - 1] += sm.B * coeffs.ss_a(i, j, l) * u_bar;
            }
            xp_bar += sm.A * u_bar;
            add_map_time(sm, u_bar.dot(xp), u_bar.dot(mix), ts[i - 1], s_bar);

            if (!tr.stage_clamped[e]) {
                // s = t_lambda(lambda(t_prev) + c)
                const double dl_s = schedule.derivatives(s).dlambda;
                const double dl_p = schedule.derivatives(t_prev).dlambda;
                out.grad_coeffs[static_cast<Eigen::Index>(coeffs.ss_c_index(i, j))] += s_bar / dl_s;
                ts[i - 1] += s_bar * dl_p / dl_s;
            }
        }
        pull_eval(tr, coeffs, schedule, model, xp, g.score_times[i - 1], base, kappa_bar[0], xp_bar, tc[i - 1],
                  out.vjp_calls);
        x_bar = std::move(xp_bar);
    }
    out.grad_x0 = std::move(x_bar);
}

}  // namespace

AdjointResult backward(const SolveTrace& trace, const SolverCoefficients& coeffs,
                       const LearnableTimeParams* params, const NoiseSchedule& schedule,
                       const EpsilonModel& model, const Vector& loss_cotangent) {
    const int N = trace.N();
    if (trace.kind != coeffs.kind() || trace.order != coeffs.order() || N != coeffs.steps() ||
        trace.grid.N() != N) {
        throw ArgumentError("backward: trace does not match coefficients");
    }
    if (loss_cotangent.size() != trace.terminal().size()) {
        throw ArgumentError("backward: cotangent dimension differs from state dimension");
    }
    const std::size_t expected_evals = static_cast<std::size_t>(expected_nfe(coeffs.kind(), coeffs.order(), N));
    if (trace.evals.size() != expected_evals) throw ArgumentError("backward: trace evaluation cache is incomplete");
    if (params != nullptr && params->N() != N) throw ArgumentError("backward: time params have wrong length");

    AdjointResult out;
    out.grad_coeffs = Vector::Zero(static_cast<Eigen::Index>(coeffs.size()));
    out.grad_steps.assign(static_cast<std::size_t>(N + 1), 0.0);
    out.grad_score_times.assign(static_cast<std::size_t>(N + 1), 0.0);
    if (coeffs.kind() == SolverKind::Ss) {
        backward_singlestep(trace, coeffs, schedule, model, loss_cotangent, out);
    } else {
        backward_multistep(trace, coeffs, schedule, model, loss_cotangent, out);
    }
    if (params != nullptr) {
        TimeParamsGradient tg = grid_gradient_vjp(*params, schedule, out.grad_steps, out.grad_score_times);
        out.grad_xi = std::move(tg.xi);
        out.grad_xi_c = std::move(tg.xi_c);
    }
    return out;
}

AdjointResult loss_gradients(const SolveTrace& trace, const SolverCoefficients& coeffs,
                             const LearnableTimeParams* params, const NoiseSchedule& schedule,
                             const EpsilonModel& model, LossKind loss, const Vector& target) {
    const Vector& x = trace.terminal();
    AdjointResult r = backward(trace, coeffs, params, schedule, model, terminal_loss_gradient(loss, x, target));
    r.loss_value = terminal_loss(loss, x, target);
    return r;
}

namespace {

NoiseSchedule default_schedule(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::VpLinear: return NoiseSchedule::vp_linear();
        case ScheduleKind::Ve: return NoiseSchedule::ve();
        case ScheduleKind::Edm: return NoiseSchedule::edm();
    }
    throw ArgumentError("unknown schedule kind");
}

GaussianMixtureScore random_mixture(std::mt19937_64& rng, int dim, int components) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<MixtureComponent> comps(static_cast<std::size_t>(components));
    double total = 0.0;
    for (auto& c : comps) {
        c.weight = 0.2 + unit(rng);
        total += c.weight;
        c.mean = Vector(dim);
        for (int q = 0; q < dim; ++q) c.mean[q] = 1.5 * normal(rng);
        c.scale2 = 0.05 + 0.45 * unit(rng);
    }
    for (auto& c : comps) c.weight /= total;
    return GaussianMixtureScore(std::move(comps));
}

Preset base_preset(SolverKind kind) {
    switch (kind) {
        case SolverKind::Lms: return Preset::AdamsBashforth;
        case SolverKind::Pc: return Preset::UniPc;
        case SolverKind::Ss: return Preset::DpmSolverSingle;
    }
    return Preset::GaussianRandom;
}

double block_deviation(const Vector& adj, const Vector& fd) {
    if (adj.size() == 0) return 0.0;
    const double scale = std::max(fd.lpNorm<Eigen::Infinity>(), 1e-8);
    return (adj - fd).lpNorm<Eigen::Infinity>() / scale;
}

struct Instance {
    NoiseSchedule schedule;
    GaussianMixtureScore model;
    SolverCoefficients coeffs;
    LearnableTimeParams params;
    Vector x_T;
    Vector target;
};

double instance_loss(const Instance& in, const Vector& phi, const LearnableTimeParams& params, const Vector& x) {
    SolverCoefficients c = in.coeffs;
    c.set_values(phi);
    const TimeGrid g = materialize(params, in.schedule);
    const SolveTrace tr = solve(c, in.schedule, g, in.model, x);
    return terminal_loss(LossKind::L2, tr.terminal(), in.target);
}

}  // namespace

GradientCheckReport check_gradients(const GradientCheckSpec& spec, double tolerance) {
    GradientCheckReport report;
    report.tolerance = tolerance;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const NoiseSchedule schedule = default_schedule(spec.schedule);
    const double h = spec.fd_step;

    for (int inst = 0; inst < spec.instances; ++inst) {
        const TimeGrid base = heuristic_grid(schedule, spec.steps, GridKind::LogSnr);
        LearnableTimeParams params = params_from_grid(base, schedule);
        for (Eigen::Index n = 0; n < params.xi.size(); ++n) params.xi[n] += 0.2 * normal(rng);
        {
            const TimeGrid g = materialize(params, schedule);
            double min_gap = g.steps[0] - g.steps[1];
            for (int n = 1; n < spec.steps; ++n) min_gap = std::min(min_gap, g.steps[n] - g.steps[n + 1]);
            const double delta = params.clip_fraction * min_gap;
            for (int n = 1; n < spec.steps; ++n) {
                params.xi_c[n] = unit(rng) < 0.2 ? (unit(rng) < 0.5 ? -1.5 : 1.5) * delta
                                                 : (1.6 * unit(rng) - 0.8) * delta;
            }
        }
        const TimeGrid grid = materialize(params, schedule);
        const Preset preset = spec.order <= 3 ? base_preset(spec.kind) : Preset::GaussianRandom;
        SolverCoefficients coeffs =
            init_preset(spec.kind, spec.order, spec.steps, preset, spec.prediction, schedule, grid, rng(), spec.domain);
        const double jitter = preset == Preset::GaussianRandom ? 0.0 : 0.1;
        for (std::size_t n = 0; n < coeffs.size(); ++n) {
            if (coeffs.is_active(n)) coeffs.values()[static_cast<Eigen::Index>(n)] += jitter * normal(rng);
        }
        const TiedLayout tie = tie_steps(coeffs);
        if (spec.tied) coeffs.set_values(tie.expand(tie.restrict(coeffs.values())));
        Instance in{schedule, random_mixture(rng, spec.dim, spec.components), coeffs, params, Vector(spec.dim),
                    Vector(spec.dim)};
        for (int q = 0; q < spec.dim; ++q) {
            in.x_T[q] = schedule.tilde_sigma() * normal(rng);
            in.target[q] = normal(rng);
        }

        const SolveTrace tr = solve(in.coeffs, schedule, grid, in.model, in.x_T);
        const AdjointResult adj = loss_gradients(tr, in.coeffs, &params, schedule, in.model, LossKind::L2, in.target);

        // Coefficient block, through the tied parametrization when requested.
        const Vector theta = spec.tied ? tie.restrict(in.coeffs.values()) : in.coeffs.values();
        const Vector g_coeffs_adj = spec.tied ? tie.reduce(adj.grad_coeffs) : adj.grad_coeffs;
        auto phi_of = [&](const Vector& th) { return spec.tied ? tie.expand(th) : th; };
        Vector g_coeffs_fd(theta.size());
        for (Eigen::Index n = 0; n < theta.size(); ++n) {
            Vector tp = theta, tm = theta;
            tp[n] += h;
            tm[n] -= h;
            g_coeffs_fd[n] =
                (instance_loss(in, phi_of(tp), params, in.x_T) - instance_loss(in, phi_of(tm), params, in.x_T)) / (2 * h);
        }

        const Eigen::Index nt = params.xi.size();
        Vector g_time_adj(2 * nt), g_time_fd(2 * nt);
        g_time_adj << adj.grad_xi, adj.grad_xi_c;
        for (Eigen::Index n = 0; n < 2 * nt; ++n) {
            LearnableTimeParams pp = params, pm = params;
            Vector& vp = n < nt ? pp.xi : pp.xi_c;
            Vector& vm = n < nt ? pm.xi : pm.xi_c;
            const Eigen::Index q = n < nt ? n : n - nt;
            vp[q] += h;
            vm[q] -= h;
            g_time_fd[n] = (instance_loss(in, in.coeffs.values(), pp, in.x_T) -
                            instance_loss(in, in.coeffs.values(), pm, in.x_T)) /
                           (2 * h);
        }

        Vector g_x_fd(spec.dim);
        for (int q = 0; q < spec.dim; ++q) {
            Vector xp = in.x_T, xm = in.x_T;
            const double hx = h * std::max(1.0, std::abs(in.x_T[q]));
            xp[q] += hx;
            xm[q] -= hx;
            g_x_fd[q] = (instance_loss(in, in.coeffs.values(), params, xp) -
                         instance_loss(in, in.coeffs.values(), params, xm)) /
                        (2 * hx);
        }

        const double dc = block_deviation(g_coeffs_adj, g_coeffs_fd);
        const double dt = block_deviation(g_time_adj, g_time_fd);
        const double dx = block_deviation(adj.grad_x0, g_x_fd);
        report.max_rel_coeffs = std::max(report.max_rel_coeffs, dc);
        report.max_rel_time = std::max(report.max_rel_time, dt);
        report.max_rel_x = std::max(report.max_rel_x, dx);
        if (dc > tolerance || dt > tolerance || dx > tolerance) {
            std::ostringstream os;
            os << "instance " << inst << ": coeffs " << dc << ", time " << dt << ", x " << dx;
            report.failures.push_back(os.str());
        }
        ++report.instances;
    }
    report.passed = report.failures.empty();
    return report;
}

}  // namespace fewstep
