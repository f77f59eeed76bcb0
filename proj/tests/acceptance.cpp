// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "fewstep/coefficients.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/presets.hpp"
#include "fewstep/solver.hpp"
#include "fewstep/sweep.hpp"
#include "fewstep/teacher.hpp"
#include "fewstep/trainer.hpp"

using namespace fewstep;

namespace {

using Clock = std::chrono::steady_clock;

constexpr int kSeeds = 5;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double secs) {
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void run(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(id, name, o, seconds_since(t0));
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Totals of the projection instrumentation over every training run below.
long projection_checks = 0;
long projection_violations = 0;

void tally(const TrainResult& r) {
    projection_checks += r.projection_checks;
    projection_violations += r.projection_violations;
}

struct SeedSetup {
    ExperimentConfig cfg;
    Problem problem;
    Dataset dataset;
    TrainConfig train;

    explicit SeedSetup(std::uint64_t seed)
        : cfg([&] {
              ExperimentConfig c;
              c.seed = seed;
              return c;
          }()),
          problem(Problem::from_config(cfg)),
          dataset(make_dataset(cfg, problem, 0)),
          train([&] {
              TrainConfig t = cfg.train;
              t.seed = seed;
              t.workers = 0;
              return t;
          }()) {}

    StudentSetup student(int nfe) const {
        return *make_student(problem, cfg.solver, GridKind::LogSnr, cfg.grid, nfe, cfg.seed);
    }
};

Outcome convergence_order() {
    const auto t0 = Clock::now();
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const auto model = GaussianMixtureScore::isotropic_gaussian(1, 1.0);
    Vector x(1);
    x << 0.7 * s.tilde_sigma();
    const Vector exact = *model.exact_flow(s, x, s.T(), s.t_min());
    bool ok = true;
    std::string detail;
    for (int k = 1; k <= 3; ++k) {
        double prev = 0.0;
        detail += fmt("k=%d orders", k);
        for (int N : {10, 20, 40, 80}) {
            const TimeGrid g = heuristic_grid(s, N, GridKind::LogSnr);
            const SolverCoefficients c =
                init_preset(SolverKind::Lms, k, N, Preset::AdamsBashforth, Prediction::Noise, s, g);
            const double e = (solve(c, s, g, model, x).terminal() - exact).norm();
            if (prev > 0.0) {
                const double order = std::log2(prev / e);
                ok = ok && std::abs(order - k) <= 0.3;
                detail += fmt(" %.2f", order);
            }
            prev = e;
        }
        detail += k < 3 ? "; " : "";
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 10.0, detail + fmt(" (tolerance 0.3, runtime %.2f s < 10 s)", secs)};
}

Outcome gradient_check() {
    const auto t0 = Clock::now();
    oracle::Rng rng(2024);
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const SolverKind kinds[] = {SolverKind::Lms, SolverKind::Pc, SolverKind::Ss};
    double worst[3] = {0.0, 0.0, 0.0};
    int bad = 0;
    for (int n = 0; n < 100; ++n) {
        const Prediction pred = n % 2 == 0 ? Prediction::Noise : Prediction::Data;
        const oracle::GradInstance in =
            oracle::random_instance(rng, kinds[n % 3], 2, 4, 2, pred, StepDomain::Lambda, s);
        const oracle::FdGradients fd = oracle::fd_gradients(in, 1e-5);
        const oracle::AdjointGradients adj = oracle::adjoint_gradients(in);
        const double d[3] = {oracle::rel_dev(adj.coeffs, fd.coeffs), oracle::rel_dev(adj.time, fd.time),
                             oracle::rel_dev(adj.x, fd.x)};
        bool inst_ok = true;
        for (int b = 0; b < 3; ++b) {
            worst[b] = std::max(worst[b], d[b]);
            inst_ok = inst_ok && d[b] <= 1e-4;
        }
        bad += inst_ok ? 0 : 1;
    }
    const double secs = seconds_since(t0);
    return {bad == 0 && secs < 60.0,
            fmt("100 instances (LMS/PC/SS, d=2, N=4, k=2), %d over 1e-4; worst rel dev phi %.2e, xi %.2e, "
                "x_T' %.2e; runtime %.1f s < 60 s",
                bad, worst[0], worst[1], worst[2], secs)};
}

Outcome s4s_improvement() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (int nfe : {4, 6, 8}) {
        int wins = 0;
        for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
            ExperimentConfig cfg;
            cfg.seed = seed;
            cfg.evaluation.samples = 2000;
            const Problem pb = Problem::from_config(cfg);
            Dataset ds = make_dataset(cfg, pb, 0);
            const auto samples = make_eval_samples(cfg, pb, 0);
            const StudentSetup st = *make_student(pb, cfg.solver, GridKind::LogSnr, cfg.grid, nfe, seed);
            TrainConfig tc = cfg.train;
            tc.seed = seed;
            tc.workers = 0;
            const EvalMetrics base = evaluate(st.coeffs, st.grid, pb.schedule, pb.model, samples, 0);
            const TrainResult r = train_s4s(ds, st.coeffs, st.grid, pb.schedule, pb.model, tc);
            tally(r);
            const EvalMetrics trained = evaluate(r.coeffs, st.grid, pb.schedule, pb.model, samples, 0);
            wins += !r.diverged && trained.mean_error < base.mean_error ? 1 : 0;
        }
        ok = ok && wins >= 4;
        detail += fmt("NFE %d: %d/5 seeds improved; ", nfe, wins);
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 600.0, detail + fmt("runtime %.0f s < 600 s", secs)};
}

struct ComparativeRuns {
    double alt = 0.0, coeffs_only = 0.0, schedule_only = 0.0;
    double relaxed[3] = {0.0, 0.0, 0.0};
    double constrained = 0.0, unconstrained = 0.0;
    double secs_budget = 0.0;
};

// Criteria 4, 5 and 9 share datasets per seed; each seed is generated once.
ComparativeRuns comparative_runs() {
    ComparativeRuns c;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        const SeedSetup su(seed);
        const StudentSetup st = su.student(6);
        const TrainConfig& tc = su.train;
        TrainConfig budget = tc;
        budget.epochs = 2 * tc.alternations * tc.phase_epochs;
        const auto t0 = Clock::now();
        {
            Dataset ds = su.dataset;
            const TrainResult r = train_s4s_alt(ds, st.coeffs, st.params, su.problem.schedule, su.problem.model, tc);
            tally(r);
            c.alt += r.val_error / kSeeds;
        }
        {
            Dataset ds = su.dataset;
            const TrainResult r = train_s4s(ds, st.coeffs, st.grid, su.problem.schedule, su.problem.model, budget);
            tally(r);
            c.coeffs_only += r.val_error / kSeeds;
        }
        {
            Dataset ds = su.dataset;
            TrainConfig t = budget;
            t.learn_coeffs = false;
            const TrainResult r = train_joint(ds, st.coeffs, st.params, su.problem.schedule, su.problem.model, t);
            tally(r);
            c.schedule_only += r.val_error / kSeeds;
        }
        c.secs_budget += seconds_since(t0);
        const double r0 = radius_for(tc, parameters_in_play(st.coeffs, st.coeffs.steps(), false, true, false));
        for (int i = 0; i < 3; ++i) {
            Dataset ds = su.dataset;
            TrainConfig t = tc;
            t.radius = i * r0;
            const TrainResult r = train_s4s(ds, st.coeffs, st.grid, su.problem.schedule, su.problem.model, t);
            tally(r);
            c.relaxed[i] += r.history.back().train_loss / kSeeds;
        }
        for (bool constrained : {false, true}) {
            Dataset ds = su.dataset;
            TrainConfig t = tc;
            t.consistency = constrained;
            const TrainResult r = train_s4s(ds, st.coeffs, st.grid, su.problem.schedule, su.problem.model, t);
            tally(r);
            (constrained ? c.constrained : c.unconstrained) += r.history.back().train_loss / kSeeds;
        }
    }
    return c;
}

Outcome parameter_counts() {
    int bad = 0, checked = 0;
    for (int k = 1; k <= 4; ++k) {
        for (int N = k; N <= 10; ++N) {
            const std::size_t lms = static_cast<std::size_t>(k * (2 * N + 1 - k) / 2);
            const std::size_t pc = static_cast<std::size_t>(k * (2 * N + 1 - k));
            const std::size_t ss = static_cast<std::size_t>(N * (k * k + k - 1));
            const std::size_t want[3] = {lms, pc, ss};
            const SolverKind kinds[3] = {SolverKind::Lms, SolverKind::Pc, SolverKind::Ss};
            for (int n = 0; n < 3; ++n) {
                ++checked;
                if (SolverCoefficients::parameter_count(kinds[n], k, N) != want[n] ||
                    SolverCoefficients(kinds[n], k, N, Prediction::Noise).size() != want[n]) {
                    ++bad;
                }
            }
        }
    }
    const std::size_t lms33 = SolverCoefficients::parameter_count(SolverKind::Lms, 3, 3);
    return {bad == 0 && lms33 == 6,
            fmt("%d (kind, k, N) cases, %d mismatches; LMS N=k=3 has %zu parameters", checked, bad, lms33)};
}

Outcome schedule_parametrization() {
    oracle::Rng rng(77);
    int bad = 0;
    double worst_uniform = 0.0, worst_lambda = 0.0;
    const NoiseSchedule schedules[] = {NoiseSchedule::vp_linear(), NoiseSchedule::ve(), NoiseSchedule::edm()};
    for (const NoiseSchedule& s : schedules) {
        for (int N = 1; N <= 12; ++N) {
            LearnableTimeParams p;
            p.xi = Vector::Zero(N + 1);
            p.xi_c = Vector::Zero(N + 1);
            p.clip_fraction = 0.5;
            const TimeGrid g = materialize(p, s);
            const std::vector<double> u = time_uniform(s.T(), s.t_min(), N);
            for (int n = 0; n <= N; ++n) worst_uniform = std::max(worst_uniform, std::abs(g.steps[n] - u[n]) / s.T());

            for (int trial = 0; trial < 50; ++trial) {
                for (Eigen::Index n = 0; n < p.xi.size(); ++n) p.xi[n] = rng.uniform(-3.0, 3.0);
                const TimeGrid r = materialize(p, s);
                bool ok = r.steps.front() == s.T() && r.steps.back() == s.t_min();
                for (int n = 0; n < N; ++n) ok = ok && r.steps[n] > r.steps[n + 1];
                bad += ok ? 0 : 1;
            }

            const TimeGrid l = heuristic_grid(s, N, GridKind::LogSnr);
            const double h = (s.lambda(s.t_min()) - s.lambda(s.T())) / N;
            for (int n = 0; n < N; ++n) {
                worst_lambda = std::max(worst_lambda, std::abs(s.lambda(l.steps[n + 1]) - s.lambda(l.steps[n]) - h));
            }
        }
    }
    return {bad == 0 && worst_uniform <= 1e-12 && worst_lambda <= 1e-8,
            fmt("xi=0 max deviation from uniform %.1e; %d non-monotone or moved-endpoint grids of 1800 random; "
                "logSNR step deviation in lambda %.1e <= 1e-8",
                worst_uniform, bad, worst_lambda)};
}

Outcome teacher_agreement() {
    oracle::Rng rng(5);
    TeacherConfig exact;
    exact.kind = TeacherKind::ExactGaussian;
    TeacherConfig adaptive;
    adaptive.kind = TeacherKind::AdaptiveRK;
    adaptive.rel_tol = 1e-10;
    adaptive.abs_tol = 1e-12;
    TeacherConfig fine;
    fine.kind = TeacherKind::FineFixedStep;
    fine.fine_nfe = 400;
    double worst = 0.0;
    int instances = 0;
    const NoiseSchedule schedules[] = {NoiseSchedule::vp_linear(), NoiseSchedule::ve(), NoiseSchedule::edm()};
    for (const NoiseSchedule& s : schedules) {
        for (int n = 0; n < 10; ++n) {
            const int d = rng.integer(1, 4);
            const auto m = GaussianMixtureScore::isotropic_gaussian(d, rng.uniform(0.2, 2.0), rng.normal_vector(d));
            const Vector x = rng.normal_vector(d, s.tilde_sigma());
            const Vector e = teacher_solve(exact, s, m, x);
            const Vector a = teacher_solve(adaptive, s, m, x);
            const Vector f = teacher_solve(fine, s, m, x);
            worst = std::max({worst, (a - e).norm(), (f - e).norm(), (a - f).norm()});
            ++instances;
        }
    }
    return {worst <= 1e-6, fmt("%d instances over VP/VE/EDM; worst pairwise terminal L2 %.2e <= 1e-6", instances, worst)};
}

}  // namespace

int main() {
    run(1, "AB-LMS convergence order", convergence_order);
    run(2, "adjoint vs finite differences", gradient_check);
    run(3, "S4S improves on its initialization", s4s_improvement);

    ComparativeRuns c;
    std::string comparative_error;
    double comparative_secs = 0.0;
    {
        const auto t0 = Clock::now();
        try {
            c = comparative_runs();
        } catch (const std::exception& e) {
            comparative_error = e.what();
        }
        comparative_secs = seconds_since(t0);
    }
    const auto comparative = [&](auto&& body) {
        return [&, body]() -> Outcome {
            if (!comparative_error.empty()) return {false, "exception: " + comparative_error};
            return body();
        };
    };
    report(4, "S4S-Alt vs single-block training at NFE 6",
           comparative([&] {
               const double best = std::min(c.coeffs_only, c.schedule_only);
               return Outcome{c.alt <= best && c.secs_budget < 1200.0,
                              fmt("5-seed mean val error alt %.4g, coeffs-only %.4g, schedule-only %.4g; "
                                  "budget runs %.0f s < 1200 s",
                                  c.alt, c.coeffs_only, c.schedule_only, c.secs_budget)};
           })(),
           comparative_secs);
    report(5, "relaxed objective trend",
           comparative([&] {
               return Outcome{c.relaxed[1] <= c.relaxed[0] && c.relaxed[2] <= c.relaxed[1],
                              fmt("5-seed mean final train loss r=0 %.4g, r0 %.4g, 2r0 %.4g", c.relaxed[0],
                                  c.relaxed[1], c.relaxed[2])};
           })(),
           0.0);
    report(6, "projection invariant",
           {projection_violations == 0 && projection_checks > 0,
            fmt("%ld violations over %ld post-step checks in all training runs above", projection_violations,
                projection_checks)},
           0.0);
    run(7, "parameter counts", parameter_counts);
    run(8, "schedule parametrization", schedule_parametrization);
    report(9, "consistency ablation",
           comparative([&] {
               return Outcome{c.constrained >= 0.9 * c.unconstrained,
                              fmt("5-seed mean final train loss constrained %.4g, unconstrained %.4g (%s)",
                                  c.constrained, c.unconstrained,
                                  c.constrained >= c.unconstrained ? "constrained >= unconstrained"
                                                                   : "constrained lower, within 10%")};
           })(),
           0.0);
    run(10, "teacher cross-validation", teacher_agreement);

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
