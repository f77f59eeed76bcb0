#include "selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fewstep/adjoint.hpp"
#include "fewstep/coefficients.hpp"
#include "fewstep/config.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/phi.hpp"
#include "fewstep/presets.hpp"
#include "fewstep/solver.hpp"
#include "fewstep/teacher.hpp"
#include "fewstep/trainer.hpp"

using namespace fewstep;

namespace {

struct Check {
    const char* name;
    std::function<std::string(std::mt19937_64&)> body;  // empty string on success
};

const NoiseSchedule& schedule_at(int n) {
    static const NoiseSchedule all[] = {NoiseSchedule::vp_linear(), NoiseSchedule::ve(), NoiseSchedule::edm()};
    return all[n % 3];
}

std::string parameter_counts(std::mt19937_64&) {
    for (int k = 1; k <= 4; ++k) {
        for (int N = k; N <= 10; ++N) {
            const std::size_t lms = static_cast<std::size_t>(k * (2 * N + 1 - k) / 2);
            if (SolverCoefficients::parameter_count(SolverKind::Lms, k, N) != lms ||
                SolverCoefficients::parameter_count(SolverKind::Pc, k, N) != 2 * lms ||
                SolverCoefficients::parameter_count(SolverKind::Ss, k, N) != static_cast<std::size_t>(N * (k * k + k - 1))) {
                return "count mismatch at k=" + std::to_string(k) + " N=" + std::to_string(N);
            }
        }
    }
    return "";
}

std::string grid_monotone(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 300; ++trial) {
        const NoiseSchedule& s = schedule_at(trial);
        const int N = 1 + trial % 12;
        LearnableTimeParams p;
        p.xi = Vector(N + 1);
        p.xi_c = Vector(N + 1);
        for (int n = 0; n <= N; ++n) p.xi[n] = normal(rng), p.xi_c[n] = normal(rng);
        const TimeGrid g = materialize(p, s);
        if (g.steps.front() != s.T() || g.steps.back() != s.t_min()) return "endpoint moved";
        for (int n = 0; n < N; ++n) {
            if (!(g.steps[n] > g.steps[n + 1])) return "non-monotone grid";
        }
    }
    return "";
}

std::string logsnr_uniform(std::mt19937_64&) {
    for (int n = 0; n < 3; ++n) {
        const NoiseSchedule& s = schedule_at(n);
        const TimeGrid g = heuristic_grid(s, 10, GridKind::LogSnr);
        const double h = (s.lambda(s.t_min()) - s.lambda(s.T())) / 10;
        for (int i = 0; i < 10; ++i) {
            if (std::abs(s.lambda(g.steps[i + 1]) - s.lambda(g.steps[i]) - h) > 1e-8) return "lambda step deviates";
        }
    }
    return "";
}

std::string phi_branches(std::mt19937_64&) {
    for (double h : {1e-4, 0.1, 0.49}) {
        const PhiTable a = phi_series(h, 4);
        const PhiTable b = phi_recurrence(h, 4);
        // phi_3 and phi_4 by recurrence cancel catastrophically near zero
        const int top = h < 0.01 ? 2 : 4;
        for (int k = 1; k <= top; ++k) {
            if (std::abs(a[k] - b[k]) > 1e-10) return "phi branches disagree at h=" + std::to_string(h);
        }
    }
    return "";
}

std::string consistency_projection(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (SolverKind kind : {SolverKind::Lms, SolverKind::Pc, SolverKind::Ss}) {
        SolverCoefficients c(kind, 3, 5, Prediction::Noise);
        for (Eigen::Index n = 0; n < c.values().size(); ++n) c.values()[n] = normal(rng);
        project_consistency(c);
        for (const auto& row : c.weight_rows()) {
            double sum = 0.0;
            for (std::size_t n : row) sum += c.values()[static_cast<Eigen::Index>(n)];
            if (std::abs(sum - 1.0) > 1e-12) return "row sum " + std::to_string(sum);
        }
    }
    return "";
}

std::string ball_projection(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        Vector x(3), xp(3);
        for (int q = 0; q < 3; ++q) x[q] = normal(rng), xp[q] = x[q] + 5.0 * normal(rng);
        const double r = 0.01 * (trial % 20);
        const Vector y = project_ball(xp, x, r, 80.0);
        if ((y - x).norm() > r * 80.0 + 1e-12) return "projection outside the ball";
    }
    return "";
}

std::string presets_converge(std::mt19937_64&) {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const auto model = GaussianMixtureScore::isotropic_gaussian(1, 1.0);
    Vector x(1);
    x << 0.5;
    const Vector exact = *model.exact_flow(s, x, s.T(), s.t_min());
    for (Preset p : {Preset::Ipndm, Preset::DpmSolverPP, Preset::AdamsBashforth}) {
        double err[2];
        for (int n = 0; n < 2; ++n) {
            const int N = n == 0 ? 10 : 40;
            const TimeGrid g = heuristic_grid(s, N, GridKind::LogSnr);
            const SolverCoefficients c = init_preset(SolverKind::Lms, 3, N, p, Prediction::Noise, s, g);
            err[n] = (solve(c, s, g, model, x).terminal() - exact).norm();
        }
        // at least first order from N = 10 to N = 40; iPNDM's constant weights are only first order here
        if (!(err[1] < err[0] / 4.0)) {
            return std::string(to_string(p)) + " error " + std::to_string(err[0]) + " -> " + std::to_string(err[1]);
        }
    }
    return "";
}

std::string teachers_agree(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    TeacherConfig exact, adaptive, fine;
    exact.kind = TeacherKind::ExactGaussian;
    adaptive.kind = TeacherKind::AdaptiveRK;
    adaptive.rel_tol = 1e-10;
    adaptive.abs_tol = 1e-12;
    fine.kind = TeacherKind::FineFixedStep;
    for (int n = 0; n < 6; ++n) {
        const NoiseSchedule& s = schedule_at(n);
        const auto m = GaussianMixtureScore::isotropic_gaussian(2, 0.5 + 0.25 * n);
        Vector x(2);
        x << s.tilde_sigma() * normal(rng), s.tilde_sigma() * normal(rng);
        const Vector e = teacher_solve(exact, s, m, x);
        if ((teacher_solve(adaptive, s, m, x) - e).norm() > 1e-6 || (teacher_solve(fine, s, m, x) - e).norm() > 1e-6) {
            return std::string("teachers disagree on ") + std::string(to_string(s.kind()));
        }
    }
    return "";
}

std::string gradients(std::mt19937_64& rng) {
    for (SolverKind kind : {SolverKind::Lms, SolverKind::Pc, SolverKind::Ss}) {
        GradientCheckSpec spec;
        spec.kind = kind;
        spec.instances = 10;
        spec.seed = rng();
        const GradientCheckReport r = check_gradients(spec, 1e-4);
        if (!r.passed) return std::string(to_string(kind)) + ": " + (r.failures.empty() ? "" : r.failures.front());
    }
    return "";
}

std::string config_round_trip(std::mt19937_64& rng) {
    ExperimentConfig c;
    c.seed = rng();
    c.train.seed = c.seed;
    c.solver.kind = SolverKind::Pc;
    c.solver.preset = Preset::UniPc;
    c.nfe = {3, 5, 7};
    if (!(config_from_json(config_to_json(c)) == c)) return "config changed across a JSON round trip";
    return "";
}

}  // namespace

int run_selftest(std::uint64_t seed, int workers) {
    const std::vector<Check> checks = {
        {"parameter counts", parameter_counts},
        {"random grids monotone with pinned endpoints", grid_monotone},
        {"logSNR grid uniform in lambda", logsnr_uniform},
        {"phi series and recurrence agree", phi_branches},
        {"consistency projection sums rows to one", consistency_projection},
        {"ball projection bound", ball_projection},
        {"multistep presets converge", presets_converge},
        {"teacher routes agree", teachers_agree},
        {"adjoint matches finite differences", gradients},
        {"config JSON round trip", config_round_trip},
    };
    std::printf("selftest seed %llu, %d workers\n", static_cast<unsigned long long>(seed), workers);
    std::mt19937_64 rng(seed);
    int failed = 0;
    for (const Check& c : checks) {
        std::string err;
        try {
            err = c.body(rng);
        } catch (const std::exception& e) {
            err = std::string("exception: ") + e.what();
        }
        std::printf("  %s %s%s%s\n", err.empty() ? "ok  " : "FAIL", c.name, err.empty() ? "" : ": ", err.c_str());
        failed += err.empty() ? 0 : 1;
    }
    std::printf("%d of %zu checks failed\n", failed, checks.size());
    return failed == 0 ? 0 : 1;
}
