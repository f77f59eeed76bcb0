#include <doctest.h>

#include <cmath>

#include "fewstep/errors.hpp"
#include "fewstep/exact_step.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/phi.hpp"
#include "fewstep/schedule.hpp"
#include "fewstep/score_model.hpp"
#include "oracles.hpp"

using namespace fewstep;

namespace {

std::vector<NoiseSchedule> all_schedules() {
    return {NoiseSchedule::vp_linear(), NoiseSchedule::ve(), NoiseSchedule::edm()};
}

}  // namespace

TEST_SUITE("diffusion_core") {

TEST_CASE("alpha and sigma stay positive and SNR decreases") {
    for (const NoiseSchedule& s : all_schedules()) {
        double prev_lambda = INFINITY;
        for (int n = 0; n <= 2000; ++n) {
            const double t = s.t_min() + (s.T() - s.t_min()) * n / 2000.0;
            const ScheduleValues v = alpha_sigma_lambda(s, t);
            CHECK(v.alpha > 0.0);
            CHECK(v.sigma > 0.0);
            CHECK(v.lambda == doctest::Approx(std::log(v.alpha / v.sigma)).epsilon(1e-14));
            CHECK(v.lambda < prev_lambda);
            prev_lambda = v.lambda;
        }
    }
}

TEST_CASE("out-of-range times are rejected") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    CHECK_THROWS_AS(alpha_sigma_lambda(s, 0.5 * s.t_min()), DomainError);
    CHECK_THROWS_AS(alpha_sigma_lambda(s, 1.01 * s.T()), DomainError);
    CHECK_THROWS_AS(time_from_lambda(s, s.lambda_T() - 0.1), DomainError);
    CHECK_THROWS_AS(time_from_lambda(s, s.lambda_min() + 0.1), DomainError);
}

TEST_CASE("VP linear matches quadrature of beta") {
    const NoiseSchedule s = NoiseSchedule::vp_linear(0.1, 20.0, 1.0);
    for (double t : {s.t_min(), 0.1, 0.37, 0.8, 1.0}) {
        const double la = oracle::vp_log_alpha(t, 0.1, 20.0, 1.0);
        CHECK(std::log(s.alpha(t)) == doctest::Approx(la).epsilon(1e-10));
        CHECK(s.sigma(t) == doctest::Approx(std::sqrt(1.0 - std::exp(2.0 * la))).epsilon(1e-10));
    }
    // Terminal noise dominates the signal.
    const ScheduleValues end = alpha_sigma_lambda(s, s.T());
    CHECK(end.alpha < 0.01 * end.sigma);
    CHECK(end.lambda < 0.0);
    CHECK(s.lambda_min() > s.lambda_T());
}

TEST_CASE("unit-variance point of an alpha = 1 schedule has lambda 0") {
    const NoiseSchedule s = NoiseSchedule::edm();
    const ScheduleValues v = alpha_sigma_lambda(s, 1.0);
    CHECK(v.alpha == 1.0);
    CHECK(v.sigma == doctest::Approx(1.0));
    CHECK(v.lambda == doctest::Approx(0.0).epsilon(1e-15));
    const NoiseSchedule ve = NoiseSchedule::ve();
    const double t1 = time_from_lambda(ve, 0.0);
    CHECK(ve.sigma(t1) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("lambda inversion round-trips on 1000 sampled times") {
    oracle::Rng rng(7);
    for (const NoiseSchedule& s : all_schedules()) {
        double worst = 0.0;
        for (int n = 0; n < 1000; ++n) {
            const double t = rng.uniform(s.t_min(), s.T());
            worst = std::max(worst, std::abs(time_from_lambda(s, s.lambda(t)) - t) / s.T());
        }
        CHECK(worst <= 1e-10);
        CHECK(time_from_lambda(s, s.lambda_T()) == s.T());
    }
}

TEST_CASE("lambda midpoint matches the two-step logSNR grid") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const double mid = 0.5 * (s.lambda_T() + s.lambda_min());
    // Independent bisection on the decreasing map.
    double lo = s.t_min();
    double hi = s.T();
    for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (lo + hi);
        (s.lambda(m) > mid ? lo : hi) = m;
    }
    const TimeGrid g = heuristic_grid(s, 2, GridKind::LogSnr);
    CHECK(time_from_lambda(s, mid) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-12));
    CHECK(g.steps[1] == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-12));
}

TEST_CASE("ODE coefficients match finite differences") {
    for (const NoiseSchedule& s : all_schedules()) {
        for (double frac : {0.05, 0.3, 0.7, 0.95}) {
            const double t = s.t_min() + frac * (s.T() - s.t_min());
            const double e = 1e-6 * s.T();
            const OdeCoefficients c = s.ode_coefficients(t);
            const double f_fd = (std::log(s.alpha(t + e)) - std::log(s.alpha(t - e))) / (2.0 * e);
            const double s2_fd = (std::pow(s.sigma(t + e), 2) - std::pow(s.sigma(t - e), 2)) / (2.0 * e);
            const double g2 = s2_fd - 2.0 * f_fd * s.sigma(t) * s.sigma(t);
            CHECK(c.f_t == doctest::Approx(f_fd).epsilon(1e-6).scale(1e-12));
            CHECK(c.g_sq_t == doctest::Approx(g2).epsilon(1e-6));
            const ScheduleDerivatives d = s.derivatives(t);
            CHECK(d.dlambda == doctest::Approx((s.lambda(t + e) - s.lambda(t - e)) / (2.0 * e)).epsilon(1e-6));
        }
    }
}

TEST_CASE("phi functions at zero and closed forms at one") {
    const PhiTable z = phi_functions(0.0, 3);
    CHECK(z[1] == 1.0);
    CHECK(z[2] == 0.5);
    CHECK(z[3] == doctest::Approx(1.0 / 6.0).epsilon(1e-16));
    const PhiTable one = phi_functions(1.0, 2);
    CHECK(one[1] == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
    CHECK(one[2] == doctest::Approx(std::exp(1.0) - 2.0).epsilon(1e-14));
    const PhiTable half = phi_functions(0.5, 2);
    CHECK(half[2] == doctest::Approx((half[1] - 1.0) / 0.5).epsilon(1e-13));
    CHECK_THROWS_AS(phi_functions(0.3, 0), ArgumentError);
}

TEST_CASE("phi functions agree with quadrature of their integral form") {
    for (double z : {-6.0, -1.3, -0.4, -1e-3, 2e-5, 0.2, 0.49, 0.51, 1.7, 4.0}) {
        const PhiTable p = phi_functions(z, 4);
        for (int k = 1; k <= 4; ++k) CHECK(p[k] == doctest::Approx(oracle::phi_quadrature(z, k)).epsilon(1e-11));
    }
}

TEST_CASE("series and recurrence branches agree") {
    for (double h : {1e-4, -1e-4, 0.3, -0.45}) {
        const PhiTable a = phi_series(h, 4);
        const PhiTable b = phi_recurrence(h, 4);
        for (int k = 1; k <= 2; ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-10);
    }
    // Recurrence holds for the dispatching evaluation away from zero.
    double fact = 1.0;
    for (double z : {-2.0, -0.7, 0.6, 3.0}) {
        const PhiTable p = phi_functions(z, 5);
        fact = 1.0;
        for (int k = 1; k < 5; ++k) {
            CHECK(p[k + 1] == doctest::Approx((p[k] - 1.0 / fact) / z).epsilon(1e-12));
            fact *= (k + 1);
        }
    }
}

TEST_CASE("exact step with zero and constant integrands") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const Vector x = (Vector(3) << 0.4, -1.2, 2.0).finished();
    const double tp = 0.8;
    const double tn = 0.35;
    const Vector zero_step = exact_step_integrand(s, x, tp, tn, [](const Vector& v, double) {
        return Vector::Zero(v.size());
    });
    CHECK((zero_step - (s.alpha(tn) / s.alpha(tp)) * x).norm() == 0.0);

    const Vector c = (Vector(3) << 0.3, 0.1, -0.5).finished();
    const Vector const_step = exact_step_integrand(s, x, tp, tn, [&](const Vector&, double) { return c; });
    const double h = s.lambda(tn) - s.lambda(tp);
    const Vector expected = (s.alpha(tn) / s.alpha(tp)) * x - s.sigma(tn) * std::expm1(h) * c;
    CHECK((const_step - expected).norm() <= 1e-12);
}

TEST_CASE("exact step reproduces the Gaussian flow") {
    for (const NoiseSchedule& s : all_schedules()) {
        const GaussianMixtureScore model = GaussianMixtureScore::isotropic_gaussian(2, 1.0);
        const Vector x = (Vector(2) << 0.7, -0.3).finished() * s.tilde_sigma();
        const double tp = s.T();
        const double tn = s.t_min();
        const Vector got = exact_step_integrand(s, x, tp, tn, [&](const Vector& v, double t) {
            return model.epsilon(s, v, t);
        });
        const Vector ref = oracle::gaussian_flow(x, Vector::Zero(2), 1.0, s.alpha(tp), s.sigma(tp), s.alpha(tn),
                                                 s.sigma(tn));
        CHECK((got - ref).norm() <= 1e-8 * std::max(1.0, ref.norm()));
    }
}

}  // TEST_SUITE
