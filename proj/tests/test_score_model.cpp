#include <doctest.h>

#include <cmath>
#include <memory>

#include "fewstep/errors.hpp"
#include "fewstep/schedule.hpp"
#include "fewstep/score_model.hpp"
#include "oracles.hpp"

using namespace fewstep;

namespace {

// Random mixture in dimension d with n components.
GaussianMixtureScore random_mixture(oracle::Rng& rng, int d, int n) {
    std::vector<MixtureComponent> comps;
    double total = 0.0;
    std::vector<double> w(n);
    for (int j = 0; j < n; ++j) total += (w[j] = rng.uniform(0.2, 1.0));
    for (int j = 0; j < n; ++j) {
        comps.push_back({w[j] / total, rng.normal_vector(d, 1.5), rng.uniform(0.05, 2.0)});
    }
    // Renormalize so rounding in the quotient cannot trip the sum check.
    double s = 0.0;
    for (int j = 0; j + 1 < n; ++j) s += comps[j].weight;
    comps.back().weight = 1.0 - s;
    return GaussianMixtureScore(std::move(comps));
}

oracle::Vec direct_eps(const GaussianMixtureScore& m, const NoiseSchedule& s, const oracle::Vec& x, double t) {
    const double a = s.alpha(t);
    const double sg = s.sigma(t);
    std::vector<double> w;
    std::vector<oracle::Vec> mean;
    std::vector<double> var;
    for (const auto& c : m.components()) {
        w.push_back(c.weight);
        mean.push_back(a * c.mean);
        var.push_back(a * a * c.scale2 + sg * sg);
    }
    return -sg * oracle::mixture_score_direct(x, w, mean, var);
}

}  // namespace

TEST_SUITE("score_models") {

TEST_CASE("mixture epsilon matches the density gradient") {
    oracle::Rng rng(11);
    const NoiseSchedule schedules[] = {NoiseSchedule::vp_linear(), NoiseSchedule::ve(), NoiseSchedule::edm()};
    for (int trial = 0; trial < 60; ++trial) {
        const int d = rng.integer(1, 4);
        const GaussianMixtureScore m = random_mixture(rng, d, rng.integer(1, 4));
        const NoiseSchedule& s = schedules[trial % 3];
        const double t = rng.uniform(0.05 * s.T(), s.T());
        const oracle::Vec x = rng.normal_vector(d, 1.0 + 0.5 * s.sigma(t));
        const Vector got = m.epsilon(s, x, t);
        CHECK(oracle::rel_dev(got, direct_eps(m, s, x, t)) <= 1e-9);
        CHECK((m.score(s, x, t) * (-s.sigma(t)) - got).norm() <= 1e-12 * std::max(1.0, got.norm()));
    }
}

TEST_CASE("Gaussian epsilon is linear in the state") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const Vector mu = (Vector(2) << 1.0, -2.0).finished();
    const GaussianMixtureScore m = GaussianMixtureScore::isotropic_gaussian(2, 0.5, mu);
    CHECK(m.kind() == ScoreModelKind::IsotropicGaussian);
    const double t = 0.4;
    const double a = s.alpha(t);
    const double sg = s.sigma(t);
    const Vector x = (Vector(2) << 0.3, 0.9).finished();
    const Vector expected = sg * (x - a * mu) / (a * a * 0.5 + sg * sg);
    CHECK((m.epsilon(s, x, t) - expected).norm() <= 1e-14);
}

TEST_CASE("far-field evaluations stay finite") {
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    CHECK(m.kind() == ScoreModelKind::GaussianMixture);
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const Vector x = (Vector(2) << 400.0, -350.0).finished();
    CHECK(m.epsilon(s, x, s.t_min()).allFinite());
    CHECK(m.epsilon_vjp(s, x, s.t_min(), Vector::Ones(2)).x.allFinite());
}

TEST_CASE("pullback matches finite differences in state and time") {
    oracle::Rng rng(5);
    const NoiseSchedule schedules[] = {NoiseSchedule::vp_linear(), NoiseSchedule::ve(), NoiseSchedule::edm()};
    for (int trial = 0; trial < 40; ++trial) {
        const int d = rng.integer(1, 3);
        const GaussianMixtureScore m = random_mixture(rng, d, rng.integer(1, 3));
        const NoiseSchedule& s = schedules[trial % 3];
        const double t = rng.uniform(0.1 * s.T(), 0.9 * s.T());
        const Vector x = rng.normal_vector(d, 1.0 + 0.5 * s.sigma(t));
        const Vector c = rng.normal_vector(d);
        const VjpResult v = m.epsilon_vjp(s, x, t, c);
        const auto f = [&](const oracle::Vec& y) { return c.dot(m.epsilon(s, y, t)); };
        CHECK(oracle::rel_dev(v.x, oracle::central_gradient(f, x, 1e-5), 1e-6) <= 1e-6);
        const double e = 1e-6 * s.T();
        const double ft = (c.dot(m.epsilon(s, x, t + e)) - c.dot(m.epsilon(s, x, t - e))) / (2.0 * e);
        CHECK(v.t == doctest::Approx(ft).epsilon(1e-5).scale(1e-6));
    }
}

TEST_CASE("data prediction pullback matches finite differences") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    const Vector x = (Vector(2) << 0.6, -0.4).finished();
    const Vector c = (Vector(2) << 0.3, 1.1).finished();
    const double t = 0.3;
    const Vector out = model_output(Prediction::Data, m, s, x, t);
    const VjpResult v = model_output_vjp(Prediction::Data, m, s, x, t, out, c);
    const auto f = [&](const oracle::Vec& y) { return c.dot(data_prediction(m, s, y, t)); };
    CHECK(oracle::rel_dev(v.x, oracle::central_gradient(f, x, 1e-6)) <= 1e-6);
    const double e = 1e-6;
    const double ft = (c.dot(data_prediction(m, s, x, t + e)) - c.dot(data_prediction(m, s, x, t - e))) / (2 * e);
    CHECK(v.t == doctest::Approx(ft).epsilon(1e-5));
}

TEST_CASE("Tweedie map and its inverse round-trip") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    oracle::Rng rng(3);
    for (int n = 0; n < 50; ++n) {
        const double t = rng.uniform(s.t_min() * 10, s.T());
        const Vector x = rng.normal_vector(2);
        const Vector eps = m.epsilon(s, x, t);
        const Vector xh = data_prediction(m, s, x, t);
        CHECK((xh - (x - s.sigma(t) * eps) / s.alpha(t)).norm() <= 1e-12 * std::max(1.0, xh.norm()));
        CHECK((epsilon_from_data(s, x, xh, t) - eps).norm() <= 1e-8);
    }
    CHECK(prediction_from_string(to_string(Prediction::Data)) == Prediction::Data);
    CHECK_THROWS_AS(prediction_from_string("velocity"), ArgumentError);
}

TEST_CASE("closed-form Gaussian flow") {
    const Vector mu = (Vector(3) << 0.5, 0.0, -1.0).finished();
    const GaussianMixtureScore m = GaussianMixtureScore::isotropic_gaussian(3, 2.0, mu);
    for (const NoiseSchedule& s : {NoiseSchedule::vp_linear(), NoiseSchedule::edm()}) {
        const Vector x = (Vector(3) << 1.0, 2.0, -0.5).finished();
        const auto flow = m.exact_flow(s, x, s.T(), s.t_min());
        REQUIRE(flow.has_value());
        const Vector ref =
            oracle::gaussian_flow(x, mu, 2.0, s.alpha(s.T()), s.sigma(s.T()), s.alpha(s.t_min()), s.sigma(s.t_min()));
        CHECK((*flow - ref).norm() <= 1e-12 * ref.norm());
    }
    CHECK_FALSE(GaussianMixtureScore::default_toy().exact_flow(NoiseSchedule::edm(), Vector::Zero(2), 80.0, 1.0));
}

TEST_CASE("invalid mixtures and inputs are rejected") {
    CHECK_THROWS_AS(GaussianMixtureScore({}), ArgumentError);
    CHECK_THROWS_AS(GaussianMixtureScore({{0.5, Vector::Zero(2), 1.0}, {0.5, Vector::Zero(3), 1.0}}), ArgumentError);
    CHECK_THROWS_AS(GaussianMixtureScore({{0.7, Vector::Zero(2), 1.0}}), ArgumentError);
    CHECK_THROWS_AS(GaussianMixtureScore({{1.0, Vector::Zero(2), -1.0}}), ArgumentError);
    CHECK_THROWS_AS(GaussianMixtureScore::isotropic_gaussian(0, 1.0), ArgumentError);
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    CHECK_THROWS_AS(m.epsilon(s, Vector::Zero(3), 0.5), ArgumentError);
    Vector bad = Vector::Zero(2);
    bad[0] = NAN;
    CHECK_THROWS_AS(m.epsilon(s, bad, 0.5), NumericalError);
}

TEST_CASE("counting decorator tallies evaluations") {
    auto inner = std::make_shared<GaussianMixtureScore>(GaussianMixtureScore::default_toy());
    const CountingModel m(inner);
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const Vector x = Vector::Ones(2);
    for (int n = 0; n < 7; ++n) m.epsilon(s, x, 0.5);
    m.epsilon_vjp(s, x, 0.5, x);
    CHECK(m.forward_calls() == 7);
    CHECK(m.pullback_calls() == 1);
    CHECK((m.epsilon(s, x, 0.5) - inner->epsilon(s, x, 0.5)).norm() == 0.0);
    m.reset();
    CHECK(m.forward_calls() == 0);
}

}  // TEST_SUITE
