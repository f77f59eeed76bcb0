#include <doctest.h>

#include <cmath>
#include <memory>

#include "fewstep/errors.hpp"
#include "fewstep/exact_step.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/presets.hpp"
#include "fewstep/solver.hpp"
#include "oracles.hpp"

using namespace fewstep;

namespace {

class ConstantModel final : public EpsilonModel {
public:
    explicit ConstantModel(Vector c) : c_(std::move(c)) {}
    int dim() const override { return static_cast<int>(c_.size()); }
    Vector epsilon(const NoiseSchedule&, const Vector&, double) const override { return c_; }
    VjpResult epsilon_vjp(const NoiseSchedule&, const Vector&, double, const Vector& ct) const override {
        return {Vector::Zero(ct.size()), 0.0};
    }

private:
    Vector c_;
};

double terminal_error(const SolverCoefficients& c, const NoiseSchedule& s, const TimeGrid& g,
                      const GaussianMixtureScore& m, const Vector& x) {
    const Vector ref = *m.exact_flow(s, x, s.T(), s.t_min());
    return (solve(c, s, g, m, x).terminal() - ref).norm();
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("step map derivatives match finite differences") {
    for (const NoiseSchedule& s : {NoiseSchedule::vp_linear(), NoiseSchedule::edm()}) {
        for (Prediction p : {Prediction::Noise, Prediction::Data}) {
            for (StepDomain d : {StepDomain::Lambda, StepDomain::Time}) {
                const double tf = 0.6 * s.T();
                const double tt = 0.45 * s.T();
                const double e = 1e-6 * s.T();
                const StepMap m = step_map(s, p, d, tf, tt);
                const StepMap fp = step_map(s, p, d, tf + e, tt);
                const StepMap fm = step_map(s, p, d, tf - e, tt);
                const StepMap tp = step_map(s, p, d, tf, tt + e);
                const StepMap tm = step_map(s, p, d, tf, tt - e);
                CHECK(m.dA_dfrom == doctest::Approx((fp.A - fm.A) / (2 * e)).epsilon(1e-6));
                CHECK(m.dA_dto == doctest::Approx((tp.A - tm.A) / (2 * e)).epsilon(1e-6));
                CHECK(m.dB_dfrom == doctest::Approx((fp.B - fm.B) / (2 * e)).epsilon(1e-6).scale(1e-9));
                CHECK(m.dB_dto == doctest::Approx((tp.B - tm.B) / (2 * e)).epsilon(1e-6).scale(1e-9));
            }
        }
    }
}

TEST_CASE("first-order step is exact for a constant model") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const Vector c = (Vector(2) << 0.4, -0.2).finished();
    const ConstantModel model(c);
    const TimeGrid g = heuristic_grid(s, 3, GridKind::LogSnr);
    const SolverCoefficients coeffs = init_preset(SolverKind::Lms, 1, 3, Preset::Ipndm, Prediction::Noise, s, g);
    const Vector x = (Vector(2) << 1.0, 0.5).finished();
    const SolveTrace tr = solve(coeffs, s, g, model, x);
    Vector ref = x;
    for (int i = 1; i <= 3; ++i) {
        ref = exact_step_integrand(s, ref, g.steps[i - 1], g.steps[i], [&](const Vector&, double) { return c; });
        CHECK((tr.states[i] - ref).norm() <= 1e-10 * ref.norm());
    }
}

TEST_CASE("first-order noise and data updates coincide") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    const TimeGrid g = heuristic_grid(s, 6, GridKind::LogSnr);
    const auto cn = init_preset(SolverKind::Lms, 1, 6, Preset::Ipndm, Prediction::Noise, s, g);
    const auto cd = init_preset(SolverKind::Lms, 1, 6, Preset::Ipndm, Prediction::Data, s, g);
    const Vector x = (Vector(2) << 0.3, -0.8).finished();
    const Vector a = solve(cn, s, g, m, x).terminal();
    const Vector b = solve(cd, s, g, m, x).terminal();
    CHECK((a - b).norm() <= 1e-10 * a.norm());
    // A single-stage singlestep solver is the same update again.
    const auto c1 = init_preset(SolverKind::Ss, 1, 6, Preset::DpmSolverSingle, Prediction::Noise, s, g);
    CHECK((solve(c1, s, g, m, x).terminal() - a).norm() <= 1e-14 * a.norm());
}

TEST_CASE("two-stage midpoint step matches a hand-written reference") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    const TimeGrid g = heuristic_grid(s, 3, GridKind::LogSnr);
    const auto c = init_preset(SolverKind::Ss, 2, 3, Preset::DpmSolverSingle, Prediction::Noise, s, g);
    const Vector x0 = (Vector(2) << 0.9, 0.1).finished();
    Vector x = x0;
    for (int i = 1; i <= 3; ++i) {
        const double tp = g.steps[i - 1];
        const double tn = g.steps[i];
        const double lm = 0.5 * (s.lambda(tp) + s.lambda(tn));
        const double tm = time_from_lambda(s, lm);
        const double h = s.lambda(tn) - s.lambda(tp);
        const Vector e0 = m.epsilon(s, x, tp);
        const Vector u = s.alpha(tm) / s.alpha(tp) * x - s.sigma(tm) * std::expm1(0.5 * h) * e0;
        const Vector e1 = m.epsilon(s, u, tm);
        x = s.alpha(tn) / s.alpha(tp) * x - s.sigma(tn) * std::expm1(h) * e1;
    }
    const SolveTrace tr = solve(c, s, g, m, x0);
    CHECK((tr.terminal() - x).norm() <= 1e-10 * x.norm());
    CHECK(tr.clamped_stages == 0);
}

TEST_CASE("PC predictor is the LMS step") {
    oracle::Rng rng(4);
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    for (int trial = 0; trial < 30; ++trial) {
        const int k = rng.integer(1, 3);
        const int N = rng.integer(k, 7);
        const TimeGrid g = heuristic_grid(s, N, GridKind::LogSnr);
        SolverCoefficients pc(SolverKind::Pc, k, N, Prediction::Noise);
        pc.set_values(rng.normal_vector(static_cast<int>(pc.size()), 0.5));
        SolverCoefficients lms(SolverKind::Lms, k, N, Prediction::Noise);
        lms.set_values(pc.values().head(static_cast<Eigen::Index>(lms.size())));
        const int i = rng.integer(1, N);
        std::vector<Vector> hist;
        for (int j = 0; j < std::min(k, i); ++j) hist.push_back(rng.normal_vector(2));
        const Vector x = rng.normal_vector(2);
        const PcStepResult r = pc_step(pc, s, g, i, x, hist, m);
        CHECK(r.predicted == lms_step(lms, s, g, i, x, hist));
    }
}

TEST_CASE("PC with a shifted corrector reduces to LMS") {
    // Rows whose last weight vanishes can be replayed by the corrector from
    // the history alone, ignoring the new evaluation.
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    const int N = 6;
    const int k = 3;
    const TimeGrid g = heuristic_grid(s, N, GridKind::LogSnr);
    SolverCoefficients lms(SolverKind::Lms, k, N, Prediction::Noise);
    SolverCoefficients pc(SolverKind::Pc, k, N, Prediction::Noise);
    lms.b(1, 1) = 1.0;
    lms.b(2, 1) = 1.0;
    for (int i = 3; i <= N; ++i) {
        lms.b(i, 1) = 1.5;
        lms.b(i, 2) = -0.5;
    }
    pc.corrector(1, 1) = 1.0;
    for (int i = 1; i <= N; ++i) {
        const int w = lms.row_width(i);
        for (int j = 1; j <= w; ++j) pc.b(i, j) = lms.b(i, j);
        for (int j = 2; j <= w; ++j) pc.corrector(i, j) = lms.b(i, j - 1);
    }
    const Vector x = (Vector(2) << 0.2, 0.6).finished();
    const SolveTrace tp = solve(pc, s, g, m, x);
    CHECK(tp.nfe_used == N + 1);
    for (int i = 2; i <= N; ++i) {
        std::vector<Vector> hist;
        for (int j = 0; j < std::min(k, i); ++j) hist.push_back(tp.evals[i - 1 - j]);
        const Vector replay = lms_step(lms, s, g, i, tp.states[i - 1], hist);
        CHECK((tp.states[i] - replay).norm() <= 1e-12 * std::max(1.0, replay.norm()));
        CHECK((tp.predicted[i - 1] - replay).norm() <= 1e-12 * std::max(1.0, replay.norm()));
    }
}

TEST_CASE("solvers use the advertised number of evaluations") {
    auto inner = std::make_shared<GaussianMixtureScore>(GaussianMixtureScore::default_toy());
    const CountingModel m(inner);
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    for (SolverKind kind : {SolverKind::Lms, SolverKind::Pc, SolverKind::Ss}) {
        for (int k = 1; k <= 3; ++k) {
            for (int N = k; N <= 6; ++N) {
                const TimeGrid g = heuristic_grid(s, N, GridKind::LogSnr);
                const Preset preset = kind == SolverKind::Lms  ? Preset::Ipndm
                                      : kind == SolverKind::Pc ? Preset::UniPc
                                                               : Preset::DpmSolverSingle;
                const auto c = init_preset(kind, k, N, preset, Prediction::Noise, s, g);
                m.reset();
                const SolveTrace tr = solve(c, s, g, m, Vector::Ones(2));
                CHECK(m.forward_calls() == static_cast<std::uint64_t>(expected_nfe(kind, k, N)));
                CHECK(tr.nfe_used == expected_nfe(kind, k, N));
                CHECK(tr.N() == N);
            }
        }
    }
    CHECK(expected_nfe(SolverKind::Pc, 2, 5) == 6);
    CHECK(expected_nfe(SolverKind::Ss, 3, 2) == 6);
}

TEST_CASE("higher-order presets converge faster") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::isotropic_gaussian(2, 1.0);
    const Vector x = (Vector(2) << 0.5, -1.0).finished();
    for (int k = 1; k <= 2; ++k) {
        std::vector<double> err;
        for (int N : {20, 40, 80}) {
            const TimeGrid g = heuristic_grid(s, N, GridKind::LogSnr);
            const auto c = init_preset(SolverKind::Lms, k, N, Preset::AdamsBashforth, Prediction::Noise, s, g);
            err.push_back(terminal_error(c, s, g, m, x));
        }
        const double slope = std::log2(err[1] / err[2]);
        CHECK(slope == doctest::Approx(static_cast<double>(k)).epsilon(0.15));
    }
}

TEST_CASE("stage times clamp to the schedule range") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    CHECK(ss_stage_time(s, 0.5, 0.0).t == 0.5);
    const StageTime hi = ss_stage_time(s, 0.5, 1e3);
    CHECK(hi.clamped);
    CHECK(hi.t == s.t_min());
    const StageTime lo = ss_stage_time(s, 0.5, -1e3);
    CHECK(lo.clamped);
    CHECK(lo.t == s.T());
    const StageTime mid = ss_stage_time(s, 0.5, 0.7);
    CHECK_FALSE(mid.clamped);
    CHECK(s.lambda(mid.t) == doctest::Approx(s.lambda(0.5) + 0.7).epsilon(1e-10));
}

TEST_CASE("invalid inputs and divergence are reported") {
    const NoiseSchedule s = NoiseSchedule::vp_linear();
    const GaussianMixtureScore m = GaussianMixtureScore::default_toy();
    const TimeGrid g = heuristic_grid(s, 4, GridKind::LogSnr);
    SolverCoefficients c = init_preset(SolverKind::Lms, 2, 4, Preset::Ipndm, Prediction::Noise, s, g);
    CHECK_THROWS_AS(solve(c, s, heuristic_grid(s, 5, GridKind::LogSnr), m, Vector::Ones(2)), ArgumentError);
    CHECK_THROWS_AS(solve(c, s, g, m, Vector::Ones(3)), ArgumentError);
    Vector bad = Vector::Ones(2);
    bad[1] = INFINITY;
    CHECK_THROWS_AS(solve(c, s, g, m, bad), ArgumentError);
    CHECK_THROWS_AS(lms_step(c, s, g, 1, Vector::Ones(2), {}), StateError);
    std::vector<Vector> short_hist{Vector::Ones(2)};
    CHECK_THROWS_AS(lms_step(c, s, g, 3, Vector::Ones(2), short_hist), StateError);

    c.b(2, 1) = 1e308;
    c.b(3, 1) = 1e308;
    try {
        solve(c, s, g, m, Vector::Ones(2));
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() >= 2);
        CHECK(e.step() <= 4);
    }
}

}  // TEST_SUITE
