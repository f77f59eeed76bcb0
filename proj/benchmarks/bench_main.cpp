#include <benchmark/benchmark.h>

#include <random>

#include "fewstep/adjoint.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/presets.hpp"
#include "fewstep/solver.hpp"
#include "fewstep/teacher.hpp"

using namespace fewstep;

namespace {

struct Fixture {
    NoiseSchedule schedule = NoiseSchedule::vp_linear();
    GaussianMixtureScore model = GaussianMixtureScore::default_toy();
    Vector x_T;

    Fixture() {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> normal(0.0, 1.0);
        x_T.resize(model.dim());
        for (Eigen::Index q = 0; q < x_T.size(); ++q) x_T[q] = schedule.tilde_sigma() * normal(rng);
    }
};

SolverKind kind_of(int n) { return n == 0 ? SolverKind::Lms : n == 1 ? SolverKind::Pc : SolverKind::Ss; }

Preset preset_of(SolverKind k) {
    return k == SolverKind::Lms ? Preset::Ipndm : k == SolverKind::Pc ? Preset::UniPc : Preset::DpmSolverSingle;
}

// args: solver kind (0 LMS, 1 PC, 2 SS), steps
void BM_Solve(benchmark::State& state) {
    const Fixture f;
    const SolverKind kind = kind_of(static_cast<int>(state.range(0)));
    const int N = static_cast<int>(state.range(1));
    const TimeGrid g = heuristic_grid(f.schedule, N, GridKind::LogSnr);
    const SolverCoefficients c = init_preset(kind, 2, N, preset_of(kind), Prediction::Noise, f.schedule, g);
    for (auto _ : state) benchmark::DoNotOptimize(solve(c, f.schedule, g, f.model, f.x_T).terminal());
    state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_Solve)->ArgsProduct({{0, 1, 2}, {4, 8, 16}});

void BM_Backward(benchmark::State& state) {
    const Fixture f;
    const SolverKind kind = kind_of(static_cast<int>(state.range(0)));
    const int N = static_cast<int>(state.range(1));
    const TimeGrid g = heuristic_grid(f.schedule, N, GridKind::LogSnr);
    const LearnableTimeParams p = params_from_grid(g, f.schedule);
    const SolverCoefficients c = init_preset(kind, 2, N, preset_of(kind), Prediction::Noise, f.schedule, g);
    const Vector target = Vector::Zero(f.model.dim());
    for (auto _ : state) {
        const SolveTrace tr = solve(c, f.schedule, g, f.model, f.x_T);
        benchmark::DoNotOptimize(loss_gradients(tr, c, &p, f.schedule, f.model, LossKind::L2, target).grad_coeffs);
    }
    state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_Backward)->ArgsProduct({{0, 1, 2}, {4, 8, 16}});

// arg: teacher kind (1 adaptive RK, 2 fine fixed step)
void BM_Teacher(benchmark::State& state) {
    const Fixture f;
    TeacherConfig t;
    t.kind = state.range(0) == 1 ? TeacherKind::AdaptiveRK : TeacherKind::FineFixedStep;
    for (auto _ : state) benchmark::DoNotOptimize(teacher_solve(t, f.schedule, f.model, f.x_T));
    state.SetLabel(std::string(to_string(t.kind)));
}
BENCHMARK(BM_Teacher)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
