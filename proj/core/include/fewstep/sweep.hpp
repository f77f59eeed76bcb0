#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fewstep/config.hpp"
#include "fewstep/results.hpp"
#include "fewstep/teacher.hpp"
#include "fewstep/trainer.hpp"

namespace fewstep {

struct Problem {
    NoiseSchedule schedule;
    GaussianMixtureScore model;

    static Problem from_config(const ExperimentConfig& config);
};

// Seeds derived from the single config seed for each random stream.
std::uint64_t dataset_seed(std::uint64_t seed);
std::uint64_t eval_seed(std::uint64_t seed);

Dataset make_dataset(const ExperimentConfig& config, const Problem& problem, int workers = 0);
std::vector<EvalSample> make_eval_samples(const ExperimentConfig& config, const Problem& problem, int workers = 0);

struct StudentSetup {
    SolverCoefficients coeffs;
    TimeGrid grid;
    LearnableTimeParams params;
};

// Preset-initialized student for an NFE budget; nullopt when infeasible.
std::optional<StudentSetup> make_student(const Problem& problem, const SolverSpec& solver, GridKind grid_kind,
                                         const GridSpec& grid, int nfe, std::uint64_t seed);

TrainResult run_training(TrainMode mode, Dataset& dataset, const StudentSetup& setup, const Problem& problem,
                         const TrainConfig& config);

std::string solver_label(const SolverSpec& solver);

struct SweepCell {
    GridKind grid;
    SolverSpec solver;
    TrainMode mode;
    int nfe;

    std::string key() const;
};

std::vector<SweepCell> sweep_cells(const ExperimentConfig& config);

// Baseline (preset) and trained metrics for one cell. Failures are recorded
// in the row, never thrown.
ResultRow run_cell(const ExperimentConfig& config, const SweepCell& cell, const Problem& problem,
                   const Dataset& dataset, const std::vector<EvalSample>& samples);

// Runs every cell not yet present under out_dir/cells, then writes
// out_dir/sweep.csv with one row per cell in cell order.
ResultTable run_sweep(const ExperimentConfig& config, const std::string& out_dir, int workers = 0);

}  // namespace fewstep
