#include "fewstep/sweep.hpp"

#include <chrono>
#include <filesystem>
#include <mutex>

#include "fewstep/errors.hpp"
#include "fewstep/parallel.hpp"
#include "fewstep/presets.hpp"

namespace fewstep {

namespace fs = std::filesystem;

Problem Problem::from_config(const ExperimentConfig& config) {
    return Problem{config.problem.schedule.build(), config.problem.build_model()};
}

std::uint64_t dataset_seed(std::uint64_t seed) { return record_id(seed, 0xDA7A5E7ULL); }
std::uint64_t eval_seed(std::uint64_t seed) { return record_id(seed, 0xE7A1ULL); }

Dataset make_dataset(const ExperimentConfig& config, const Problem& problem, int workers) {
    return generate_dataset(config.teacher, problem.schedule, problem.model, config.dataset.count,
                            dataset_seed(config.seed), config.dataset.validation_fraction, workers);
}

std::vector<EvalSample> make_eval_samples(const ExperimentConfig& config, const Problem& problem, int workers) {
    return generate_eval_samples(config.teacher, problem.schedule, problem.model, config.evaluation.samples,
                                 eval_seed(config.seed), workers);
}

std::optional<StudentSetup> make_student(const Problem& problem, const SolverSpec& solver, GridKind grid_kind,
                                         const GridSpec& grid, int nfe, std::uint64_t seed) {
    const auto steps = steps_for_nfe(solver.kind, solver.order, nfe);
    if (!steps) return std::nullopt;
    TimeGrid g = heuristic_grid(problem.schedule, *steps, grid_kind, grid.rho);
    SolverCoefficients c =
        init_preset(solver.kind, solver.order, *steps, solver.preset, solver.prediction, problem.schedule, g, seed,
                    solver.domain);
    LearnableTimeParams p = params_from_grid(g, problem.schedule, grid.clip_fraction);
    return StudentSetup{std::move(c), std::move(g), std::move(p)};
}

TrainResult run_training(TrainMode mode, Dataset& dataset, const StudentSetup& setup, const Problem& problem,
                         const TrainConfig& config) {
    switch (mode) {
        case TrainMode::S4S:
            return train_s4s(dataset, setup.coeffs, setup.grid, problem.schedule, problem.model, config);
        case TrainMode::S4SAlt:
            return train_s4s_alt(dataset, setup.coeffs, setup.params, problem.schedule, problem.model, config);
        case TrainMode::Joint:
            return train_joint(dataset, setup.coeffs, setup.params, problem.schedule, problem.model, config);
    }
    throw ArgumentError("unknown training mode");
}

std::string solver_label(const SolverSpec& s) {
    return std::string(to_string(s.kind)) + std::to_string(s.order) + "-" + std::string(to_string(s.preset)) + "-" +
           std::string(to_string(s.prediction));
}

std::string SweepCell::key() const {
    return std::string(to_string(grid)) + "_" + solver_label(solver) + "_" + std::string(to_string(mode)) + "_nfe" +
           std::to_string(nfe);
}

std::vector<SweepCell> sweep_cells(const ExperimentConfig& config) {
    std::vector<SweepCell> cells;
    for (GridKind g : config.sweep.grids) {
        for (const SolverSpec& s : config.sweep.solvers) {
            for (int nfe : config.nfe) {
                for (TrainMode m : config.sweep.modes) cells.push_back({g, s, m, nfe});
            }
        }
    }
    return cells;
}

ResultRow run_cell(const ExperimentConfig& config, const SweepCell& cell, const Problem& problem,
                   const Dataset& dataset, const std::vector<EvalSample>& samples) {
    ResultRow row;
    row.schedule = std::string(to_string(cell.grid));
    row.solver = solver_label(cell.solver);
    row.mode = std::string(to_string(cell.mode));
    row.nfe = cell.nfe;
    const auto start = std::chrono::steady_clock::now();
    try {
        const auto setup = make_student(problem, cell.solver, cell.grid, config.grid, cell.nfe, config.seed);
        if (!setup) {
            row.status = "infeasible";
            row.message = "order exceeds the step count for this NFE";
            return row;
        }
        const EvalMetrics base = evaluate(setup->coeffs, setup->grid, problem.schedule, problem.model, samples, 1);
        Dataset ds = dataset;
        TrainConfig tc = config.train;
        tc.seed = config.seed;
        tc.workers = 1;
        const TrainResult tr = run_training(cell.mode, ds, *setup, problem, tc);
        const TimeGrid g = cell.mode == TrainMode::S4S ? setup->grid : tr.grid(problem.schedule);
        const EvalMetrics m = evaluate(tr.coeffs, g, problem.schedule, problem.model, samples, 1);
        row.status = tr.diverged ? "failed" : "ok";
        row.message = tr.message;
        row.mean_error = m.mean_error;
        row.median_error = m.median_error;
        row.max_error = m.max_error;
        row.mean_rel_error = m.mean_rel_error;
        row.nfe_used = m.nfe;
        row.baseline_mean_error = base.mean_error;
        row.delta_mean_error = m.mean_error - base.mean_error;
    } catch (const std::exception& e) {
        row.status = "failed";
        row.message = e.what();
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return row;
}

ResultTable run_sweep(const ExperimentConfig& config, const std::string& out_dir, int workers) {
    const fs::path cell_dir = fs::path(out_dir) / "cells";
    fs::create_directories(cell_dir);
    const Problem problem = Problem::from_config(config);
    const auto cells = sweep_cells(config);

    std::vector<std::optional<ResultRow>> rows(cells.size());
    std::vector<std::size_t> pending;
    for (std::size_t n = 0; n < cells.size(); ++n) {
        const fs::path p = cell_dir / (cells[n].key() + ".csv");
        if (fs::exists(p)) {
            const ResultTable t = ResultTable::read_csv(p.string());
            if (t.rows.size() == 1) {
                rows[n] = t.rows.front();
                continue;
            }
        }
        pending.push_back(n);
    }
    if (!pending.empty()) {
        const Dataset dataset = make_dataset(config, problem, workers);
        const auto samples = make_eval_samples(config, problem, workers);
        parallel_for(
            pending.size(),
            [&](std::size_t q) {
                const std::size_t n = pending[q];
                ResultRow r = run_cell(config, cells[n], problem, dataset, samples);
                ResultTable single;
                single.rows.push_back(r);
                const fs::path final_path = cell_dir / (cells[n].key() + ".csv");
                const fs::path tmp = final_path.string() + ".tmp";
                single.write_csv(tmp.string());
                fs::rename(tmp, final_path);
                rows[n] = std::move(r);
            },
            workers);
    }
    ResultTable table;
    for (auto& r : rows) table.rows.push_back(std::move(*r));
    table.write_csv((fs::path(out_dir) / "sweep.csv").string());
    return table;
}

}  // namespace fewstep
