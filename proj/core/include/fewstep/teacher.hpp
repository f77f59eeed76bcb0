#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewstep/coefficients.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/presets.hpp"
#include "fewstep/schedule.hpp"
#include "fewstep/score_model.hpp"

namespace fewstep {

enum class TeacherKind { ExactGaussian, AdaptiveRK, FineFixedStep };

std::string_view to_string(TeacherKind kind);
TeacherKind teacher_kind_from_string(std::string_view name);

struct TeacherConfig {
    TeacherKind kind = TeacherKind::AdaptiveRK;
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    long max_steps = 1'000'000;  // attempted adaptive steps before AccuracyError
    int fine_nfe = 400;
    SolverKind fine_solver = SolverKind::Lms;
    int fine_order = 4;
    Preset fine_preset = Preset::AdamsBashforth;
    Prediction fine_prediction = Prediction::Data;
    GridKind fine_grid = GridKind::LogSnr;

    bool operator==(const TeacherConfig&) const = default;
};

// Solution of the probability-flow ODE from (x_T, T) down to t_min.
Vector teacher_solve(const TeacherConfig& config, const NoiseSchedule& schedule, const EpsilonModel& model,
                     const Vector& x_T);

struct TrainRecord {
    std::uint64_t id = 0;
    Vector x_T;
    Vector x_T_prime;
    Vector teacher_out;
};

struct Dataset {
    int dim = 0;
    std::vector<TrainRecord> records;
    std::size_t train_count = 0;  // records[0, train_count) train, the rest validate

    std::span<TrainRecord> train() { return {records.data(), train_count}; }
    std::span<const TrainRecord> train() const { return {records.data(), train_count}; }
    std::span<const TrainRecord> validation() const {
        return {records.data() + train_count, records.size() - train_count};
    }
};

// x_T ~ N(0, tilde_sigma^2 I) drawn in record order from `seed`; teacher
// solves run in parallel. validation_fraction of the records (rounded) go to
// the validation split.
Dataset generate_dataset(const TeacherConfig& config, const NoiseSchedule& schedule, const EpsilonModel& model,
                         std::size_t count, std::uint64_t seed, double validation_fraction, int workers = 0);

// Independent draws for evaluation; the student only ever sees x_T.
struct EvalSample {
    Vector x_T;
    Vector teacher_out;
};

std::vector<EvalSample> generate_eval_samples(const TeacherConfig& config, const NoiseSchedule& schedule,
                                              const EpsilonModel& model, std::size_t count, std::uint64_t seed,
                                              int workers = 0);

std::uint64_t record_id(std::uint64_t seed, std::uint64_t index);

void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);
// FNV-1a over the serialized bytes.
std::uint64_t dataset_checksum(const Dataset& dataset);

}  // namespace fewstep
