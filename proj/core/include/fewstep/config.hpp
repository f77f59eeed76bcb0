#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewstep/coefficients.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/presets.hpp"
#include "fewstep/schedule.hpp"
#include "fewstep/score_model.hpp"
#include "fewstep/teacher.hpp"
#include "fewstep/trainer.hpp"

namespace fewstep {

inline constexpr int kConfigVersion = 1;

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::VpLinear;
    double beta_min = 0.1;
    double beta_max = 20.0;
    double sigma_min = 0.01;
    double sigma_max = 50.0;
    std::optional<double> T;            // family default when absent
    std::optional<double> t_min;        // 1e-3 T when absent
    std::optional<double> tilde_sigma;  // family default when absent

    NoiseSchedule build() const;
    bool operator==(const ScheduleSpec&) const = default;
};

struct ProblemSpec {
    ScheduleSpec schedule;
    std::vector<MixtureComponent> components;  // empty means the default toy mixture

    GaussianMixtureScore build_model() const;
    bool operator==(const ProblemSpec&) const = default;
};

struct SolverSpec {
    SolverKind kind = SolverKind::Lms;
    int order = 3;
    Preset preset = Preset::Ipndm;
    Prediction prediction = Prediction::Noise;
    StepDomain domain = StepDomain::Lambda;
    int nfe = 6;

    bool operator==(const SolverSpec&) const = default;
};

struct GridSpec {
    GridKind kind = GridKind::LogSnr;
    double rho = 7.0;
    double clip_fraction = 0.5;

    bool operator==(const GridSpec&) const = default;
};

struct DatasetSpec {
    std::size_t count = 900;
    double validation_fraction = 2.0 / 9.0;
    std::string path = "dataset.bin";  // relative paths resolve against the output directory

    bool operator==(const DatasetSpec&) const = default;
};

struct EvalSpec {
    std::size_t samples = 200;

    bool operator==(const EvalSpec&) const = default;
};

struct SweepSpec {
    std::vector<GridKind> grids{GridKind::LogSnr};
    std::vector<SolverSpec> solvers{SolverSpec{}};
    std::vector<TrainMode> modes{TrainMode::S4S};

    bool operator==(const SweepSpec&) const = default;
};

struct ExperimentConfig {
    int version = kConfigVersion;
    std::uint64_t seed = 0;
    ProblemSpec problem;
    SolverSpec solver;
    GridSpec grid;
    TeacherConfig teacher;
    DatasetSpec dataset;
    TrainMode mode = TrainMode::S4S;
    TrainConfig train;  // seed and workers are taken from the top level and the environment
    EvalSpec evaluation;
    std::vector<int> nfe{4, 6, 8};
    SweepSpec sweep;
    std::string out_dir = "out";

    bool operator==(const ExperimentConfig&) const = default;
};

// Strict parsing: unknown keys and wrong types raise ParseError naming the
// dotted key path.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& config);

// FNV-1a over the canonical dump of the problem, solver and grid sections.
std::uint64_t config_hash(const ExperimentConfig& config);

// Solver steps for an NFE budget, or nullopt when the cell is infeasible.
std::optional<int> steps_for_nfe(SolverKind kind, int order, int nfe);

}  // namespace fewstep
