#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewstep/adjoint.hpp"
#include "fewstep/coefficients.hpp"
#include "fewstep/grid.hpp"
#include "fewstep/schedule.hpp"
#include "fewstep/score_model.hpp"
#include "fewstep/teacher.hpp"

namespace fewstep {

enum class TrainMode { S4S, S4SAlt, Joint };

std::string_view to_string(TrainMode mode);
TrainMode train_mode_from_string(std::string_view name);

struct AdamConfig {
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const AdamConfig&) const = default;
};

class Adam {
public:
    Adam(AdamConfig config, Eigen::Index size);

    void step(Vector& params, const Vector& grad);
    void reset();
    void set_lr(double lr) { cfg_.lr = lr; }
    long steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    Vector m_;
    Vector v_;
    long t_ = 0;
};

// Constant of the radius rule r = c / m^{5/2}, chosen so that r = 0.1 at m = 6.
inline double default_radius_scale() { return 0.1 * std::pow(6.0, 2.5); }

enum class LrSchedule { Constant, Cosine };

std::string_view to_string(LrSchedule schedule);
LrSchedule lr_schedule_from_string(std::string_view name);

struct TrainConfig {
    double radius_scale = default_radius_scale();
    std::optional<double> radius;  // overrides the rule when set; 0 disables relaxation
    int epochs = 10;               // S4S and joint
    int alternations = 8;          // K for S4S-Alt
    int phase_epochs = 1;          // epochs per S4S-Alt phase
    int batch_size = 20;
    AdamConfig coeff_optimizer{};
    AdamConfig time_optimizer{};
    LrSchedule lr_schedule = LrSchedule::Cosine;  // applied to both Adam step sizes over the planned updates
    double x_step = 0.1;  // x_T' step size in units of tilde_sigma
    LossKind loss = LossKind::L2;
    bool consistency = false;
    bool tied = false;
    bool learn_coeffs = true;  // block freezing, joint mode only
    bool learn_time = true;
    bool select_best = true;  // return the state with the lowest mean validation error
    std::uint64_t seed = 0;
    int workers = 0;

    bool operator==(const TrainConfig&) const = default;
};

struct HistoryRow {
    long iteration = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_error = 0.0;  // mean terminal L2 error on validation, drives selection
    double radius = 0.0;
    std::string phase;
};

struct TrainResult {
    SolverCoefficients coeffs;
    LearnableTimeParams params;
    std::vector<HistoryRow> history;
    double radius = 0.0;
    long updates = 0;
    long projection_checks = 0;
    long projection_violations = 0;
    bool diverged = false;
    std::string message;
    long selected_update = 0;        // update count at which the returned state was recorded
    double train_loss = 0.0;         // relaxed training loss of the returned state
    double val_loss = 0.0;
    double val_error = 0.0;

    TimeGrid grid(const NoiseSchedule& schedule) const { return materialize(params, schedule); }
};

// Projection onto the ball ||x' - x|| <= r * sigma_tilde.
Vector project_ball(const Vector& x_prime, const Vector& x, double r, double sigma_tilde);

// Number of parameters the radius rule counts for a run.
std::size_t parameters_in_play(const SolverCoefficients& coeffs, int steps, bool tied, bool coeffs_learned,
                               bool time_learned);
double radius_for(const TrainConfig& config, std::size_t parameter_count);

// Mean terminal L2 error over records solved from x_T.
double dataset_error(std::span<const TrainRecord> records, const SolverCoefficients& coeffs, const TimeGrid& grid,
                     const NoiseSchedule& schedule, const EpsilonModel& model, int workers = 0);

// Mean loss of the student over records, solved from x_T' (use_prime) or x_T.
double dataset_loss(std::span<const TrainRecord> records, bool use_prime, const SolverCoefficients& coeffs,
                    const TimeGrid& grid, const NoiseSchedule& schedule, const EpsilonModel& model, LossKind loss,
                    int workers = 0);

// Coefficients only on a fixed grid. Updates dataset.train() x_T' in place.
TrainResult train_s4s(Dataset& dataset, SolverCoefficients coeffs, const TimeGrid& grid,
                      const NoiseSchedule& schedule, const EpsilonModel& model, const TrainConfig& config);

// K alternations of a time-parameter phase followed by a coefficient phase.
TrainResult train_s4s_alt(Dataset& dataset, SolverCoefficients coeffs, LearnableTimeParams params,
                          const NoiseSchedule& schedule, const EpsilonModel& model, const TrainConfig& config);

// All blocks every batch.
TrainResult train_joint(Dataset& dataset, SolverCoefficients coeffs, LearnableTimeParams params,
                        const NoiseSchedule& schedule, const EpsilonModel& model, const TrainConfig& config);

struct EvalMetrics {
    std::size_t count = 0;
    int nfe = 0;
    double mean_error = 0.0;
    double median_error = 0.0;
    double max_error = 0.0;
    double mean_rel_error = 0.0;
};

// Terminal L2 error against the teacher from each sample's x_T.
EvalMetrics evaluate(const SolverCoefficients& coeffs, const TimeGrid& grid, const NoiseSchedule& schedule,
                     const EpsilonModel& model, std::span<const EvalSample> samples, int workers = 0);

}  // namespace fewstep
