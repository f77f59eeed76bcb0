#include "fewstep/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "fewstep/errors.hpp"
#include "fewstep/parallel.hpp"
#include "fewstep/solver.hpp"

namespace fewstep {

std::string_view to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::S4S: return "s4s";
        case TrainMode::S4SAlt: return "s4s-alt";
        case TrainMode::Joint: return "joint";
    }
    return "unknown";
}

TrainMode train_mode_from_string(std::string_view name) {
    if (name == "s4s") return TrainMode::S4S;
    if (name == "s4s-alt") return TrainMode::S4SAlt;
    if (name == "joint") return TrainMode::Joint;
    throw ArgumentError("unknown training mode '" + std::string(name) + "' (expected s4s, s4s-alt or joint)");
}

std::string_view to_string(LrSchedule schedule) {
    return schedule == LrSchedule::Cosine ? "cosine" : "constant";
}

LrSchedule lr_schedule_from_string(std::string_view name) {
    if (name == "cosine") return LrSchedule::Cosine;
    if (name == "constant") return LrSchedule::Constant;
    throw ArgumentError("unknown lr schedule '" + std::string(name) + "' (expected constant or cosine)");
}

Adam::Adam(AdamConfig config, Eigen::Index size)
    : cfg_(config), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
    if (grad.size() != m_.size() || params.size() != m_.size()) throw ArgumentError("Adam: size mismatch");
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    params.array() -= cfg_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
}

void Adam::reset() {
    m_.setZero();
    v_.setZero();
    t_ = 0;
}

Vector project_ball(const Vector& x_prime, const Vector& x, double r, double sigma_tilde) {
    if (x_prime.size() != x.size()) throw ArgumentError("project_ball: dimension mismatch");
    if (r < 0.0) throw ArgumentError("project_ball: r must be >= 0");
    const double radius = r * sigma_tilde;
    const Vector diff = x_prime - x;
    const double norm = diff.norm();
    if (norm <= radius) return x_prime;
    return x + (radius / norm) * diff;
}

std::size_t parameters_in_play(const SolverCoefficients& coeffs, int steps, bool tied, bool coeffs_learned,
                               bool time_learned) {
    std::size_t m = 0;
    if (coeffs_learned) {
        if (tied) {
            const TiedLayout t = tie_steps(coeffs);
            std::set<std::size_t> active;
            for (std::size_t n = 0; n < coeffs.size(); ++n) {
                if (coeffs.is_active(n)) active.insert(t.full_to_tied[n]);
            }
            m += active.size();
        } else {
            for (std::size_t n = 0; n < coeffs.size(); ++n) m += coeffs.is_active(n) ? 1 : 0;
        }
    }
    // Interior step positions and interior score-time offsets.
    if (time_learned) m += 2 * static_cast<std::size_t>(std::max(steps - 1, 0));
    return m;
}

double radius_for(const TrainConfig& config, std::size_t parameter_count) {
    if (config.radius) {
        if (*config.radius < 0.0) throw ArgumentError("radius must be >= 0");
        return *config.radius;
    }
    if (parameter_count == 0) return 0.0;
    return config.radius_scale / std::pow(static_cast<double>(parameter_count), 2.5);
}

double dataset_loss(std::span<const TrainRecord> records, bool use_prime, const SolverCoefficients& coeffs,
                    const TimeGrid& grid, const NoiseSchedule& schedule, const EpsilonModel& model, LossKind loss,
                    int workers) {
    if (records.empty()) return 0.0;
    std::vector<double> losses(records.size());
    parallel_for(
        records.size(),
        [&](std::size_t n) {
            const TrainRecord& r = records[n];
            const SolveTrace tr = solve(coeffs, schedule, grid, model, use_prime ? r.x_T_prime : r.x_T);
            losses[n] = terminal_loss(loss, tr.terminal(), r.teacher_out);
        },
        workers);
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

double dataset_error(std::span<const TrainRecord> records, const SolverCoefficients& coeffs, const TimeGrid& grid,
                     const NoiseSchedule& schedule, const EpsilonModel& model, int workers) {
    if (records.empty()) return 0.0;
    std::vector<double> err(records.size());
    parallel_for(
        records.size(),
        [&](std::size_t n) {
            const SolveTrace tr = solve(coeffs, schedule, grid, model, records[n].x_T);
            err[n] = (tr.terminal() - records[n].teacher_out).norm();
        },
        workers);
    return std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
}

namespace {

void validate_config(const TrainConfig& c) {
    if (c.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (c.epochs < 0 || c.alternations < 0 || c.phase_epochs < 0) throw ArgumentError("epoch counts must be >= 0");
    if (!(c.x_step >= 0.0)) throw ArgumentError("x_step must be >= 0");
}

struct BatchItem {
    double loss = 0.0;
    Vector grad_coeffs;
    Vector grad_time;
    Vector grad_x;
};

class Engine {
public:
    Engine(Dataset& ds, SolverCoefficients coeffs, std::optional<LearnableTimeParams> params, TimeGrid fixed_grid,
           const NoiseSchedule& schedule, const EpsilonModel& model, const TrainConfig& cfg, bool coeffs_learned,
           bool time_learned, int planned_epochs)
        : ds_(ds),
          schedule_(schedule),
          model_(model),
          cfg_(cfg),
          fixed_grid_(std::move(fixed_grid)),
          tie_(tie_steps(coeffs)),
          coeff_adam_(cfg.coeff_optimizer, static_cast<Eigen::Index>(cfg.tied ? tie_.tied_size : coeffs.size())),
          time_adam_(cfg.time_optimizer, params ? 2 * params->xi.size() : 0),
          rng_(cfg.seed),
          result_{std::move(coeffs), params ? *params : LearnableTimeParams{}, {}, 0.0, 0, 0, 0, false, {}, 0, 0.0, 0.0, 0.0},
          have_params_(params.has_value()) {
        validate_config(cfg);
        if (ds.records.empty() || ds.train_count == 0) throw ArgumentError("training needs a non-empty train split");
        if (ds.dim != model.dim()) throw ArgumentError("dataset dimension differs from model dimension");
        if (grid().N() != result_.coeffs.steps()) throw ArgumentError("grid step count differs from coefficient N");
        if (cfg.tied) {
            // Start from a point that is representable in the tied space.
            result_.coeffs.set_values(tie_.expand(tie_.restrict(result_.coeffs.values())));
        }
        result_.radius = radius_for(cfg, parameters_in_play(result_.coeffs, result_.coeffs.steps(), cfg.tied,
                                                            coeffs_learned, time_learned));
        const long per_epoch = static_cast<long>((ds.train_count + cfg.batch_size - 1) / cfg.batch_size);
        planned_updates_ = per_epoch * planned_epochs;
        order_.resize(ds.train_count);
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        record_history("init");
    }

    TimeGrid grid() const { return have_params_ ? materialize(result_.params, schedule_) : fixed_grid_; }

    bool run(int epochs, bool upd_coeffs, bool upd_time, const std::string& phase) {
        if (result_.diverged) return false;
        for (int e = 0; e < epochs; ++e) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            for (std::size_t start = 0; start < order_.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
                const std::size_t end = std::min(order_.size(), start + static_cast<std::size_t>(cfg_.batch_size));
                if (!batch(start, end, upd_coeffs, upd_time)) return false;
            }
            record_history(phase);
            if (result_.diverged) return false;
        }
        return true;
    }

    TrainResult take() {
        if (cfg_.select_best && best_) {
            result_.coeffs = best_->coeffs;
            result_.params = best_->params;
            result_.selected_update = best_->update;
            result_.train_loss = best_->train_loss;
            result_.val_loss = best_->val_loss;
            result_.val_error = best_->val_error;
        } else if (!result_.history.empty()) {
            result_.selected_update = result_.history.back().iteration;
            result_.train_loss = result_.history.back().train_loss;
            result_.val_loss = result_.history.back().val_loss;
            result_.val_error = result_.history.back().val_error;
        }
        return std::move(result_);
    }

private:
    bool batch(std::size_t start, std::size_t end, bool upd_coeffs, bool upd_time) {
        const std::size_t B = end - start;
        const TimeGrid g = grid();
        std::vector<BatchItem> items(B);
        const LearnableTimeParams* params = upd_time ? &result_.params : nullptr;
        try {
            parallel_for(
                B,
                [&](std::size_t n) {
                    const TrainRecord& r = ds_.records[order_[start + n]];
                    const SolveTrace tr = solve(result_.coeffs, schedule_, g, model_, r.x_T_prime);
                    AdjointResult adj =
                        loss_gradients(tr, result_.coeffs, params, schedule_, model_, cfg_.loss, r.teacher_out);
                    BatchItem& it = items[n];
                    it.loss = adj.loss_value;
                    it.grad_coeffs = std::move(adj.grad_coeffs);
                    if (params != nullptr) {
                        it.grad_time.resize(2 * adj.grad_xi.size());
                        it.grad_time << adj.grad_xi, adj.grad_xi_c;
                    }
                    it.grad_x = std::move(adj.grad_x0);
                },
                cfg_.workers);
        } catch (const NumericalError& e) {
            return diverge(std::string("solver diverged: ") + e.what());
        }

        Vector gc = Vector::Zero(static_cast<Eigen::Index>(result_.coeffs.size()));
        Vector gt = Vector::Zero(have_params_ ? 2 * result_.params.xi.size() : 0);
        double loss = 0.0;
        for (const BatchItem& it : items) {
            loss += it.loss;
            gc += it.grad_coeffs;
            if (upd_time) gt += it.grad_time;
        }
        const double inv = 1.0 / static_cast<double>(B);
        loss *= inv;
        gc *= inv;
        gt *= inv;
        if (!std::isfinite(loss) || !gc.allFinite() || !gt.allFinite()) {
            return diverge("non-finite loss or gradient at update " + std::to_string(result_.updates + 1));
        }

        double f = 1.0;
        if (cfg_.lr_schedule == LrSchedule::Cosine && planned_updates_ > 0) {
            const double progress = std::min(1.0, static_cast<double>(result_.updates) / planned_updates_);
            f = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
            coeff_adam_.set_lr(cfg_.coeff_optimizer.lr * f);
            time_adam_.set_lr(cfg_.time_optimizer.lr * f);
        }
        if (upd_coeffs) {
            Vector theta = cfg_.tied ? tie_.restrict(result_.coeffs.values()) : result_.coeffs.values();
            coeff_adam_.step(theta, cfg_.tied ? tie_.reduce(gc) : gc);
            result_.coeffs.set_values(cfg_.tied ? tie_.expand(theta) : theta);
            if (cfg_.consistency) project_consistency(result_.coeffs);
        }
        if (upd_time) {
            const Eigen::Index n = result_.params.xi.size();
            Vector z(2 * n);
            z << result_.params.xi, result_.params.xi_c;
            time_adam_.step(z, gt);
            result_.params.xi = z.head(n);
            result_.params.xi_c = z.tail(n);
        }

        const double sigma_tilde = schedule_.tilde_sigma();
        const double step = f * cfg_.x_step * sigma_tilde;
        for (std::size_t n = 0; n < B; ++n) {
            TrainRecord& r = ds_.records[order_[start + n]];
            const Vector moved = r.x_T_prime - step * items[n].grad_x;
            r.x_T_prime = project_ball(moved, r.x_T, result_.radius, sigma_tilde);
            ++result_.projection_checks;
            if ((r.x_T_prime - r.x_T).norm() > result_.radius * sigma_tilde + 1e-12) ++result_.projection_violations;
        }
        ++result_.updates;
        return true;
    }

    bool diverge(const std::string& why) {
        result_.diverged = true;
        result_.message = why;
        return false;
    }

    void record_history(const std::string& phase) {
        const TimeGrid g = grid();
        HistoryRow row;
        row.iteration = result_.updates;
        row.radius = result_.radius;
        row.phase = phase;
        try {
            row.train_loss =
                dataset_loss(ds_.train(), true, result_.coeffs, g, schedule_, model_, cfg_.loss, cfg_.workers);
            row.val_loss =
                dataset_loss(ds_.validation(), false, result_.coeffs, g, schedule_, model_, cfg_.loss, cfg_.workers);
            row.val_error = dataset_error(ds_.validation(), result_.coeffs, g, schedule_, model_, cfg_.workers);
        } catch (const NumericalError& e) {
            row.train_loss = row.val_loss = row.val_error = std::numeric_limits<double>::infinity();
            diverge(std::string("solver diverged: ") + e.what());
        }
        if (!best_ || row.val_error < best_->val_error) {
            best_ = Snapshot{result_.coeffs, result_.params, result_.updates, row.train_loss, row.val_loss,
                             row.val_error};
        }
        result_.history.push_back(std::move(row));
    }

    struct Snapshot {
        SolverCoefficients coeffs;
        LearnableTimeParams params;
        long update;
        double train_loss;
        double val_loss;
        double val_error;
    };

    Dataset& ds_;
    const NoiseSchedule& schedule_;
    const EpsilonModel& model_;
    const TrainConfig& cfg_;
    TimeGrid fixed_grid_;
    TiedLayout tie_;
    Adam coeff_adam_;
    Adam time_adam_;
    std::mt19937_64 rng_;
    TrainResult result_;
    bool have_params_;
    std::vector<std::size_t> order_;
    std::optional<Snapshot> best_;
    long planned_updates_ = 0;
};

}  // namespace

TrainResult train_s4s(Dataset& dataset, SolverCoefficients coeffs, const TimeGrid& grid,
                      const NoiseSchedule& schedule, const EpsilonModel& model, const TrainConfig& config) {
    validate_grid(grid, schedule);
    Engine eng(dataset, std::move(coeffs), std::nullopt, grid, schedule, model, config, true, false,
               config.epochs);
    eng.run(config.epochs, true, false, "coeffs");
    TrainResult r = eng.take();
    r.params = params_from_grid(grid, schedule);
    return r;
}

TrainResult train_s4s_alt(Dataset& dataset, SolverCoefficients coeffs, LearnableTimeParams params,
                          const NoiseSchedule& schedule, const EpsilonModel& model, const TrainConfig& config) {
    Engine eng(dataset, std::move(coeffs), std::move(params), {}, schedule, model, config, true, true,
               2 * config.alternations * config.phase_epochs);
    for (int k = 0; k < config.alternations; ++k) {
        if (!eng.run(config.phase_epochs, false, true, "time")) break;
        if (!eng.run(config.phase_epochs, true, false, "coeffs")) break;
    }
    return eng.take();
}

TrainResult train_joint(Dataset& dataset, SolverCoefficients coeffs, LearnableTimeParams params,
                        const NoiseSchedule& schedule, const EpsilonModel& model, const TrainConfig& config) {
    Engine eng(dataset, std::move(coeffs), std::move(params), {}, schedule, model, config, config.learn_coeffs,
               config.learn_time, config.epochs);
    eng.run(config.epochs, config.learn_coeffs, config.learn_time, "joint");
    return eng.take();
}

EvalMetrics evaluate(const SolverCoefficients& coeffs, const TimeGrid& grid, const NoiseSchedule& schedule,
                     const EpsilonModel& model, std::span<const EvalSample> samples, int workers) {
    EvalMetrics m;
    m.count = samples.size();
    m.nfe = expected_nfe(coeffs.kind(), coeffs.order(), coeffs.steps());
    if (samples.empty()) return m;
    std::vector<double> err(samples.size());
    std::vector<double> rel(samples.size());
    parallel_for(
        samples.size(),
        [&](std::size_t n) {
            const SolveTrace tr = solve(coeffs, schedule, grid, model, samples[n].x_T);
            err[n] = (tr.terminal() - samples[n].teacher_out).norm();
            rel[n] = err[n] / std::max(samples[n].teacher_out.norm(), 1e-12);
        },
        workers);
    m.mean_error = std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
    m.mean_rel_error = std::accumulate(rel.begin(), rel.end(), 0.0) / static_cast<double>(rel.size());
    m.max_error = *std::max_element(err.begin(), err.end());
    std::vector<double> sorted = err;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    m.median_error = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    return m;
}

}  // namespace fewstep
