#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "fewstep/schedule.hpp"
#include "fewstep/types.hpp"

namespace fewstep {

// Pullback of a cotangent through a model evaluation f(x, t).
struct VjpResult {
    Vector x;  // (df/dx)^T cotangent
    double t;  // cotangent . df/dt
};

/// Noise-prediction model eps(x, t) ~ -sigma_t grad log p_t(x).
///
/// Implementations must be immutable after construction so that one
/// instance can be shared across threads.
class EpsilonModel {
public:
    virtual ~EpsilonModel() = default;

    virtual int dim() const = 0;

    virtual Vector epsilon(const NoiseSchedule& schedule, const Vector& x, double t) const = 0;

    // Returns both the state and the time pullback in one rematerialized
    // evaluation.
    virtual VjpResult epsilon_vjp(const NoiseSchedule& schedule, const Vector& x, double t,
                                  const Vector& cotangent) const = 0;

    // Closed-form flow of the probability-flow ODE from t_from to t_to, when the
    // model admits one.
    virtual std::optional<Vector> exact_flow(const NoiseSchedule& /*schedule*/, const Vector& /*x*/,
                                             double /*t_from*/, double /*t_to*/) const {
        return std::nullopt;
    }
};

struct MixtureComponent {
    double weight = 1.0;
    Vector mean;
    double scale2 = 1.0;  // isotropic variance s_j^2

    bool operator==(const MixtureComponent& o) const {
        return weight == o.weight && scale2 == o.scale2 && mean.size() == o.mean.size() && mean == o.mean;
    }
};

enum class ScoreModelKind { IsotropicGaussian, GaussianMixture };

/// Gaussian mixture data distribution with isotropic components. The
/// marginal under p_0t(x_t | x_0) = N(alpha_t x_0, sigma_t^2 I) is again a
/// mixture with means alpha_t mu_j and variances alpha_t^2 s_j^2 + sigma_t^2,
/// so eps, its Jacobian and its time derivative are closed form.
class GaussianMixtureScore final : public EpsilonModel {
public:
    explicit GaussianMixtureScore(std::vector<MixtureComponent> components);

    static GaussianMixtureScore isotropic_gaussian(int dim, double scale2, Vector mean = {});
    // Three well-separated components in d = 2.
    static GaussianMixtureScore default_toy();

    ScoreModelKind kind() const noexcept {
        return components_.size() == 1 ? ScoreModelKind::IsotropicGaussian
                                       : ScoreModelKind::GaussianMixture;
    }
    const std::vector<MixtureComponent>& components() const noexcept { return components_; }

    int dim() const override { return dim_; }
    Vector epsilon(const NoiseSchedule& schedule, const Vector& x, double t) const override;
    VjpResult epsilon_vjp(const NoiseSchedule& schedule, const Vector& x, double t,
                          const Vector& cotangent) const override;
    std::optional<Vector> exact_flow(const NoiseSchedule& schedule, const Vector& x, double t_from,
                                     double t_to) const override;

    // grad_x log p_t(x).
    Vector score(const NoiseSchedule& schedule, const Vector& x, double t) const;

private:
    struct Marginal;
    Marginal marginal(const NoiseSchedule& schedule, const Vector& x, double t) const;

    std::vector<MixtureComponent> components_;
    std::vector<double> log_weights_;
    int dim_ = 0;
};

/// Decorator counting forward and pullback evaluations of a wrapped model.
class CountingModel final : public EpsilonModel {
public:
    explicit CountingModel(std::shared_ptr<const EpsilonModel> inner) : inner_(std::move(inner)) {}

    int dim() const override { return inner_->dim(); }
    Vector epsilon(const NoiseSchedule& schedule, const Vector& x, double t) const override {
        forward_.fetch_add(1, std::memory_order_relaxed);
        return inner_->epsilon(schedule, x, t);
    }
    VjpResult epsilon_vjp(const NoiseSchedule& schedule, const Vector& x, double t,
                          const Vector& cotangent) const override {
        pullback_.fetch_add(1, std::memory_order_relaxed);
        return inner_->epsilon_vjp(schedule, x, t, cotangent);
    }
    std::optional<Vector> exact_flow(const NoiseSchedule& schedule, const Vector& x, double t_from,
                                     double t_to) const override {
        return inner_->exact_flow(schedule, x, t_from, t_to);
    }

    std::uint64_t forward_calls() const { return forward_.load(); }
    std::uint64_t pullback_calls() const { return pullback_.load(); }
    void reset() const {
        forward_ = 0;
        pullback_ = 0;
    }

private:
    std::shared_ptr<const EpsilonModel> inner_;
    mutable std::atomic<std::uint64_t> forward_{0};
    mutable std::atomic<std::uint64_t> pullback_{0};
};

// Which quantity the solver consumes: eps(x, t) or the Tweedie data
// prediction x_hat(x, t) = (x - sigma_t eps(x, t)) / alpha_t.
enum class Prediction { Noise, Data };

std::string_view to_string(Prediction p);
Prediction prediction_from_string(std::string_view name);

Vector data_prediction(const EpsilonModel& model, const NoiseSchedule& schedule, const Vector& x,
                       double t);
// Inverse Tweedie map: eps = (x - alpha_t x_hat) / sigma_t.
Vector epsilon_from_data(const NoiseSchedule& schedule, const Vector& x, const Vector& x_hat, double t);

Vector model_output(Prediction prediction, const EpsilonModel& model, const NoiseSchedule& schedule,
                    const Vector& x, double t);

// Pullback of model_output. `output` is the forward value at (x, t), which the
// data-prediction pullback needs.
VjpResult model_output_vjp(Prediction prediction, const EpsilonModel& model,
                           const NoiseSchedule& schedule, const Vector& x, double t,
                           const Vector& output, const Vector& cotangent);

}  // namespace fewstep
