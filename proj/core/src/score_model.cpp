#include "fewstep/score_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fewstep/errors.hpp"

namespace fewstep {

namespace {

void require_finite(const Vector& x, const char* what) {
    if (!x.allFinite()) throw NumericalError(std::string(what) + ": non-finite input state");
}

}  // namespace

struct GaussianMixtureScore::Marginal {
    std::vector<double> gamma;  // responsibilities
    std::vector<double> var;    // alpha^2 s^2 + sigma^2
    std::vector<Vector> u;      // (x - alpha mu) / var
    Vector u_bar;               // sum gamma u
    double alpha;
    double sigma;
};

GaussianMixtureScore::GaussianMixtureScore(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
    if (components_.empty()) throw ArgumentError("mixture needs at least one component");
    dim_ = static_cast<int>(components_.front().mean.size());
    if (dim_ < 1) throw ArgumentError("mixture dimension must be >= 1");
    double total = 0.0;
    for (const auto& c : components_) {
        if (c.mean.size() != dim_) throw ArgumentError("mixture component means differ in dimension");
        if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
            throw ArgumentError("mixture weights must be finite and >= 0");
        }
        if (!(c.scale2 > 0.0) || !std::isfinite(c.scale2)) {
            throw ArgumentError("mixture scale2 must be finite and > 0");
        }
        if (!c.mean.allFinite()) throw ArgumentError("mixture means must be finite");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("mixture weights must sum to 1");
    log_weights_.reserve(components_.size());
    for (const auto& c : components_) {
        log_weights_.push_back(c.weight > 0.0 ? std::log(c.weight) : -INFINITY);
    }
}

GaussianMixtureScore GaussianMixtureScore::isotropic_gaussian(int dim, double scale2, Vector mean) {
    if (dim < 1) throw ArgumentError("dimension must be >= 1");
    if (mean.size() == 0) mean = Vector::Zero(dim);
    return GaussianMixtureScore({MixtureComponent{1.0, std::move(mean), scale2}});
}

GaussianMixtureScore GaussianMixtureScore::default_toy() {
    const double r = 2.0;
    const double c = std::cos(2.0 * std::numbers::pi / 3.0);
    const double s = std::sin(2.0 * std::numbers::pi / 3.0);
    return GaussianMixtureScore({
        {0.5, (Vector(2) << r, 0.0).finished(), 0.09},
        {0.3, (Vector(2) << r * c, r * s).finished(), 0.09},
        {0.2, (Vector(2) << r * c, -r * s).finished(), 0.09},
    });
}

GaussianMixtureScore::Marginal GaussianMixtureScore::marginal(const NoiseSchedule& schedule,
                                                              const Vector& x, double t) const {
    if (x.size() != dim_) throw ArgumentError("state dimension does not match model");
    require_finite(x, "epsilon");
    Marginal m;
    m.alpha = schedule.alpha(t);
    m.sigma = schedule.sigma(t);
    const std::size_t n = components_.size();
    m.gamma.resize(n);
    m.var.resize(n);
    m.u.resize(n);
    std::vector<double> log_n(n);
    double max_log = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& c = components_[j];
        const double v = m.alpha * m.alpha * c.scale2 + m.sigma * m.sigma;
        Vector d = x - m.alpha * c.mean;
        m.var[j] = v;
        log_n[j] = log_weights_[j] - 0.5 * dim_ * std::log(2.0 * std::numbers::pi * v) -
                   d.squaredNorm() / (2.0 * v);
        m.u[j] = d / v;
        if (log_n[j] > max_log) max_log = log_n[j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        m.gamma[j] = std::exp(log_n[j] - max_log);
        norm += m.gamma[j];
    }
    m.u_bar = Vector::Zero(dim_);
    for (std::size_t j = 0; j < n; ++j) {
        m.gamma[j] /= norm;
        m.u_bar += m.gamma[j] * m.u[j];
    }
    return m;
}

Vector GaussianMixtureScore::score(const NoiseSchedule& schedule, const Vector& x, double t) const {
    return -marginal(schedule, x, t).u_bar;
}

Vector GaussianMixtureScore::epsilon(const NoiseSchedule& schedule, const Vector& x, double t) const {
    const auto m = marginal(schedule, x, t);
    return m.sigma * m.u_bar;
}

VjpResult GaussianMixtureScore::epsilon_vjp(const NoiseSchedule& schedule, const Vector& x, double t,
                                            const Vector& cotangent) const {
    if (cotangent.size() != dim_) throw ArgumentError("cotangent dimension does not match model");
    const auto m = marginal(schedule, x, t);
    const auto d = schedule.derivatives(t);
    const std::size_t n = components_.size();

    // J = sigma [ (sum_j gamma_j / v_j) I - (sum_j gamma_j u_j u_j^T - u_bar u_bar^T) ], symmetric.
    double diag = 0.0;
    Vector gx = Vector::Zero(dim_);
    for (std::size_t j = 0; j < n; ++j) {
        diag += m.gamma[j] / m.var[j];
        gx -= m.gamma[j] * m.u[j].dot(cotangent) * m.u[j];
    }
    gx += diag * cotangent + m.u_bar.dot(cotangent) * m.u_bar;
    gx *= m.sigma;

    // d eps / dt at fixed x.
    std::vector<double> dlog(n);
    std::vector<double> dvar(n);
    double mean_dlog = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& c = components_[j];
        const double v = m.var[j];
        dvar[j] = 2.0 * m.alpha * d.dalpha * c.scale2 + 2.0 * m.sigma * d.dsigma;
        const Vector diff = m.u[j] * v;  // x - alpha mu
        dlog[j] = -0.5 * dim_ * dvar[j] / v + diff.dot(c.mean) * d.dalpha / v +
                  diff.squaredNorm() * dvar[j] / (2.0 * v * v);
        mean_dlog += m.gamma[j] * dlog[j];
    }
    double gt = d.dsigma * m.u_bar.dot(cotangent);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& c = components_[j];
        const double dgamma = m.gamma[j] * (dlog[j] - mean_dlog);
        const double u_c = m.u[j].dot(cotangent);
        const double du_c = -d.dalpha * c.mean.dot(cotangent) / m.var[j] - u_c * dvar[j] / m.var[j];
        gt += m.sigma * (dgamma * u_c + m.gamma[j] * du_c);
    }
    return {std::move(gx), gt};
}

std::optional<Vector> GaussianMixtureScore::exact_flow(const NoiseSchedule& schedule, const Vector& x,
                                                       double t_from, double t_to) const {
    if (components_.size() != 1) return std::nullopt;
    const auto& c = components_.front();
    const auto a = schedule.values(t_from);
    const auto b = schedule.values(t_to);
    const double v_from = a.alpha * a.alpha * c.scale2 + a.sigma * a.sigma;
    const double v_to = b.alpha * b.alpha * c.scale2 + b.sigma * b.sigma;
    return Vector(b.alpha * c.mean + std::sqrt(v_to / v_from) * (x - a.alpha * c.mean));
}

std::string_view to_string(Prediction p) { return p == Prediction::Noise ? "noise" : "data"; }

Prediction prediction_from_string(std::string_view name) {
    if (name == "noise") return Prediction::Noise;
    if (name == "data") return Prediction::Data;
    throw ArgumentError("unknown prediction '" + std::string(name) + "'");
}

Vector data_prediction(const EpsilonModel& model, const NoiseSchedule& schedule, const Vector& x,
                       double t) {
    const auto v = schedule.values(t);
    return (x - v.sigma * model.epsilon(schedule, x, t)) / v.alpha;
}

Vector epsilon_from_data(const NoiseSchedule& schedule, const Vector& x, const Vector& x_hat, double t) {
    const auto v = schedule.values(t);
    return (x - v.alpha * x_hat) / v.sigma;
}

Vector model_output(Prediction prediction, const EpsilonModel& model, const NoiseSchedule& schedule,
                    const Vector& x, double t) {
    if (prediction == Prediction::Noise) return model.epsilon(schedule, x, t);
    return data_prediction(model, schedule, x, t);
}

VjpResult model_output_vjp(Prediction prediction, const EpsilonModel& model,
                           const NoiseSchedule& schedule, const Vector& x, double t,
                           const Vector& output, const Vector& cotangent) {
    if (prediction == Prediction::Noise) return model.epsilon_vjp(schedule, x, t, cotangent);
    // x_hat = (x - sigma eps) / alpha
    const auto v = schedule.values(t);
    const auto d = schedule.derivatives(t);
    const Vector eps = (x - v.alpha * output) / v.sigma;
    VjpResult inner = model.epsilon_vjp(schedule, x, t, cotangent);
    Vector gx = (cotangent - v.sigma * inner.x) / v.alpha;
    const double gt = (-d.dsigma * eps.dot(cotangent) - v.sigma * inner.t) / v.alpha -
                      d.dalpha / v.alpha * output.dot(cotangent);
    return {std::move(gx), gt};
}

}  // namespace fewstep
