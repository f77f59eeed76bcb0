#pragma once

#include <string>
#include <string_view>

namespace fewstep {

enum class ScheduleKind { VpLinear, Ve, Edm };

std::string_view to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(std::string_view name);

struct ScheduleValues {
    double alpha;
    double sigma;
    double lambda;
};

// Time derivatives of alpha, sigma and lambda at a point.
struct ScheduleDerivatives {
    double dalpha;
    double dsigma;
    double dlambda;
};

// Drift f(t) = d log(alpha)/dt and squared diffusion
// g^2(t) = d(sigma^2)/dt - 2 f(t) sigma^2 of the probability-flow ODE.
struct OdeCoefficients {
    double f_t;
    double g_sq_t;
};

/// Forward noising process x_t = alpha_t x_0 + sigma_t eps on [t_min, T].
///
/// Three families are provided:
///  - VpLinear: beta(t) linear from beta_min to beta_max over [0, T],
///    alpha_t = exp(-1/2 int_0^t beta), sigma_t = sqrt(1 - alpha_t^2).
///  - Ve: alpha_t = 1, sigma_t geometric between sigma_min and sigma_max.
///  - Edm: alpha_t = 1, sigma_t = t.
///
/// The schedule is a small immutable value type; all members are safe to
/// call concurrently.
class NoiseSchedule {
public:
    static NoiseSchedule vp_linear(double beta_min = 0.1, double beta_max = 20.0, double T = 1.0,
                                   double t_min = -1.0);
    static NoiseSchedule ve(double sigma_min = 0.01, double sigma_max = 50.0, double T = 1.0,
                            double t_min = -1.0);
    static NoiseSchedule edm(double T = 80.0, double t_min = -1.0);

    ScheduleKind kind() const noexcept { return kind_; }
    double T() const noexcept { return T_; }
    double t_min() const noexcept { return t_min_; }
    // Scale of the terminal noise x_T ~ N(0, tilde_sigma^2 I).
    double tilde_sigma() const noexcept { return tilde_sigma_; }
    double param_a() const noexcept { return a_; }
    double param_b() const noexcept { return b_; }

    NoiseSchedule with_t_min(double t_min) const;
    NoiseSchedule with_tilde_sigma(double tilde_sigma) const;

    // Unchecked evaluations; valid for any t > 0 where the family is defined.
    double alpha(double t) const;
    double sigma(double t) const;
    double lambda(double t) const;
    ScheduleValues values(double t) const;
    ScheduleDerivatives derivatives(double t) const;
    OdeCoefficients ode_coefficients(double t) const;

    double lambda_T() const { return lambda(T_); }
    double lambda_min() const { return lambda(t_min_); }

    bool contains(double t) const noexcept { return t >= t_min_ && t <= T_; }

    bool operator==(const NoiseSchedule&) const = default;

private:
    NoiseSchedule(ScheduleKind kind, double a, double b, double T, double t_min);
    double log_alpha(double t) const;

    ScheduleKind kind_;
    double a_;  // beta_min | sigma_min | unused
    double b_;  // beta_max | sigma_max | unused
    double T_;
    double t_min_;
    double tilde_sigma_;
};

// Checked (alpha_t, sigma_t, lambda_t); throws DomainError outside [t_min, T].
ScheduleValues alpha_sigma_lambda(const NoiseSchedule& schedule, double t);

// Inverse of t -> lambda_t by bisection over [t_min, T]. Throws DomainError when
// lambda lies outside [lambda_T, lambda_{t_min}].
double time_from_lambda(const NoiseSchedule& schedule, double lambda);

}  // namespace fewstep
