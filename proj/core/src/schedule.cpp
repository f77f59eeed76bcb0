#include "fewstep/schedule.hpp"

#include <cmath>
#include <sstream>

#include "fewstep/errors.hpp"

namespace fewstep {

namespace {

constexpr int kBisectionIterations = 50;

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ArgumentError(std::string("noise schedule: ") + name + " must be finite and > 0");
    }
}

}  // namespace

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::VpLinear: return "vp_linear";
        case ScheduleKind::Ve: return "ve";
        case ScheduleKind::Edm: return "edm";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(std::string_view name) {
    if (name == "vp_linear") return ScheduleKind::VpLinear;
    if (name == "ve") return ScheduleKind::Ve;
    if (name == "edm") return ScheduleKind::Edm;
    throw ArgumentError("unknown schedule kind '" + std::string(name) + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, double a, double b, double T, double t_min)
    : kind_(kind), a_(a), b_(b), T_(T), t_min_(t_min < 0.0 ? 1e-3 * T : t_min), tilde_sigma_(1.0) {
    require_positive(T_, "T");
    require_positive(t_min_, "t_min");
    if (t_min_ >= T_) throw ArgumentError("noise schedule: t_min must be < T");
    switch (kind_) {
        case ScheduleKind::VpLinear:
            if (!(a_ >= 0.0) || !(b_ > a_)) {
                throw ArgumentError("noise schedule: need 0 <= beta_min < beta_max");
            }
            tilde_sigma_ = 1.0;
            break;
        case ScheduleKind::Ve:
            require_positive(a_, "sigma_min");
            if (!(b_ > a_)) throw ArgumentError("noise schedule: need sigma_min < sigma_max");
            tilde_sigma_ = b_;
            break;
        case ScheduleKind::Edm:
            tilde_sigma_ = T_;
            break;
    }
}

NoiseSchedule NoiseSchedule::vp_linear(double beta_min, double beta_max, double T, double t_min) {
    return NoiseSchedule(ScheduleKind::VpLinear, beta_min, beta_max, T, t_min);
}

NoiseSchedule NoiseSchedule::ve(double sigma_min, double sigma_max, double T, double t_min) {
    return NoiseSchedule(ScheduleKind::Ve, sigma_min, sigma_max, T, t_min);
}

NoiseSchedule NoiseSchedule::edm(double T, double t_min) {
    return NoiseSchedule(ScheduleKind::Edm, 0.0, 0.0, T, t_min);
}

NoiseSchedule NoiseSchedule::with_t_min(double t_min) const {
    NoiseSchedule s(kind_, a_, b_, T_, t_min);
    s.tilde_sigma_ = tilde_sigma_;
    return s;
}

NoiseSchedule NoiseSchedule::with_tilde_sigma(double tilde_sigma) const {
    require_positive(tilde_sigma, "tilde_sigma");
    NoiseSchedule s = *this;
    s.tilde_sigma_ = tilde_sigma;
    return s;
}

double NoiseSchedule::log_alpha(double t) const {
    if (kind_ == ScheduleKind::VpLinear) {
        return -0.5 * (a_ * t + (b_ - a_) * t * t / (2.0 * T_));
    }
    return 0.0;
}

double NoiseSchedule::alpha(double t) const { return std::exp(log_alpha(t)); }

double NoiseSchedule::sigma(double t) const {
    switch (kind_) {
        case ScheduleKind::VpLinear: return std::sqrt(-std::expm1(2.0 * log_alpha(t)));
        case ScheduleKind::Ve: return a_ * std::exp(std::log(b_ / a_) * t / T_);
        case ScheduleKind::Edm: return t;
    }
    return 0.0;
}

double NoiseSchedule::lambda(double t) const {
    switch (kind_) {
        case ScheduleKind::VpLinear: {
            const double la = log_alpha(t);
            return la - 0.5 * std::log(-std::expm1(2.0 * la));
        }
        case ScheduleKind::Ve: return -(std::log(a_) + std::log(b_ / a_) * t / T_);
        case ScheduleKind::Edm: return -std::log(t);
    }
    return 0.0;
}

ScheduleValues NoiseSchedule::values(double t) const { return {alpha(t), sigma(t), lambda(t)}; }

ScheduleDerivatives NoiseSchedule::derivatives(double t) const {
    switch (kind_) {
        case ScheduleKind::VpLinear: {
            const double beta = a_ + (b_ - a_) * t / T_;
            const double al = alpha(t);
            const double sg = sigma(t);
            const double dalpha = -0.5 * beta * al;
            return {dalpha, -al * dalpha / sg, -0.5 * beta / (sg * sg)};
        }
        case ScheduleKind::Ve: {
            const double rate = std::log(b_ / a_) / T_;
            return {0.0, sigma(t) * rate, -rate};
        }
        case ScheduleKind::Edm: return {0.0, 1.0, -1.0 / t};
    }
    return {0.0, 0.0, 0.0};
}

OdeCoefficients NoiseSchedule::ode_coefficients(double t) const {
    const auto v = values(t);
    const auto d = derivatives(t);
    const double f = d.dalpha / v.alpha;
    return {f, 2.0 * v.sigma * d.dsigma - 2.0 * f * v.sigma * v.sigma};
}

ScheduleValues alpha_sigma_lambda(const NoiseSchedule& schedule, double t) {
    if (!schedule.contains(t)) {
        std::ostringstream os;
        os << "time " << t << " outside [" << schedule.t_min() << ", " << schedule.T() << "]";
        throw DomainError(os.str());
    }
    return schedule.values(t);
}

double time_from_lambda(const NoiseSchedule& schedule, double lambda) {
    const double lam_hi = schedule.lambda_min();  // lambda is decreasing in t
    const double lam_lo = schedule.lambda_T();
    if (!(lambda >= lam_lo && lambda <= lam_hi)) {
        std::ostringstream os;
        os << "log-SNR " << lambda << " outside [" << lam_lo << ", " << lam_hi << "]";
        throw DomainError(os.str());
    }
    if (lambda == lam_lo) return schedule.T();
    if (lambda == lam_hi) return schedule.t_min();

    double lo = schedule.t_min();  // lambda(lo) >= lambda
    double hi = schedule.T();      // lambda(hi) <= lambda
    for (int it = 0; it < kBisectionIterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (schedule.lambda(mid) > lambda) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace fewstep
