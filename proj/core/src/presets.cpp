#include "fewstep/presets.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "fewstep/errors.hpp"
#include "fewstep/phi.hpp"

namespace fewstep {

std::string_view to_string(Preset preset) {
    switch (preset) {
        case Preset::Ipndm: return "ipndm";
        case Preset::DpmSolverPP: return "dpmpp";
        case Preset::UniPc: return "unipc";
        case Preset::AdamsBashforth: return "adams_bashforth";
        case Preset::DpmSolverSingle: return "dpm_single";
        case Preset::GaussianRandom: return "gaussian";
    }
    return "unknown";
}

Preset preset_from_string(std::string_view name) {
    if (name == "ipndm") return Preset::Ipndm;
    if (name == "dpmpp") return Preset::DpmSolverPP;
    if (name == "unipc") return Preset::UniPc;
    if (name == "adams_bashforth") return Preset::AdamsBashforth;
    if (name == "dpm_single") return Preset::DpmSolverSingle;
    if (name == "gaussian") return Preset::GaussianRandom;
    throw ArgumentError("unknown preset '" + std::string(name) + "'");
}

bool preset_compatible(SolverKind kind, Preset preset) {
    switch (preset) {
        case Preset::Ipndm:
        case Preset::DpmSolverPP:
        case Preset::AdamsBashforth: return kind == SolverKind::Lms;
        case Preset::UniPc: return kind == SolverKind::Pc;
        case Preset::DpmSolverSingle: return kind == SolverKind::Ss;
        case Preset::GaussianRandom: return true;
    }
    return false;
}

std::vector<double> exponential_lagrange_weights(const std::vector<double>& nodes, double h,
                                                 Prediction prediction) {
    const int m = static_cast<int>(nodes.size());
    if (m < 1) throw ArgumentError("exponential_lagrange_weights: need at least one node");
    // Normalized moments M_n = int_0^h w s^n / int_0^h w = h^n n! phi_{n+1}(z) / phi_1(z).
    const double z = prediction == Prediction::Noise ? h : -h;
    const PhiTable phi = phi_functions(z, m);
    std::vector<double> moment(static_cast<std::size_t>(m));
    double scale = 1.0;  // h^n n!
    for (int n = 0; n < m; ++n) {
        if (n > 0) scale *= h * n;
        moment[n] = scale * phi[n + 1] / phi[1];
    }
    std::vector<double> b(static_cast<std::size_t>(m), 0.0);
    for (int j = 0; j < m; ++j) {
        std::vector<double> poly{1.0};
        for (int q = 0; q < m; ++q) {
            if (q == j) continue;
            const double denom = nodes[j] - nodes[q];
            if (denom == 0.0) throw ArgumentError("exponential_lagrange_weights: repeated node");
            std::vector<double> next(poly.size() + 1, 0.0);
            for (std::size_t n = 0; n < poly.size(); ++n) {
                next[n + 1] += poly[n] / denom;
                next[n] -= poly[n] * nodes[q] / denom;
            }
            poly = std::move(next);
        }
        for (int n = 0; n < m; ++n) b[j] += poly[n] * moment[n];
    }
    return b;
}

namespace {

std::vector<double> step_lambdas(const NoiseSchedule& schedule, const TimeGrid& grid) {
    std::vector<double> lam(grid.steps.size());
    for (std::size_t n = 0; n < grid.steps.size(); ++n) lam[n] = schedule.lambda(grid.steps[n]);
    return lam;
}

std::vector<double> ipndm_row(int m) {
    switch (m) {
        case 1: return {1.0};
        case 2: return {1.5, -0.5};
        case 3: return {23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0};
        case 4: return {55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0};
        default: throw ArgumentError("ipndm preset supports order <= 4");
    }
}

double signed_h(double h, Prediction prediction) { return prediction == Prediction::Noise ? h : -h; }

// Multistep DPM-Solver(++) weights on (m0, m1, m2) = eps_{i-1}, eps_{i-2}, eps_{i-3}.
std::vector<double> dpmpp_row(int m, const std::vector<double>& lam, int i, Prediction prediction) {
    if (m == 1) return {1.0};
    const double h = lam[i] - lam[i - 1];
    const double r0 = (lam[i - 1] - lam[i - 2]) / h;
    if (m == 2) return {1.0 + 0.5 / r0, -0.5 / r0};
    if (m != 3) throw ArgumentError("dpmpp preset supports order <= 3");
    const double r1 = (lam[i - 2] - lam[i - 3]) / h;
    const PhiTable phi = phi_functions(signed_h(h, prediction), 3);
    const double p2 = phi[2] / phi[1];
    const double p3 = phi[3] / phi[1];
    const Eigen::Vector3d d10(1.0 / r0, -1.0 / r0, 0.0);
    const Eigen::Vector3d diff(1.0 / r0, -(1.0 / r0 + 1.0 / r1), 1.0 / r1);  // D1_0 - D1_1
    const Eigen::Vector3d d1 = d10 + r0 / (r0 + r1) * diff;
    const Eigen::Vector3d d2 = diff / (r0 + r1);
    const Eigen::Vector3d b = Eigen::Vector3d(1.0, 0.0, 0.0) + p2 * d1 + p3 * d2;
    return {b[0], b[1], b[2]};
}

struct UniSystem {
    Eigen::MatrixXd R;
    Eigen::VectorXd rhs;
    std::vector<double> rks;  // r_1 .. r_{p-1}, then 1
};

UniSystem uni_system(int p, const std::vector<double>& lam, int i, Prediction prediction) {
    const double h = lam[i] - lam[i - 1];
    const double hh = signed_h(h, prediction);
    UniSystem s;
    for (int j = 1; j < p; ++j) s.rks.push_back((lam[i - 1 - j] - lam[i - 1]) / h);
    s.rks.push_back(1.0);
    s.R.resize(p, p);
    s.rhs.resize(p);
    // h_phi_k / B_h for B_h = expm1(hh) written with phi functions:
    // h_phi_k = hh phi_{k+1}(hh) after the k-th update.
    const PhiTable phi = phi_functions(hh, p + 1);
    double factorial = 1.0;
    for (int q = 1; q <= p; ++q) {
        for (int c = 0; c < p; ++c) s.R(q - 1, c) = std::pow(s.rks[c], q - 1);
        s.rhs[q - 1] = phi[q + 1] * factorial / phi[1];
        factorial *= (q + 1);
    }
    return s;
}

std::vector<double> unip_row(int m, const std::vector<double>& lam, int i, Prediction prediction) {
    if (m == 1) return {1.0};
    const UniSystem s = uni_system(m, lam, i, prediction);
    std::vector<double> rho;
    if (m == 2) {
        rho = {0.5};
    } else {
        const Eigen::VectorXd sol =
            s.R.topLeftCorner(m - 1, m - 1).fullPivLu().solve(s.rhs.head(m - 1));
        rho.assign(sol.data(), sol.data() + sol.size());
    }
    std::vector<double> b(static_cast<std::size_t>(m), 0.0);
    b[0] = 1.0;
    for (int j = 1; j < m; ++j) {
        b[j] = rho[j - 1] / s.rks[j - 1];
        b[0] -= b[j];
    }
    return b;
}

// Corrector row over (new eval, eps_{i-1}, ..., eps_{i-m+1}).
std::vector<double> unic_row(int m, const std::vector<double>& lam, int i, Prediction prediction) {
    if (m == 1) return {1.0};
    const int p = m - 1;
    const UniSystem s = uni_system(p, lam, i, prediction);
    std::vector<double> rho;
    if (p == 1) {
        rho = {0.5};
    } else {
        const Eigen::VectorXd sol = s.R.fullPivLu().solve(s.rhs);
        rho.assign(sol.data(), sol.data() + sol.size());
    }
    // m0 + sum_{j<p} rho_j (m_j - m0) / r_j + rho_p (new - m0)
    std::vector<double> w(static_cast<std::size_t>(m), 0.0);
    w[0] = rho[p - 1];
    w[1] = 1.0 - rho[p - 1];
    for (int j = 1; j < p; ++j) {
        const double c = rho[j - 1] / s.rks[j - 1];
        w[j + 1] += c;
        w[1] -= c;
    }
    return w;
}

void fill_singlestep(SolverCoefficients& c, int i, const std::vector<double>& lam, Prediction prediction) {
    const int k = c.order();
    const double h = lam[i] - lam[i - 1];
    const double z = signed_h(h, prediction);
    switch (k) {
        case 1: c.b(i, 1) = 1.0; return;
        case 2: {
            const double r1 = 0.5;
            c.ss_c(i, 2) = r1 * h;
            c.ss_a(i, 2, 1) = 1.0;
            c.b(i, 1) = 1.0 - 0.5 / r1;
            c.b(i, 2) = 0.5 / r1;
            return;
        }
        case 3: {
            const double r1 = 1.0 / 3.0;
            const double r2 = 2.0 / 3.0;
            c.ss_c(i, 2) = r1 * h;
            c.ss_c(i, 3) = r2 * h;
            c.ss_a(i, 2, 1) = 1.0;
            // (phi_1(x) - 1) / expm1(x) = phi_2(x) / phi_1(x)
            const PhiTable p_stage = phi_functions(r2 * z, 2);
            const double a32 = (r2 / r1) * p_stage[2] / p_stage[1];
            c.ss_a(i, 3, 2) = a32;
            c.ss_a(i, 3, 1) = 1.0 - a32;
            const PhiTable p_step = phi_functions(z, 2);
            const double b3 = (1.0 / r2) * p_step[2] / p_step[1];
            c.b(i, 3) = b3;
            c.b(i, 2) = 0.0;
            c.b(i, 1) = 1.0 - b3;
            return;
        }
        default: throw ArgumentError("dpm_single preset supports order <= 3");
    }
}

}  // namespace

SolverCoefficients init_preset(SolverKind kind, int order, int steps, Preset preset, Prediction prediction,
                               const NoiseSchedule& schedule, const TimeGrid& grid, std::uint64_t seed,
                               StepDomain domain) {
    if (!preset_compatible(kind, preset)) {
        throw ArgumentError("preset '" + std::string(to_string(preset)) + "' is not compatible with solver kind '" +
                            std::string(to_string(kind)) + "'");
    }
    if (grid.N() != steps) throw ArgumentError("init_preset: grid step count differs from N");
    SolverCoefficients c(kind, order, steps, prediction, domain);

    if (preset == Preset::GaussianRandom) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t n = 0; n < c.size(); ++n) {
            const double draw = normal(rng);
            if (c.is_active(n)) c.values()[static_cast<Eigen::Index>(n)] = draw;
        }
        return c;
    }

    const std::vector<double> lam = step_lambdas(schedule, grid);
    for (int i = 1; i <= steps; ++i) {
        if (kind == SolverKind::Ss) {
            fill_singlestep(c, i, lam, prediction);
            continue;
        }
        const int m = c.row_width(i);
        std::vector<double> row;
        switch (preset) {
            case Preset::Ipndm: row = ipndm_row(m); break;
            case Preset::DpmSolverPP: row = dpmpp_row(m, lam, i, prediction); break;
            case Preset::UniPc: row = unip_row(m, lam, i, prediction); break;
            case Preset::AdamsBashforth: {
                std::vector<double> nodes(static_cast<std::size_t>(m));
                for (int j = 0; j < m; ++j) nodes[j] = lam[i - 1 - j] - lam[i - 1];
                row = exponential_lagrange_weights(nodes, lam[i] - lam[i - 1], prediction);
                break;
            }
            default: throw ArgumentError("unsupported preset");
        }
        for (int j = 1; j <= m; ++j) c.b(i, j) = row[j - 1];
        if (kind == SolverKind::Pc) {
            const std::vector<double> corr = unic_row(m, lam, i, prediction);
            for (int j = 1; j <= m; ++j) c.corrector(i, j) = corr[j - 1];
        }
    }
    return c;
}

}  // namespace fewstep
