#include "fewstep/coefficients.hpp"

#include <algorithm>

#include "fewstep/errors.hpp"

namespace fewstep {

std::string_view to_string(SolverKind kind) {
    switch (kind) {
        case SolverKind::Lms: return "lms";
        case SolverKind::Ss: return "ss";
        case SolverKind::Pc: return "pc";
    }
    return "unknown";
}

SolverKind solver_kind_from_string(std::string_view name) {
    if (name == "lms") return SolverKind::Lms;
    if (name == "ss") return SolverKind::Ss;
    if (name == "pc") return SolverKind::Pc;
    throw ArgumentError("unknown solver kind '" + std::string(name) + "'");
}

std::string_view to_string(StepDomain domain) {
    return domain == StepDomain::Lambda ? "lambda" : "time";
}

StepDomain step_domain_from_string(std::string_view name) {
    if (name == "lambda") return StepDomain::Lambda;
    if (name == "time") return StepDomain::Time;
    throw ArgumentError("unknown step domain '" + std::string(name) + "'");
}

std::string_view to_string(ParamRole role) {
    switch (role) {
        case ParamRole::LmsB: return "b";
        case ParamRole::Corrector: return "ac";
        case ParamRole::SsB: return "ss_b";
        case ParamRole::SsC: return "ss_c";
        case ParamRole::SsA: return "ss_a";
    }
    return "unknown";
}

namespace {

std::size_t triangular_count(int k, int N) {
    std::size_t n = 0;
    for (int i = 1; i <= N; ++i) n += static_cast<std::size_t>(std::min(k, i));
    return n;
}

std::size_t ss_block_size(int k) {
    return static_cast<std::size_t>(k) + static_cast<std::size_t>(k - 1) +
           static_cast<std::size_t>(k) * static_cast<std::size_t>(k - 1);
}

}  // namespace

SolverCoefficients::SolverCoefficients(SolverKind kind, int order, int steps, Prediction prediction,
                                       StepDomain domain)
    : kind_(kind), order_(order), steps_(steps), prediction_(prediction), domain_(domain) {
    if (order < 1) throw ArgumentError("solver order must be >= 1");
    if (steps < 1) throw ArgumentError("solver step count must be >= 1");
    if (kind != SolverKind::Ss && steps < order) {
        throw ArgumentError("solver order " + std::to_string(order) + " exceeds step count " +
                            std::to_string(steps));
    }
    values_ = Vector::Zero(static_cast<Eigen::Index>(parameter_count(kind, order, steps)));
    build_index();
}

std::size_t SolverCoefficients::parameter_count(SolverKind kind, int order, int steps) {
    switch (kind) {
        case SolverKind::Lms: return triangular_count(order, steps);
        case SolverKind::Pc: return 2 * triangular_count(order, steps);
        case SolverKind::Ss: return ss_block_size(order) * static_cast<std::size_t>(steps);
    }
    return 0;
}

void SolverCoefficients::set_values(const Vector& v) {
    if (v.size() != values_.size()) throw ArgumentError("coefficient vector has wrong length");
    values_ = v;
}

int SolverCoefficients::row_width(int i) const {
    if (i < 1 || i > steps_) throw ArgumentError("step index out of range");
    return kind_ == SolverKind::Ss ? order_ : std::min(order_, i);
}

std::size_t SolverCoefficients::row_offset(int i) const {
    // sum_{r < i} min(k, r)
    const int full = std::min(i - 1, order_);
    std::size_t off = static_cast<std::size_t>(full) * static_cast<std::size_t>(full + 1) / 2;
    if (i - 1 > order_) off += static_cast<std::size_t>(i - 1 - order_) * static_cast<std::size_t>(order_);
    return off;
}

std::size_t SolverCoefficients::ss_block(int i) const {
    return ss_block_size(order_) * static_cast<std::size_t>(i - 1);
}

std::size_t SolverCoefficients::b_index(int i, int j) const {
    if (j < 1 || j > row_width(i)) throw ArgumentError("b index out of range");
    if (kind_ == SolverKind::Ss) return ss_block(i) + static_cast<std::size_t>(j - 1);
    return row_offset(i) + static_cast<std::size_t>(j - 1);
}

std::size_t SolverCoefficients::corrector_index(int i, int j) const {
    if (kind_ != SolverKind::Pc) throw StateError("corrector weights exist only for PC solvers");
    if (j < 1 || j > row_width(i)) throw ArgumentError("corrector index out of range");
    return triangular_count(order_, steps_) + row_offset(i) + static_cast<std::size_t>(j - 1);
}

std::size_t SolverCoefficients::ss_c_index(int i, int j) const {
    if (kind_ != SolverKind::Ss) throw StateError("stage offsets exist only for SS solvers");
    if (i < 1 || i > steps_ || j < 2 || j > order_) throw ArgumentError("c index out of range");
    return ss_block(i) + static_cast<std::size_t>(order_) + static_cast<std::size_t>(j - 2);
}

std::size_t SolverCoefficients::ss_a_index(int i, int j, int l) const {
    if (kind_ != SolverKind::Ss) throw StateError("stage weights exist only for SS solvers");
    if (i < 1 || i > steps_ || j < 1 || j > order_ || l < 1 || l > order_ - 1) {
        throw ArgumentError("a index out of range");
    }
    return ss_block(i) + static_cast<std::size_t>(2 * order_ - 1) +
           static_cast<std::size_t>((j - 1) * (order_ - 1) + (l - 1));
}

double SolverCoefficients::ss_c(int i, int j) const {
    if (j == 1) return 0.0;
    return values_[static_cast<Eigen::Index>(ss_c_index(i, j))];
}

void SolverCoefficients::build_index() {
    index_.assign(values_.size(), ParamIndex{ParamRole::LmsB, 0, 0, 0});
    if (kind_ == SolverKind::Ss) {
        for (int i = 1; i <= steps_; ++i) {
            for (int j = 1; j <= order_; ++j) index_[b_index(i, j)] = {ParamRole::SsB, i, j, 0};
            for (int j = 2; j <= order_; ++j) index_[ss_c_index(i, j)] = {ParamRole::SsC, i, j, 0};
            for (int j = 1; j <= order_; ++j) {
                for (int l = 1; l < order_; ++l) index_[ss_a_index(i, j, l)] = {ParamRole::SsA, i, j, l};
            }
        }
        return;
    }
    for (int i = 1; i <= steps_; ++i) {
        for (int j = 1; j <= row_width(i); ++j) {
            index_[b_index(i, j)] = {ParamRole::LmsB, i, j, 0};
            if (kind_ == SolverKind::Pc) index_[corrector_index(i, j)] = {ParamRole::Corrector, i, j, 0};
        }
    }
}

bool SolverCoefficients::is_active(std::size_t flat) const {
    const ParamIndex& p = index_.at(flat);
    return p.role != ParamRole::SsA || p.l < p.j;
}

std::vector<std::vector<std::size_t>> SolverCoefficients::weight_rows() const {
    std::vector<std::vector<std::size_t>> rows;
    for (int i = 1; i <= steps_; ++i) {
        std::vector<std::size_t> row;
        for (int j = 1; j <= row_width(i); ++j) row.push_back(b_index(i, j));
        rows.push_back(std::move(row));
    }
    if (kind_ == SolverKind::Pc) {
        for (int i = 1; i <= steps_; ++i) {
            std::vector<std::size_t> row;
            for (int j = 1; j <= row_width(i); ++j) row.push_back(corrector_index(i, j));
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

bool SolverCoefficients::same_layout(const SolverCoefficients& other) const {
    return kind_ == other.kind_ && order_ == other.order_ && steps_ == other.steps_ &&
           prediction_ == other.prediction_ && domain_ == other.domain_;
}

void project_consistency(SolverCoefficients& coeffs) {
    Vector& v = coeffs.values();
    for (const auto& row : coeffs.weight_rows()) {
        double sum = 0.0;
        for (std::size_t idx : row) sum += v[static_cast<Eigen::Index>(idx)];
        const double shift = (1.0 - sum) / static_cast<double>(row.size());
        for (std::size_t idx : row) v[static_cast<Eigen::Index>(idx)] += shift;
    }
}

Vector TiedLayout::expand(const Vector& tied) const {
    if (tied.size() != static_cast<Eigen::Index>(tied_size)) throw ArgumentError("tied vector has wrong length");
    Vector full(static_cast<Eigen::Index>(full_to_tied.size()));
    for (std::size_t n = 0; n < full_to_tied.size(); ++n) {
        full[static_cast<Eigen::Index>(n)] = tied[static_cast<Eigen::Index>(full_to_tied[n])];
    }
    return full;
}

Vector TiedLayout::reduce(const Vector& full_gradient) const {
    if (full_gradient.size() != static_cast<Eigen::Index>(full_to_tied.size())) {
        throw ArgumentError("gradient has wrong length for tied layout");
    }
    Vector tied = Vector::Zero(static_cast<Eigen::Index>(tied_size));
    for (std::size_t n = 0; n < full_to_tied.size(); ++n) {
        tied[static_cast<Eigen::Index>(full_to_tied[n])] += full_gradient[static_cast<Eigen::Index>(n)];
    }
    return tied;
}

Vector TiedLayout::restrict(const Vector& full) const {
    Vector tied = Vector::Zero(static_cast<Eigen::Index>(tied_size));
    std::vector<bool> seen(tied_size, false);
    for (std::size_t n = 0; n < full_to_tied.size(); ++n) {
        const std::size_t t = full_to_tied[n];
        if (!seen[t]) {
            tied[static_cast<Eigen::Index>(t)] = full[static_cast<Eigen::Index>(n)];
            seen[t] = true;
        }
    }
    return tied;
}

TiedLayout tie_steps(const SolverCoefficients& coeffs) {
    TiedLayout layout;
    layout.full_to_tied.resize(coeffs.size());
    const int k = coeffs.order();
    const int tied_steps = std::min(coeffs.steps(), coeffs.kind() == SolverKind::Ss ? 1 : k);
    // Canonical step for i: itself for warmup rows, otherwise the first full row.
    auto canonical = [&](int i) { return std::min(i, tied_steps); };
    const SolverCoefficients reference(coeffs.kind(), k, coeffs.kind() == SolverKind::Ss ? 1 : tied_steps,
                                       coeffs.prediction(), coeffs.step_domain());
    layout.tied_size = reference.size();
    const auto& index = coeffs.index_map();
    for (std::size_t n = 0; n < index.size(); ++n) {
        const ParamIndex& p = index[n];
        const int ic = canonical(p.i);
        std::size_t t = 0;
        switch (p.role) {
            case ParamRole::LmsB:
            case ParamRole::SsB: t = reference.b_index(ic, p.j); break;
            case ParamRole::Corrector: t = reference.corrector_index(ic, p.j); break;
            case ParamRole::SsC: t = reference.ss_c_index(ic, p.j); break;
            case ParamRole::SsA: t = reference.ss_a_index(ic, p.j, p.l); break;
        }
        layout.full_to_tied[n] = t;
    }
    return layout;
}

}  // namespace fewstep
