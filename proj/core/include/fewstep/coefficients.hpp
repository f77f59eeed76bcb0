#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewstep/score_model.hpp"
#include "fewstep/types.hpp"

namespace fewstep {

enum class SolverKind { Lms, Ss, Pc };

std::string_view to_string(SolverKind kind);
SolverKind solver_kind_from_string(std::string_view name);

// Variable in which the step size h_i of the exponential wrapper is measured.
enum class StepDomain { Lambda, Time };

std::string_view to_string(StepDomain domain);
StepDomain step_domain_from_string(std::string_view name);

enum class ParamRole : std::uint8_t {
    LmsB,       // b_{j,i}: predictor / LMS weights
    Corrector,  // a^c_{j,i}: j = 1 is the new evaluation, j >= 2 is eps_{i-j+1}
    SsB,        // b_{j,i}
    SsC,        // c_{j,i}, j >= 2, lambda-domain offset
    SsA,        // a_{j,i,l}, active only for l < j
};

std::string_view to_string(ParamRole role);

struct ParamIndex {
    ParamRole role;
    int i;  // step, 1-based
    int j;  // 1-based
    int l;  // 1-based for SsA, 0 otherwise
};

/// Flat learnable coefficient vector phi together with its index map.
///
/// Layout, step rows in increasing i:
///  - LMS: row i holds b_{1,i} .. b_{m,i}, m = min(k, i).
///  - PC: all LMS rows, followed by corrector rows of the same shape.
///  - SS: per step, b_{1..k,i}, then c_{2..k,i}, then a dense k x (k-1)
///    block a_{j,i,l} (row-major in j). Entries with l >= j are never read.
class SolverCoefficients {
public:
    SolverCoefficients(SolverKind kind, int order, int steps, Prediction prediction,
                       StepDomain domain = StepDomain::Lambda);

    static std::size_t parameter_count(SolverKind kind, int order, int steps);

    SolverKind kind() const noexcept { return kind_; }
    int order() const noexcept { return order_; }
    int steps() const noexcept { return steps_; }
    Prediction prediction() const noexcept { return prediction_; }
    StepDomain step_domain() const noexcept { return domain_; }

    std::size_t size() const noexcept { return values_.size(); }
    Vector& values() noexcept { return values_; }
    const Vector& values() const noexcept { return values_; }
    void set_values(const Vector& v);

    // Number of history weights in row i (LMS, PC predictor and corrector).
    int row_width(int i) const;

    std::size_t b_index(int i, int j) const;
    std::size_t corrector_index(int i, int j) const;
    std::size_t ss_c_index(int i, int j) const;
    std::size_t ss_a_index(int i, int j, int l) const;

    double b(int i, int j) const { return values_[static_cast<Eigen::Index>(b_index(i, j))]; }
    double corrector(int i, int j) const {
        return values_[static_cast<Eigen::Index>(corrector_index(i, j))];
    }
    double ss_c(int i, int j) const;  // c_{1,i} = 0
    double ss_a(int i, int j, int l) const {
        return values_[static_cast<Eigen::Index>(ss_a_index(i, j, l))];
    }

    double& b(int i, int j) { return values_[static_cast<Eigen::Index>(b_index(i, j))]; }
    double& corrector(int i, int j) { return values_[static_cast<Eigen::Index>(corrector_index(i, j))]; }
    double& ss_c(int i, int j) { return values_[static_cast<Eigen::Index>(ss_c_index(i, j))]; }
    double& ss_a(int i, int j, int l) { return values_[static_cast<Eigen::Index>(ss_a_index(i, j, l))]; }

    const std::vector<ParamIndex>& index_map() const noexcept { return index_; }
    bool is_active(std::size_t flat) const;

    // Groups of flat indices whose weights multiply a common increment:
    // LMS rows, corrector rows and SS b rows.
    std::vector<std::vector<std::size_t>> weight_rows() const;

    bool same_layout(const SolverCoefficients& other) const;

private:
    std::size_t row_offset(int i) const;
    std::size_t ss_block(int i) const;
    void build_index();

    SolverKind kind_;
    int order_;
    int steps_;
    Prediction prediction_;
    StepDomain domain_;
    Vector values_;
    std::vector<ParamIndex> index_;
};

// Euclidean projection of every weight row onto {sum = 1}.
void project_consistency(SolverCoefficients& coeffs);

/// Parameter sharing across steps. For LMS/PC every row i >= k maps onto a
/// single shared row (warmup rows stay separate); for SS all steps share one
/// block.
struct TiedLayout {
    std::vector<std::size_t> full_to_tied;
    std::size_t tied_size = 0;

    Vector expand(const Vector& tied) const;
    Vector reduce(const Vector& full_gradient) const;
    // Representative full -> tied values: the first full index wins.
    Vector restrict(const Vector& full) const;
};

TiedLayout tie_steps(const SolverCoefficients& coeffs);

}  // namespace fewstep
