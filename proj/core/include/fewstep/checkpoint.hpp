#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fewstep/coefficients.hpp"
#include "fewstep/config.hpp"
#include "fewstep/grid.hpp"

namespace fewstep {

struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::string config_json;
    std::string mode;
    int dim = 0;
    SolverCoefficients coeffs{SolverKind::Lms, 1, 1, Prediction::Noise};
    TimeGrid grid;
    LearnableTimeParams params;
    double radius = 0.0;
    long updates = 0;
    bool diverged = false;
    std::vector<std::pair<std::uint64_t, Vector>> x_prime;  // (record id, x_T') snapshot
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

// Dimension and step-count mismatches always raise CompatibilityError; a
// config hash mismatch raises unless `force` is set.
void check_compatibility(const Checkpoint& checkpoint, const ExperimentConfig& config, bool force);

}  // namespace fewstep
