#pragma once

#include <Eigen/Dense>

namespace fewstep {

using Vector = Eigen::VectorXd;

}  // namespace fewstep
