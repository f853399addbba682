#pragma once

#include <Eigen/Dense>

namespace minitts {

// All model math runs in double precision: gradient checks against central
// finite differences need the headroom, and determinism is easier to reason
// about with one scalar type everywhere.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

inline bool is_finite(const Mat& m) { return m.allFinite(); }

}  // namespace minitts
