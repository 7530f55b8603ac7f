#pragma once

#include <Eigen/Dense>

namespace gmmnqmc {

/// n x d observations, one row per observation.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace gmmnqmc
