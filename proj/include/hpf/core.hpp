#pragma once

#include <Eigen/Core>

#include "hpf/errors.hpp"

namespace hpf {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using MatrixXi = Matrix<int>;

using Index = Eigen::Index;

}  // namespace hpf
