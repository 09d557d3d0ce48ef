// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_TYPES_HPP
#define TOPOBAND_TYPES_HPP

#include <complex>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace topoband
{

using Real = double;
using Complex = std::complex<Real>;

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

using VectorXr = Eigen::VectorXd;
using VectorXc = Eigen::VectorXcd;
using MatrixXr = Eigen::MatrixXd;
using MatrixXc = Eigen::MatrixXcd;

using SparseMatrixXc = Eigen::SparseMatrix<Complex>;
using SparseMatrixXr = Eigen::SparseMatrix<Real>;

constexpr Real pi = 3.14159265358979323846;

}  // namespace topoband

#endif
