#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

namespace scrcl {

/// Dense row-major matrix of 64-bit floats. Every numeric quantity in the
/// pipeline (expression values, adjacencies, embeddings, parameters) is one.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Log-argument guard used by every divergence.
inline constexpr double kLogEps = 1e-12;

inline std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Standard product with a shape check.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise (each row sums to 1) and column-wise softmax with max-subtraction.
Matrix softmax_rows(const Matrix& m);
Matrix softmax_cols(const Matrix& m);

}  // namespace scrcl
