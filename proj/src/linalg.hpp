#pragma once

#include <utility>
#include <vector>

#include "support.hpp"

namespace rgia::linalg {

// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
// Returns eigenvalues (descending) and matching unit eigenvectors as
// columns of the returned matrix.
struct SymEigen {
  Vec values;
  Matrix vectors;  // column k is the eigenvector for values[k]
};

SymEigen sym_eigen(const Matrix& m);

// Determinant via LU with partial pivoting.
double lu_det(Matrix m);

// Sample covariance (divisor n-1) of row vectors.
Matrix sample_covariance(const std::vector<Vec>& points);

}  // namespace rgia::linalg
