#pragma once

#include <vector>

#include "vitq/tensor.hpp"

namespace vitq {

// Singular values of a matrix, sorted descending, length min(rows, cols).
// One-sided Jacobi orthogonalization in double precision; only the values
// are computed, never the U/V factors.
std::vector<double> singular_values(const Tensor& m);

// Sum of singular values.
double nuclear_norm(const Tensor& m);

} // namespace vitq
