#pragma once

#include <cstdint>

#include "vitq/tensor.hpp"

namespace vitq {

// Pearson correlation over the flattened tensors, in [-1, 1]. Returns 0 when
// either side has zero variance (a constant tensor carries no similarity
// evidence); the first such occurrence per process logs a warning.
double pearson(const Tensor& o, const Tensor& o_hat);

// Hinge penalty on element pairs whose relative order flips between a and
// a_hat. Sums over rows and column pairs i < j:
//   hinge((a_hat[k,i] - a_hat[k,j]) * sign(a[k,i] - a[k,j]))
// with hinge(p) = max(theta - p, 0). Tied reference pairs contribute 0.
double ranking_loss(const Tensor& a, const Tensor& a_hat, double theta);

// Same, but rows wider than max_pairs_per_row choose that many column pairs
// uniformly with the given seed instead of enumerating all of them. Rows with
// at most 64 columns always take the exact path.
double ranking_loss_sampled(const Tensor& a, const Tensor& a_hat, double theta,
                            std::size_t max_pairs_per_row, std::uint64_t seed);

// Pairs (i, j) within a row whose strict order differs between a and a_hat.
std::size_t inversion_count(const Tensor& a, const Tensor& a_hat);

} // namespace vitq
