#pragma once

// Closed-form proximal maps and projections used by the augmented-Lagrangian
// solver. All functions are pure.

#include "umx/types.hpp"

namespace umx::prox {

/// Elementwise soft threshold: the prox of lambda * ||.||_1.
/// Callers fold any penalty scaling into lambda.
RealVector soft_threshold(const RealVector& x, double lambda);

/// Euclidean projection onto {w : ||w||_2 <= delta}. delta == 0 maps to zero.
ComplexVector project_l2_ball(const ComplexVector& x, double delta);

/// Elementwise max(x, 0).
RealVector project_nonneg(const RealVector& x);

/// Euclidean projection onto {z : sum over materials of z at each pixel == 1}.
RealVector project_sum_one(const RealVector& x, const StackShape& shape);

}  // namespace umx::prox
