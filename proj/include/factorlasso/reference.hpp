#pragma once

#include <utility>
#include <vector>

#include "factorlasso/types.hpp"

namespace factorlasso {
// Serial, loop-level reference implementations of the production kernels.
// They follow the defining sums literally and are kept for equivalence tests
// and benchmarks; the production code uses blocked/parallel forms.
namespace serial_ref {

// Triple-sum penalty loadings, no flooring:
// loading_j = sqrt((1/nT) sum_i sum_t sum_s U_{it,j} U_{is,j} r_it r_is).
Vector penalty_loadings_triple_sum(const Matrix& u_hat, const Matrix& resid,
                                   int n, int T);

// Entry-by-entry Gram matrix (1/(npT)) sum_t sum_j x(tn+i,j) x(tn+k,j).
Matrix gram_matrix_naive(const Matrix& x_tilde, int n, int T);

// Residuals x_it - Lambda_t f_i computed cell by cell.
Matrix factor_residuals_naive(const Matrix& x_tilde, const Matrix& f_hat,
                              const std::vector<Matrix>& lambda_hat);

// Per-cluster loops for ((1/nT) sum_i (sum_t eta eps)^2, (1/nT) sum eta^2).
std::pair<double, double> clustered_variance_loops(const Matrix& eta_hat,
                                                   const Matrix& eps_hat);

}  // namespace serial_ref
}  // namespace factorlasso
