#pragma once

#include <vector>

#include "factorlasso/types.hpp"

namespace factorlasso {

struct FactorEstimate {
  int K = 0;
  Matrix F_hat;                    // n x K, F'F / n = I
  std::vector<Matrix> Lambda_hat;  // one p x K loading matrix per period
  Matrix U_hat;                    // (n*T) x p residuals, row t*n + i
  Vector eigvals;                  // nonincreasing, length min(n, p*T)
};

// Unit-by-unit Gram matrix of the stacked covariates: G_ik =
// (1/(n p T)) sum_t sum_j x(t*n+i, j) x(t*n+k, j).
Matrix gram_matrix(const Matrix& x_tilde, int n, int T);

// Eigenvalues of gram_matrix, nonincreasing, truncated to min(n, p*T) and
// floored at zero.
Vector gram_eigenvalues(const Matrix& x_tilde, int n, int T);

// Principal-components factor extraction on demeaned covariates. F_hat
// columns are sqrt(n) times the top-K eigenvectors of the Gram matrix, each
// flipped so its largest-magnitude entry is positive.
FactorEstimate extract_factors_pca(const Matrix& x_tilde, int n, int T, int K,
                                   int threads = 1);

// Eigenvalue-ratio rule: argmax over k in 1..K_max of eigvals[k]/eigvals[k+1]
// (1-based), ties broken toward the smallest k.
int select_k_by_eigenvalue_ratio(const Vector& eigvals, int K_max);
int select_num_factors_er(const Matrix& x_tilde, int n, int T, int K_max);

// Selects K by eigenvalue ratio and extracts factors from the same spectral
// decomposition.
FactorEstimate extract_factors_auto(const Matrix& x_tilde, int n, int T,
                                    int K_max, int threads = 1);

// Residual panel x_tilde - F_hat Lambda_t' given already-extracted factors
// and per-period loadings, one period per task.
Matrix factor_residuals(const Matrix& x_tilde, const Matrix& f_hat,
                        const std::vector<Matrix>& lambda_hat, int threads = 1);

// Per-period least-squares coefficients of panel_var columns on F_hat.
std::vector<Vector> project_on_factors(const Matrix& F_hat,
                                       const Matrix& panel_var);

struct FactorProjection {
  std::vector<Vector> deltas;  // one K-vector per period
  Matrix residual;             // n x T
};
FactorProjection factor_projection_residual(const Matrix& F_hat,
                                            const Matrix& panel_var);

}  // namespace factorlasso
