#pragma once

#include <optional>
#include <vector>

#include "factorlasso/types.hpp"

namespace factorlasso {

struct PenaltySpec {
  double kappa = 0.0;
  Vector loadings;  // per-coordinate, strictly positive
  double c0 = 1.1;
  double q_n = 0.0;
};

// Default tail probability 0.1 / ln(n).
double default_qn(int n);

// Plug-in penalty level (2*c0/sqrt(nT)) * InvNormalCdf(1 - q_n/(2p)).
double penalty_level(int n, int T, int p, double c0, double q_n);

// Cluster-robust penalty loadings: loading_j = sqrt((1/nT) * sum_i
// (sum_t U_{it,j} r_{it})^2), floored at 1e-8 times the largest loading.
Vector clustered_penalty_loadings(const Matrix& u_hat, const Matrix& resid,
                                  int n, int T, int threads = 1);

// Response is stored stacked (period-major, same layout as an n x T
// column-major matrix); regressors row t*n + i holds the covariates of (i,t).
struct LassoProblem {
  const Matrix& regressors;  // (n*T) x p
  Vector response;           // length n*T
  int n = 0, T = 0;

  LassoProblem(const Matrix& regressors_in, const Matrix& response_panel);
  LassoProblem(const Matrix& regressors_in, Vector response_in, int n_in, int T_in);
  int p() const { return static_cast<int>(regressors.cols()); }
};

struct LassoSolution {
  Vector gamma;
  IndexSet support;  // sorted indices with gamma != 0
  double objective = 0.0;
  int sweeps = 0;
  std::vector<double> objective_trace;  // objective after each sweep
};

// Penalized objective (1/nT)|response - U*gamma|^2 + kappa * sum_j
// loadings_j |gamma_j|.
double lasso_objective(const LassoProblem& problem, const PenaltySpec& penalty,
                       const Vector& gamma);

// Single-coordinate soft-threshold update for coordinate j, holding the other
// coordinates of gamma_current fixed.
double soft_threshold_update(const LassoProblem& problem,
                             const PenaltySpec& penalty,
                             const Vector& gamma_current, int j);

// Cyclic coordinate descent (coordinates in ascending order) run until the
// largest coordinate change in a sweep falls below tol and the stationarity
// conditions hold, or max_sweeps is reached.
LassoSolution coordinate_descent_full(const LassoProblem& problem,
                                      const PenaltySpec& penalty,
                                      const Vector& init, double tol = 1e-7,
                                      int max_sweeps = 1000);

// Exactly k full sweeps from init; k = 0 returns init unchanged.
LassoSolution k_step_iterate(const LassoProblem& problem,
                             const PenaltySpec& penalty, const Vector& init,
                             int k);

struct IteratedLassoResult {
  LassoSolution solution;
  PenaltySpec penalty;
};

// Alternates penalty-loading construction and a full lasso solve. Round 1
// builds loadings from preliminary_resid; later rounds use post-lasso refit
// residuals on the previous support.
IteratedLassoResult iterated_loadings_lasso(
    const LassoProblem& problem, const Matrix& preliminary_resid,
    int n_refinements = 2, double c0 = 1.1,
    std::optional<double> q_n = std::nullopt, double tol = 1e-7,
    int max_sweeps = 1000, int threads = 1);

Matrix columns_subset(const Matrix& m, const IndexSet& cols);

// Least-squares refit on the selected columns (minimum-norm solution when
// the submatrix is rank deficient). Empty support gives an empty vector.
Vector post_lasso_ols(const Matrix& u_hat, const IndexSet& support,
                      const Vector& response);

Vector embed_support(const Vector& coefs, const IndexSet& support, int p);

}  // namespace factorlasso
