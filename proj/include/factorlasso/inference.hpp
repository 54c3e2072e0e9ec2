#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "factorlasso/cluster_lasso.hpp"
#include "factorlasso/factor_model.hpp"
#include "factorlasso/panel.hpp"
#include "factorlasso/types.hpp"

namespace factorlasso {

struct EstimateConfig {
  std::optional<int> K;       // fixed factor count; empty = eigenvalue-ratio
  int k_max = 8;              // selection cap (clamped to n - 2)
  double c0 = 1.1;
  std::optional<double> q_n;  // empty = 0.1 / ln(n)
  double tol = 1e-7;
  int max_sweeps = 1000;
  int refinements = 2;
  double tau = 0.05;          // CI level is 1 - tau
  int threads = 0;
};

struct FactorLassoFit {
  double alpha_hat = 0.0;
  double se = 0.0;
  Interval ci{};
  double sigma_eta_eps = 0.0;
  double sigma_eta_sq = 0.0;

  IndexSet J_hat;
  Vector gamma_y_post, gamma_d_post;  // coefficients over J_hat
  Matrix e_hat, eta_hat, eps_hat;     // n x T residual panels
  std::vector<Vector> delta_y, delta_d;

  LassoSolution lasso_y, lasso_d;
  PenaltySpec penalty_y, penalty_d;
  FactorEstimate factors;
  DemeanedPanel demeaned;
  int K_used = 0;
  int n = 0, T = 0, p = 0;
  double tau = 0.05;
};

// Sorted union of the two lasso supports.
IndexSet post_double_select(const LassoSolution& sol_y,
                            const LassoSolution& sol_d);

// alpha = sum(eta .* e) / sum(eta.^2).
double estimate_alpha(const Matrix& eta_hat, const Matrix& e_hat);

// (sigma_eta_eps, sigma_eta_sq): unit-clustered score variance
// (1/nT) sum_i (sum_t eta_it eps_it)^2 and (1/nT) sum_it eta_it^2.
std::pair<double, double> clustered_variance(const Matrix& eta_hat,
                                             const Matrix& eps_hat);

Interval asymptotic_ci(double alpha_hat, double sigma_eta_eps,
                       double sigma_eta_sq, int n, int T, double tau);

// Final shared stage: union support, refit both equations by least squares,
// form residuals and the treatment coefficient.
struct PostDoubleOls {
  IndexSet J;
  Vector gamma_y, gamma_d;  // over J
  Matrix e_hat, eta_hat;    // n x T
  double alpha_hat = 0.0;
};
PostDoubleOls post_double_ols(const Matrix& u_hat, const Matrix& resid_y,
                              const Matrix& resid_d, const LassoSolution& sol_y,
                              const LassoSolution& sol_d, int n, int T);

FactorLassoFit factor_lasso_estimate(const PanelDataset& data,
                                     const EstimateConfig& config = {});

}  // namespace factorlasso
