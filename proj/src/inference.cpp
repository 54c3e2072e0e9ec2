#include "factorlasso/inference.hpp"

#include <algorithm>
#include <cmath>

#include "factorlasso/error.hpp"
#include "factorlasso/stats.hpp"

namespace factorlasso {

IndexSet post_double_select(const LassoSolution& sol_y,
                            const LassoSolution& sol_d) {
  IndexSet out;
  out.reserve(sol_y.support.size() + sol_d.support.size());
  std::set_union(sol_y.support.begin(), sol_y.support.end(),
                 sol_d.support.begin(), sol_d.support.end(),
                 std::back_inserter(out));
  return out;
}

double estimate_alpha(const Matrix& eta_hat, const Matrix& e_hat) {
  if (eta_hat.rows() != e_hat.rows() || eta_hat.cols() != e_hat.cols())
    throw Error(ErrorCode::dimension, "estimate_alpha: shape mismatch");
  const double denom = eta_hat.squaredNorm();
  if (denom <= 0.0)
    throw Error(ErrorCode::degenerate_treatment,
                "estimate_alpha: treatment residual is identically zero");
  return eta_hat.cwiseProduct(e_hat).sum() / denom;
}

std::pair<double, double> clustered_variance(const Matrix& eta_hat,
                                             const Matrix& eps_hat) {
  if (eta_hat.rows() != eps_hat.rows() || eta_hat.cols() != eps_hat.cols())
    throw Error(ErrorCode::dimension, "clustered_variance: shape mismatch");
  const double inv_nT =
      1.0 / (static_cast<double>(eta_hat.rows()) * eta_hat.cols());
  const Vector unit_scores = eta_hat.cwiseProduct(eps_hat).rowwise().sum();
  return {inv_nT * unit_scores.squaredNorm(),
          inv_nT * eta_hat.squaredNorm()};
}

Interval asymptotic_ci(double alpha_hat, double sigma_eta_eps,
                       double sigma_eta_sq, int n, int T, double tau) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw Error(ErrorCode::domain, "asymptotic_ci: tau must lie in (0,1]");
  if (sigma_eta_sq <= 0.0)
    throw Error(ErrorCode::degenerate_treatment,
                "asymptotic_ci: zero treatment residual variance");
  if (sigma_eta_eps < 0.0)
    throw Error(ErrorCode::numerical, "asymptotic_ci: negative score variance");
  const double zeta = (tau == 1.0) ? 0.0 : normal_quantile(1.0 - tau / 2.0);
  const double half = zeta * std::sqrt(sigma_eta_eps) / sigma_eta_sq /
                      std::sqrt(static_cast<double>(n) * T);
  return Interval{alpha_hat - half, alpha_hat + half};
}

PostDoubleOls post_double_ols(const Matrix& u_hat, const Matrix& resid_y,
                              const Matrix& resid_d, const LassoSolution& sol_y,
                              const LassoSolution& sol_d, int n, int T) {
  const Eigen::Index nT = static_cast<Eigen::Index>(n) * T;
  if (u_hat.rows() != nT || resid_y.rows() != n || resid_y.cols() != T ||
      resid_d.rows() != n || resid_d.cols() != T)
    throw Error(ErrorCode::dimension, "post_double_ols: shape mismatch");

  PostDoubleOls out;
  out.J = post_double_select(sol_y, sol_d);
  if (static_cast<Eigen::Index>(out.J.size()) > nT) {
    // Keep the nT entries with the largest lasso magnitude.
    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(out.J.size());
    for (int j : out.J)
      ranked.emplace_back(
          std::max(std::fabs(sol_y.gamma[j]), std::fabs(sol_d.gamma[j])), j);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    ranked.resize(nT);
    IndexSet capped;
    capped.reserve(nT);
    for (const auto& [mag, j] : ranked) capped.push_back(j);
    std::sort(capped.begin(), capped.end());
    warn("selected support larger than n*T, dropped " +
         std::to_string(out.J.size() - capped.size()) + " smallest entries");
    out.J = std::move(capped);
  }

  const Eigen::Map<const Vector> ry(resid_y.data(), nT);
  const Eigen::Map<const Vector> rd(resid_d.data(), nT);
  out.gamma_y = post_lasso_ols(u_hat, out.J, ry);
  out.gamma_d = post_lasso_ols(u_hat, out.J, rd);

  Vector e_vec = ry;
  Vector eta_vec = rd;
  if (!out.J.empty()) {
    const Matrix sub = columns_subset(u_hat, out.J);
    e_vec.noalias() -= sub * out.gamma_y;
    eta_vec.noalias() -= sub * out.gamma_d;
  }
  out.e_hat = Eigen::Map<const Matrix>(e_vec.data(), n, T);
  out.eta_hat = Eigen::Map<const Matrix>(eta_vec.data(), n, T);
  out.alpha_hat = estimate_alpha(out.eta_hat, out.e_hat);
  return out;
}

FactorLassoFit factor_lasso_estimate(const PanelDataset& data,
                                     const EstimateConfig& config) {
  data.validate();
  if (!(config.tau > 0.0 && config.tau <= 1.0))
    throw Error(ErrorCode::domain, "estimate: tau must lie in (0,1]");

  FactorLassoFit fit;
  fit.n = data.n;
  fit.T = data.T;
  fit.p = data.p;
  fit.tau = config.tau;
  fit.demeaned = demean_panel(data);

  if (config.K) {
    fit.factors = extract_factors_pca(fit.demeaned.x_tilde, data.n, data.T,
                                      *config.K, config.threads);
  } else {
    const int k_cap = std::max(1, std::min(config.k_max, data.n - 2));
    fit.factors = extract_factors_auto(fit.demeaned.x_tilde, data.n, data.T,
                                       k_cap, config.threads);
  }
  fit.K_used = fit.factors.K;

  FactorProjection proj_y =
      factor_projection_residual(fit.factors.F_hat, fit.demeaned.y_tilde);
  FactorProjection proj_d =
      factor_projection_residual(fit.factors.F_hat, fit.demeaned.d_tilde);
  fit.delta_y = std::move(proj_y.deltas);
  fit.delta_d = std::move(proj_d.deltas);

  const LassoProblem prob_y(fit.factors.U_hat, proj_y.residual);
  const LassoProblem prob_d(fit.factors.U_hat, proj_d.residual);
  IteratedLassoResult ly = iterated_loadings_lasso(
      prob_y, proj_y.residual, config.refinements, config.c0, config.q_n,
      config.tol, config.max_sweeps, config.threads);
  IteratedLassoResult ld = iterated_loadings_lasso(
      prob_d, proj_d.residual, config.refinements, config.c0, config.q_n,
      config.tol, config.max_sweeps, config.threads);
  fit.lasso_y = std::move(ly.solution);
  fit.lasso_d = std::move(ld.solution);
  fit.penalty_y = std::move(ly.penalty);
  fit.penalty_d = std::move(ld.penalty);

  PostDoubleOls stage =
      post_double_ols(fit.factors.U_hat, proj_y.residual, proj_d.residual,
                      fit.lasso_y, fit.lasso_d, data.n, data.T);
  fit.J_hat = std::move(stage.J);
  fit.gamma_y_post = std::move(stage.gamma_y);
  fit.gamma_d_post = std::move(stage.gamma_d);
  fit.e_hat = std::move(stage.e_hat);
  fit.eta_hat = std::move(stage.eta_hat);
  fit.alpha_hat = stage.alpha_hat;
  fit.eps_hat = fit.e_hat - fit.alpha_hat * fit.eta_hat;

  const auto [s_ne, s_n2] = clustered_variance(fit.eta_hat, fit.eps_hat);
  fit.sigma_eta_eps = s_ne;
  fit.sigma_eta_sq = s_n2;
  fit.se = std::sqrt(s_ne) / s_n2 / std::sqrt(static_cast<double>(data.n) * data.T);
  fit.ci = asymptotic_ci(fit.alpha_hat, s_ne, s_n2, data.n, data.T, config.tau);
  return fit;
}

}  // namespace factorlasso
