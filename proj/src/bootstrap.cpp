#include "factorlasso/bootstrap.hpp"

#include <algorithm>
#include <cmath>

#include "factorlasso/error.hpp"
#include "factorlasso/parallel.hpp"

namespace factorlasso {

Vector mammen_weights(Rng& rng, int n) {
  Vector w(n);
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    w[i] = mammen_from_normals(z1, z2);
  }
  return w;
}

Vector rademacher_weights(Rng& rng, int n) {
  Vector w(n);
  for (int i = 0; i < n; ++i) w[i] = (rng.uniform() < 0.5) ? -1.0 : 1.0;
  return w;
}

Vector draw_weights(Rng& rng, int n, WeightScheme scheme) {
  return scheme == WeightScheme::mammen ? mammen_weights(rng, n)
                                        : rademacher_weights(rng, n);
}

DemeanedPanel generate_bootstrap_panel(const FactorLassoFit& fit,
                                       const FactorEstimate& factors,
                                       const Vector& w_u, const Vector& w_y,
                                       const Vector& w_d) {
  const int n = fit.n, T = fit.T, p = fit.p;
  if (w_u.size() != n || w_y.size() != n || w_d.size() != n)
    throw Error(ErrorCode::dimension, "bootstrap weights must have length n");

  const Vector gamma_d_full = embed_support(fit.gamma_d_post, fit.J_hat, p);
  const Vector gamma_y_full = embed_support(fit.gamma_y_post, fit.J_hat, p);
  const Vector theta_full = gamma_y_full - fit.alpha_hat * gamma_d_full;

  DemeanedPanel out;
  out.n = n;
  out.T = T;
  out.p = p;
  out.cross_section = fit.demeaned.cross_section;
  out.y_tilde.resize(n, T);
  out.d_tilde.resize(n, T);
  out.x_tilde.resize(static_cast<Eigen::Index>(n) * T, p);

  for (int t = 0; t < T; ++t) {
    const auto u_t =
        factors.U_hat.middleRows(static_cast<Eigen::Index>(t) * n, n);
    Matrix u_star = w_u.asDiagonal() * u_t;
    const Vector xi_t = fit.delta_y[t] - fit.alpha_hat * fit.delta_d[t];

    Vector d_col = factors.F_hat * fit.delta_d[t];
    d_col.noalias() += u_star * gamma_d_full;
    d_col.array() += w_d.array() * fit.eta_hat.col(t).array();

    Vector y_col = fit.alpha_hat * d_col;
    y_col.noalias() += factors.F_hat * xi_t;
    y_col.noalias() += u_star * theta_full;
    y_col.array() += w_y.array() * fit.eps_hat.col(t).array();

    out.d_tilde.col(t) = d_col;
    out.y_tilde.col(t) = y_col;
    u_star.noalias() += factors.F_hat * factors.Lambda_hat[t].transpose();
    out.x_tilde.middleRows(static_cast<Eigen::Index>(t) * n, n) =
        u_star;
  }
  return out;
}

namespace {

template <class SolveFn>
double replicate_alpha(const FactorLassoFit& fit, const FactorEstimate& factors,
                       const Vector& w_u, const Vector& w_y, const Vector& w_d,
                       SolveFn&& solve) {
  const DemeanedPanel panel =
      generate_bootstrap_panel(fit, factors, w_u, w_y, w_d);
  const FactorEstimate fstar =
      extract_factors_pca(panel.x_tilde, fit.n, fit.T, fit.K_used, 1);
  const FactorProjection proj_y =
      factor_projection_residual(fstar.F_hat, panel.y_tilde);
  const FactorProjection proj_d =
      factor_projection_residual(fstar.F_hat, panel.d_tilde);
  const LassoProblem prob_y(fstar.U_hat, proj_y.residual);
  const LassoProblem prob_d(fstar.U_hat, proj_d.residual);
  const LassoSolution sol_y = solve(prob_y, fit.penalty_y, fit.lasso_y.gamma);
  const LassoSolution sol_d = solve(prob_d, fit.penalty_d, fit.lasso_d.gamma);
  const PostDoubleOls stage =
      post_double_ols(fstar.U_hat, proj_y.residual, proj_d.residual, sol_y,
                      sol_d, fit.n, fit.T);
  return stage.alpha_hat;
}

}  // namespace

double bootstrap_replicate_with_weights(const FactorLassoFit& fit,
                                        const FactorEstimate& factors,
                                        int ksteps, const Vector& w_u,
                                        const Vector& w_y, const Vector& w_d) {
  if (ksteps < 0)
    throw Error(ErrorCode::domain, "bootstrap: k must be >= 0");
  return replicate_alpha(
      fit, factors, w_u, w_y, w_d,
      [ksteps](const LassoProblem& prob, const PenaltySpec& pen,
               const Vector& init) {
        return k_step_iterate(prob, pen, init, ksteps);
      });
}

double bootstrap_replicate_full_lasso(const FactorLassoFit& fit,
                                      const FactorEstimate& factors,
                                      const Vector& w_u, const Vector& w_y,
                                      const Vector& w_d, double tol,
                                      int max_sweeps) {
  return replicate_alpha(
      fit, factors, w_u, w_y, w_d,
      [tol, max_sweeps](const LassoProblem& prob, const PenaltySpec& pen,
                        const Vector& init) {
        return coordinate_descent_full(prob, pen, init, tol, max_sweeps);
      });
}

double bootstrap_replicate(const FactorLassoFit& fit,
                           const FactorEstimate& factors,
                           const BootstrapConfig& config, Rng& rng) {
  const Vector w_u = draw_weights(rng, fit.n, config.weights);
  const Vector w_y = draw_weights(rng, fit.n, config.weights);
  const Vector w_d = draw_weights(rng, fit.n, config.weights);
  return bootstrap_replicate_with_weights(fit, factors, config.k, w_u, w_y, w_d);
}

std::pair<double, Interval> bootstrap_ci(const Vector& draws, double alpha_hat,
                                         int n, int T, double tau) {
  const int B = static_cast<int>(draws.size());
  if (B < 1) throw Error(ErrorCode::dimension, "bootstrap_ci: no draws");
  if (!(tau > 0.0 && tau < 1.0))
    throw Error(ErrorCode::domain, "bootstrap_ci: tau must lie in (0,1)");
  const double root = std::sqrt(static_cast<double>(n) * T);
  std::vector<double> devs(B);
  for (int b = 0; b < B; ++b) devs[b] = root * std::fabs(draws[b] - alpha_hat);
  std::sort(devs.begin(), devs.end());
  int m = static_cast<int>(std::ceil((1.0 - tau) * B - 1e-9));
  m = std::clamp(m, 1, B);
  const double q_star = devs[m - 1];
  return {q_star, Interval{alpha_hat - q_star / root, alpha_hat + q_star / root}};
}

BootstrapResult run_bootstrap(const FactorLassoFit& fit,
                              const FactorEstimate& factors,
                              const BootstrapConfig& config) {
  if (config.B < 1) throw Error(ErrorCode::domain, "bootstrap: B must be >= 1");
  if (config.k < 0) throw Error(ErrorCode::domain, "bootstrap: k must be >= 0");
  if (!(config.tau > 0.0 && config.tau < 1.0))
    throw Error(ErrorCode::domain, "bootstrap: tau must lie in (0,1)");

  BootstrapResult out;
  out.draws.resize(config.B);
  std::vector<int> degenerate(config.B, 0);
  std::vector<char> failed(config.B, 0);

  // Slot b, attempt a gets the stream derive_seed(seed, b, a): redraws are
  // deterministic and independent of the slot execution order.
  parallel_for(config.B, config.threads, [&](int b) {
    for (int attempt = 0; attempt < config.max_attempts_per_draw; ++attempt) {
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(b),
                          static_cast<std::uint64_t>(attempt)));
      try {
        out.draws[b] = bootstrap_replicate(fit, factors, config, rng);
        return;
      } catch (const Error&) {
        ++degenerate[b];
      }
    }
    failed[b] = 1;
  });

  for (int b = 0; b < config.B; ++b) {
    out.n_degenerate += degenerate[b];
    if (failed[b])
      throw Error(ErrorCode::bootstrap_failure,
                  "bootstrap: slot " + std::to_string(b) +
                      " failed after repeated redraws");
  }
  if (out.n_degenerate > config.B / 2)
    throw Error(ErrorCode::bootstrap_failure,
                "bootstrap: more than half of the draws were degenerate");

  const auto [q_star, ci] =
      bootstrap_ci(out.draws, fit.alpha_hat, fit.n, fit.T, config.tau);
  out.q_star = q_star;
  out.ci = ci;
  return out;
}

}  // namespace factorlasso
