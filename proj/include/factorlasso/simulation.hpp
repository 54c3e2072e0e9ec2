#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "factorlasso/bootstrap.hpp"
#include "factorlasso/inference.hpp"
#include "factorlasso/iv.hpp"
#include "factorlasso/panel.hpp"
#include "factorlasso/rng.hpp"
#include "factorlasso/types.hpp"

namespace factorlasso {

// Kac-Murdock-Szego covariance: entry (r,s) = rho^|r-s|.
Matrix kms_covariance(int p, double rho);

struct PpfmDesign {
  int n = 100, T = 10, K = 3, p = 100;
  double rho_u = 0.7;
  double r2_x = 0.5;    // average covariate R^2 on the factor part
  double r2_d = 0.7;    // structural R^2 of the treatment equation
  double r2_y = 0.7;    // structural R^2 of the outcome equation
  double share_d = 0.5; // factor share of the treatment structural variance
  double share_y = 0.5;
  double alpha_true = 1.0;
  std::uint64_t seed = 0;
};

// Loadings, fixed effects and calibrated constants, drawn once per design and
// reused across replications.
struct PpfmInstance {
  PpfmDesign design;
  Vector g, zeta;                 // n
  Matrix w;                       // n x p
  Vector nu, mu;                  // T
  Matrix rho_effects;             // T x p
  std::vector<Vector> xi, delta_d;  // per period, K
  std::vector<Matrix> lambda;       // per period, p x K
  Vector theta, gamma_d;          // entries 1/j^2
  Matrix sigma_u_chol;            // p x p lower Cholesky factor
  double c_lambda = 0, c_delta = 0, c_gamma = 0, c_xi = 0, c_theta = 0;
};

PpfmInstance make_ppfm_instance(const PpfmDesign& design);
PanelDataset gen_ppfm(const PpfmInstance& instance, Rng& rng);
std::pair<PanelDataset, PpfmInstance> gen_ppfm(const PpfmDesign& design, Rng& rng);

struct IvDesign {
  int n = 100, K = 2, p = 100;
  double rho_u = 0.7;
  double corr_eps_eta = 0.8;
  double r2_x = 0.5;
  double r2_z = 0.7, share_z = 0.5;  // instrument equation calibration
  double r2_d = 0.7, share_d = 0.5;
  double r2_y = 0.7, share_y = 0.5;
  double frac_z = 0.25;  // partial contribution of the instrument to d
  double alpha_true = 1.0;
  std::uint64_t seed = 0;
};

struct IvInstance {
  IvDesign design;
  double nu = 0, mu = 0, zeta = 0;  // equation intercepts
  Vector rho_effects;               // p
  Vector xi, delta_d, delta_z;      // K
  Matrix lambda;                    // p x K
  Vector theta, gamma_d, gamma_z;   // entries 1/j^2
  Matrix sigma_u_chol;
  double c_lambda = 0, c_delta_z = 0, c_gamma_z = 0, c_delta_d = 0,
         c_gamma_d = 0, c_xi = 0, c_theta = 0, pi = 0;
};

// Per-replication draws kept for the oracle estimator.
struct IvLatents {
  Matrix f;  // n x K
  Matrix u;  // n x p
  Vector v, eps, eta;
};

IvInstance make_iv_instance(const IvDesign& design);
IVDataset gen_iv(const IvInstance& instance, Rng& rng);
IVDataset gen_iv_with_latents(const IvInstance& instance, Rng& rng,
                              IvLatents& latents);

// Streaming empirical R^2 checks of the infeasible structural regressions.
struct PpfmCalibrationCheck {
  double r2_x_avg = 0, r2_y = 0, r2_d = 0;
};
PpfmCalibrationCheck measure_ppfm_calibration(const PpfmInstance& instance,
                                              Rng& rng, int samples);

struct IvCalibrationCheck {
  double r2_z = 0, r2_y = 0, r2_d = 0;
  double corr_eps_eta = 0;
  double partial_r2_z = 0;
};
IvCalibrationCheck measure_iv_calibration(const IvInstance& instance, Rng& rng,
                                          int samples);

struct BaselineResult {
  double alpha_hat = 0;
  double se = 0;
  Interval ci{};
  int K_used = 0;
  int support_size = 0;
};

// Pooled OLS of the demeaned outcome on the treatment and all demeaned
// covariates, unit-clustered standard errors.
BaselineResult ols_all_x(const PanelDataset& data, double tau = 0.05);
// OLS on the treatment and extracted factors interacted with period dummies.
BaselineResult pure_factor(const PanelDataset& data,
                           std::optional<int> K = std::nullopt,
                           double tau = 0.05);
// Post-double-selection without the factor step (covariates used directly).
BaselineResult double_selection(const PanelDataset& data,
                                const EstimateConfig& config = {});
// Infeasible IV benchmark using the true structural components.
BaselineResult oracle_iv(const IVDataset& data, const IvInstance& instance,
                         const IvLatents& latents, double tau = 0.05);

struct EstimatorStats {
  std::string name;
  int reps = 0;
  int n_failed = 0;
  double rmse = 0, rmse_truncated = 0, bias = 0;
  double size_5pct = 0, coverage_95 = 0, mean_ci_length = 0;
  double mean_K = 0, mean_support_size = 0;
  int n_boot_failed = 0;
  double boot_coverage_95 = 0, boot_mean_ci_length = 0;  // set when B > 0
};

struct MonteCarloReport {
  std::string design_name;  // "ppfm" or "iv"
  int R = 0;
  double trunc_cap = 0.1;
  int bootstrap_B = 0;
  std::vector<EstimatorStats> estimators;
  PpfmDesign ppfm{};
  IvDesign iv{};
};

struct MonteCarloOptions {
  int R = 100;
  std::vector<std::string> estimators;  // empty = design default list
  int bootstrap_B = 0;                  // factor_lasso only
  int boot_ksteps = 15;
  WeightScheme boot_weights = WeightScheme::mammen;
  int threads = 0;
  EstimateConfig est{};
};

MonteCarloReport run_monte_carlo(const PpfmDesign& design,
                                 const MonteCarloOptions& options);
MonteCarloReport run_monte_carlo(const IvDesign& design,
                                 const MonteCarloOptions& options);

}  // namespace factorlasso
