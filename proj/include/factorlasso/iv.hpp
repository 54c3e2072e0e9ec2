#pragma once

#include <string>

#include "factorlasso/inference.hpp"
#include "factorlasso/panel.hpp"
#include "factorlasso/types.hpp"

namespace factorlasso {

struct IVDataset {
  int n = 0, p = 0;
  Vector y, d, z;
  Matrix x;  // n x p
  void validate() const;
};

struct IVFit {
  double alpha_hat = 0.0;
  double se_alpha = 0.0;
  double pi_hat = 0.0;       // first-stage coefficient of d on z, partialled
  double se_pi = 0.0;
  double first_stage_F = 0.0;
  IndexSet J_hat;            // union of the three lasso supports
  int K_used = 0;
  LassoSolution lasso_y, lasso_d, lasso_z;
  double tau = 0.05;
  Interval ci{};
};

// Cross-sectional factor-lasso IV: extract factors from x, lasso each of
// y, d, z on the covariate residuals, partial [factors, selected columns]
// out of all three, then just-identified two-stage least squares with
// heteroskedasticity-robust standard errors.
IVFit iv_factor_lasso(const IVDataset& data, const EstimateConfig& config = {});

// Cross-section CSV: one row per unit with y, d, the instrument column and
// prefix-named covariates.
IVDataset load_iv_csv(const std::string& path, const CsvSchema& schema = {},
                      const std::string& z_col = "z");

}  // namespace factorlasso
