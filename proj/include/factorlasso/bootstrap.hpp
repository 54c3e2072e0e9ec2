#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "factorlasso/inference.hpp"
#include "factorlasso/rng.hpp"
#include "factorlasso/types.hpp"

namespace factorlasso {

enum class WeightScheme { mammen, rademacher };

struct BootstrapConfig {
  int B = 500;
  int k = 15;  // lasso sweeps per replicate
  double tau = 0.05;
  std::uint64_t seed = 0;
  WeightScheme weights = WeightScheme::mammen;
  int threads = 0;
  int max_attempts_per_draw = 64;
};

struct BootstrapResult {
  Vector draws;  // B replicate coefficients, slot order
  double q_star = 0.0;
  Interval ci{};
  int n_degenerate = 0;
};

// Mean-zero, unit-variance two-point construction from two standard normals.
inline double mammen_from_normals(double z1, double z2) {
  return z1 / std::sqrt(2.0) + (z2 * z2 - 1.0) / 2.0;
}

Vector mammen_weights(Rng& rng, int n);
Vector rademacher_weights(Rng& rng, int n);
Vector draw_weights(Rng& rng, int n, WeightScheme scheme);

// Model-based wild bootstrap panel: unit weights w_u/w_y/w_d perturb the
// covariate residuals and the two equation residuals, then the fitted model
// regenerates (y, d, x) in demeaned form.
DemeanedPanel generate_bootstrap_panel(const FactorLassoFit& fit,
                                       const FactorEstimate& factors,
                                       const Vector& w_u, const Vector& w_y,
                                       const Vector& w_d);

// One replicate: regenerate the panel, re-extract K factors, run k lasso
// sweeps per equation warm-started at the sample solutions with the sample
// penalties frozen, and refit. Weights drawn in the order U, Y, D.
double bootstrap_replicate(const FactorLassoFit& fit,
                           const FactorEstimate& factors,
                           const BootstrapConfig& config, Rng& rng);
double bootstrap_replicate_with_weights(const FactorLassoFit& fit,
                                        const FactorEstimate& factors,
                                        int ksteps, const Vector& w_u,
                                        const Vector& w_y, const Vector& w_d);
// Reference path: solves the replicate lassos to convergence instead of
// stopping after k sweeps.
double bootstrap_replicate_full_lasso(const FactorLassoFit& fit,
                                      const FactorEstimate& factors,
                                      const Vector& w_u, const Vector& w_y,
                                      const Vector& w_d, double tol = 1e-10,
                                      int max_sweeps = 5000);

// q_star is the smallest order statistic of sqrt(nT)|draw - alpha_hat| with
// at least ceil((1-tau)B) values at or below it.
std::pair<double, Interval> bootstrap_ci(const Vector& draws, double alpha_hat,
                                         int n, int T, double tau);

BootstrapResult run_bootstrap(const FactorLassoFit& fit,
                              const FactorEstimate& factors,
                              const BootstrapConfig& config);

}  // namespace factorlasso
