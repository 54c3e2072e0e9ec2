// Timing harness: production kernels against the serial reference loops,
// plus the bootstrap at one and several threads.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "factorlasso/bootstrap.hpp"
#include "factorlasso/cluster_lasso.hpp"
#include "factorlasso/factor_model.hpp"
#include "factorlasso/inference.hpp"
#include "factorlasso/parallel.hpp"
#include "factorlasso/reference.hpp"
#include "factorlasso/rng.hpp"
#include "factorlasso/simulation.hpp"

namespace {

double time_ms(int repeats, const std::function<void()>& body) {
  body();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) body();
  const auto stop = std::chrono::steady_clock::now();
  const double total =
      std::chrono::duration<double, std::milli>(stop - start).count();
  return total / repeats;
}

void report(const std::string& label, double ref_ms, double prod_ms) {
  std::printf("%-34s %10.3f ms %10.3f ms %8.2fx\n", label.c_str(), ref_ms,
              prod_ms, ref_ms / prod_ms);
}

}  // namespace

int main() {
  using namespace factorlasso;

  PpfmDesign design;
  design.seed = 7;
  Rng rng(derive_seed(design.seed, 1, 0));
  const auto [data, instance] = gen_ppfm(design, rng);
  const DemeanedPanel dm = demean_panel(data);
  const int n = data.n, T = data.T;
  const int max_threads = resolve_threads(0);

  std::printf("n=%d T=%d p=%d, %d thread(s) available, openmp %s\n\n", n, T,
              data.p, max_threads, openmp_enabled() ? "on" : "off");
  std::printf("%-34s %13s %13s %9s\n", "kernel", "reference", "production",
              "speedup");

  double sink = 0;

  report("gram matrix",
         time_ms(3, [&] { sink += serial_ref::gram_matrix_naive(dm.x_tilde, n, T)(0, 0); }),
         time_ms(3, [&] { sink += gram_matrix(dm.x_tilde, n, T)(0, 0); }));

  const FactorEstimate factors = extract_factors_pca(dm.x_tilde, n, T, design.K);
  report("factor residuals",
         time_ms(3, [&] {
           sink += serial_ref::factor_residuals_naive(dm.x_tilde, factors.F_hat,
                                                      factors.Lambda_hat)(0, 0);
         }),
         time_ms(3, [&] {
           sink += factor_residuals(dm.x_tilde, factors.F_hat,
                                    factors.Lambda_hat, max_threads)(0, 0);
         }));

  const FactorProjection proj_y =
      factor_projection_residual(factors.F_hat, dm.y_tilde);
  report("penalty loadings",
         time_ms(3, [&] {
           sink += serial_ref::penalty_loadings_triple_sum(factors.U_hat,
                                                           proj_y.residual, n, T)(0);
         }),
         time_ms(3, [&] {
           sink += clustered_penalty_loadings(factors.U_hat, proj_y.residual, n,
                                              T, max_threads)(0);
         }));

  const FactorProjection proj_d =
      factor_projection_residual(factors.F_hat, dm.d_tilde);
  report("clustered variance",
         time_ms(20, [&] {
           sink += serial_ref::clustered_variance_loops(proj_d.residual,
                                                        proj_y.residual).first;
         }),
         time_ms(20, [&] {
           sink += clustered_variance(proj_d.residual, proj_y.residual).first;
         }));

  EstimateConfig est;
  est.K = design.K;
  const FactorLassoFit fit = factor_lasso_estimate(data, est);
  BootstrapConfig boot;
  boot.B = 50;
  boot.seed = 11;
  boot.threads = 1;
  const double boot1 = time_ms(1, [&] {
    sink += run_bootstrap(fit, fit.factors, boot).q_star;
  });
  boot.threads = max_threads;
  const double bootN = time_ms(1, [&] {
    sink += run_bootstrap(fit, fit.factors, boot).q_star;
  });
  std::printf("%-34s %10.3f ms %10.3f ms %8.2fx\n",
              "bootstrap B=50 (1 vs max threads)", boot1, bootN, boot1 / bootN);

  if (sink == 0.1234567) std::puts("");  // keep results live
  return 0;
}
