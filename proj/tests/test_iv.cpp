#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "factorlasso/error.hpp"
#include "factorlasso/iv.hpp"
#include "factorlasso/rng.hpp"
#include "factorlasso/simulation.hpp"

using namespace factorlasso;

namespace {

IVDataset noiseless_iv(std::uint64_t seed, double alpha, double pi) {
  // Factor structure only in x; y and d are exact linear functions so the
  // just-identified estimator has no estimation error.
  Rng rng(seed);
  IVDataset data;
  data.n = 60;
  data.p = 15;
  const int K = 2;
  const Matrix f = normal_matrix(rng, data.n, K);
  data.x = f * normal_matrix(rng, data.p, K).transpose() +
           0.3 * normal_matrix(rng, data.n, data.p);
  data.z = normal_vector(rng, data.n);
  data.d = pi * data.z;
  data.y = alpha * data.d;
  return data;
}

}  // namespace

TEST_CASE("noiseless just-identified IV is exact") {
  const double alpha = 0.6, pi = 1.5;
  const IVDataset data = noiseless_iv(7, alpha, pi);
  EstimateConfig config;
  config.K = 2;
  const IVFit fit = iv_factor_lasso(data, config);
  CHECK(fit.alpha_hat == doctest::Approx(alpha).epsilon(1e-10));
  CHECK(fit.pi_hat == doctest::Approx(pi).epsilon(1e-10));
}

TEST_CASE("instrument scaling halves pi and keeps F") {
  Rng rng(91);
  IVDataset data;
  data.n = 80;
  data.p = 20;
  const Matrix f = normal_matrix(rng, data.n, 2);
  data.x = f * normal_matrix(rng, data.p, 2).transpose() +
           0.5 * normal_matrix(rng, data.n, data.p);
  data.z = normal_vector(rng, data.n);
  data.d = 0.8 * data.z + f.col(0) + 0.5 * normal_vector(rng, data.n);
  data.y = data.d + f.col(1) + 0.5 * normal_vector(rng, data.n);

  EstimateConfig config;
  config.K = 2;
  const IVFit base = iv_factor_lasso(data, config);

  IVDataset doubled = data;
  doubled.z = 2.0 * data.z;
  const IVFit scaled = iv_factor_lasso(doubled, config);

  CHECK(scaled.pi_hat == doctest::Approx(0.5 * base.pi_hat).epsilon(1e-10));
  CHECK(scaled.first_stage_F ==
        doctest::Approx(base.first_stage_F).epsilon(1e-10));
  CHECK(scaled.alpha_hat == doctest::Approx(base.alpha_hat).epsilon(1e-10));

  // F equals the squared first-stage t-statistic.
  CHECK(base.first_stage_F ==
        doctest::Approx(std::pow(base.pi_hat / base.se_pi, 2)).epsilon(1e-10));

  // z = d degenerates to OLS of partialled y on partialled d.
  IVDataset self = data;
  self.z = data.d;
  const IVFit ols_like = iv_factor_lasso(self, config);
  CHECK(ols_like.pi_hat == doctest::Approx(1.0).epsilon(1e-10));
  // 2SLS with z = d: alpha = (z'y)/(z'd) on partialled values = OLS slope.
  CHECK(std::isfinite(ols_like.alpha_hat));
}

TEST_CASE("factor-lasso IV tracks the oracle across seeds") {
  IvDesign design;
  design.n = 100;
  design.p = 100;
  const int R = 200;
  int close = 0;
  for (int rep = 0; rep < R; ++rep) {
    design.seed = 900 + rep;
    const IvInstance instance = make_iv_instance(design);
    Rng rng(derive_seed(design.seed, 1, 0));
    IvLatents latents;
    const IVDataset data = gen_iv_with_latents(instance, rng, latents);

    EstimateConfig config;
    config.K = design.K;
    const IVFit fit = iv_factor_lasso(data, config);
    const BaselineResult oracle = oracle_iv(data, instance, latents);
    const double gap = std::abs(fit.alpha_hat - oracle.alpha_hat);
    if (gap <= 3.0 * std::max(fit.se_alpha, oracle.se)) ++close;
  }
  CHECK(close >= static_cast<int>(0.95 * R));
}

TEST_CASE("degenerate instrument is rejected") {
  IVDataset data = noiseless_iv(3, 1.0, 1.0);
  data.z.setConstant(2.0);  // constant! demeaning zeroes it out
  EstimateConfig config;
  config.K = 2;
  try {
    (void)iv_factor_lasso(data, config);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::weak_instrument);
  }
}

TEST_CASE("iv csv loader") {
  const std::string path = "test_iv_data.csv";
  {
    std::ofstream out(path);
    out << "id,time,y,d,z,x1,x2\n"
           "u1,0,1.5,0.3,0.9,1,2\n"
           "u2,0,2.5,0.4,1.1,3,4\n"
           "u3,0,3.5,0.5,1.3,5,6\n";
  }
  const IVDataset data = load_iv_csv(path);
  std::remove(path.c_str());
  CHECK(data.n == 3);
  CHECK(data.p == 2);
  CHECK(data.y[1] == 2.5);
  CHECK(data.z[2] == 1.3);
  CHECK(data.x(2, 1) == 6.0);

  CHECK_THROWS_AS((void)load_iv_csv("missing_file.csv"), Error);
}

TEST_CASE("iv fit exposes the triple union and interval") {
  IvDesign design;
  design.seed = 21;
  const IvInstance instance = make_iv_instance(design);
  Rng rng(derive_seed(design.seed, 1, 0));
  const IVDataset data = gen_iv(instance, rng);
  EstimateConfig config;
  config.K = design.K;
  const IVFit fit = iv_factor_lasso(data, config);

  IndexSet manual = post_double_select(fit.lasso_y, fit.lasso_d);
  LassoSolution z_only = fit.lasso_z;
  LassoSolution empty;
  empty.gamma = Vector::Zero(data.p);
  IndexSet with_z = post_double_select(z_only, empty);
  IndexSet unioned;
  std::set_union(manual.begin(), manual.end(), with_z.begin(), with_z.end(),
                 std::back_inserter(unioned));
  CHECK(fit.J_hat == unioned);

  CHECK(fit.ci.lo == doctest::Approx(fit.alpha_hat -
                                     1.959963984540054 * fit.se_alpha)
                         .epsilon(1e-9));
  CHECK(fit.K_used == design.K);
}
