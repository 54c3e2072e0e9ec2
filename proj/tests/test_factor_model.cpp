#include <doctest.h>

#include <functional>
#include <vector>

#include "factorlasso/error.hpp"
#include "factorlasso/factor_model.hpp"
#include "factorlasso/rng.hpp"

using namespace factorlasso;

namespace {

// Stacked covariate panel X(t*n+i, j) = lambda_t(j,:) . f(i,:), no noise.
Matrix rank_k_panel(const Matrix& f, const std::vector<Matrix>& lambda) {
  const int n = static_cast<int>(f.rows());
  const int T = static_cast<int>(lambda.size());
  const int p = static_cast<int>(lambda[0].rows());
  Matrix x(static_cast<Eigen::Index>(n) * T, p);
  for (int t = 0; t < T; ++t)
    x.middleRows(static_cast<Eigen::Index>(t) * n, n) =
        f * lambda[t].transpose();
  return x;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::usage;
}

}  // namespace

TEST_CASE("noiseless rank-1 panel: zero residual, span recovered") {
  Rng rng(21);
  const int n = 12, T = 4, p = 6;
  const Matrix f = normal_matrix(rng, n, 1);
  std::vector<Matrix> lambda;
  for (int t = 0; t < T; ++t) lambda.push_back(normal_matrix(rng, p, 1));
  const Matrix x = rank_k_panel(f, lambda);

  const FactorEstimate est = extract_factors_pca(x, n, T, 1);
  CHECK(est.U_hat.cwiseAbs().maxCoeff() < 1e-8);
  // span check: F_hat proportional to f.
  const double scale = est.F_hat(0, 0) / f(0, 0);
  CHECK((est.F_hat - scale * f).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(select_num_factors_er(x, n, T, 3) == 1);
}

TEST_CASE("diagonal gram: factors are scaled coordinate axes") {
  // One period, covariates = scaled identity rows: unit i has x(i,j) =
  // c_i * 1{i==j}, so the Gram matrix is diagonal with distinct entries.
  const int n = 4, p = 4;
  Matrix x = Matrix::Zero(n, p);
  x(0, 0) = 4;
  x(1, 1) = 3;
  x(2, 2) = 2;
  x(3, 3) = 1;
  const FactorEstimate est = extract_factors_pca(x, n, 1, 2);
  // Top eigenvector is e_0, second e_1; scaled by sqrt(n), flipped positive.
  CHECK(est.F_hat(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(est.F_hat(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(est.F_hat.col(0).tail(3).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("factor estimate invariants on noisy data") {
  Rng rng(33);
  const int n = 20, T = 5, p = 10, K = 2;
  const Matrix f = normal_matrix(rng, n, K);
  std::vector<Matrix> lambda;
  for (int t = 0; t < T; ++t) lambda.push_back(normal_matrix(rng, p, K));
  const Matrix x =
      rank_k_panel(f, lambda) + 0.3 * normal_matrix(rng, n * T, p);

  const FactorEstimate est = extract_factors_pca(x, n, T, K);

  // Normalization.
  const Matrix gram_f = est.F_hat.transpose() * est.F_hat / n;
  CHECK((gram_f - Matrix::Identity(K, K)).cwiseAbs().maxCoeff() < 1e-8);

  // Decomposition identity X = Lambda f + U, exact by construction.
  Matrix recon(static_cast<Eigen::Index>(n) * T, p);
  for (int t = 0; t < T; ++t)
    recon.middleRows(static_cast<Eigen::Index>(t) * n, n) =
        est.F_hat * est.Lambda_hat[t].transpose();
  CHECK((x - recon - est.U_hat).cwiseAbs().maxCoeff() < 1e-12);

  // Least-squares orthogonality per (t, j).
  for (int t = 0; t < T; ++t) {
    const Matrix u_t = est.U_hat.middleRows(static_cast<Eigen::Index>(t) * n, n);
    CHECK((est.F_hat.transpose() * u_t).cwiseAbs().maxCoeff() < 1e-8);
  }

  // Spectrum: nonincreasing, nonnegative, trace conservation.
  const Vector ev = est.eigvals;
  for (int k = 1; k < ev.size(); ++k) CHECK(ev[k] <= ev[k - 1] + 1e-15);
  CHECK(ev.minCoeff() >= 0.0);
  const double trace = x.squaredNorm() / (static_cast<double>(n) * p * T);
  CHECK(ev.sum() == doctest::Approx(trace).epsilon(1e-8));

  // Determinism incl. the sign convention.
  const FactorEstimate again = extract_factors_pca(x, n, T, K);
  CHECK((est.F_hat - again.F_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gram matrix definition") {
  Rng rng(44);
  const int n = 5, T = 3, p = 4;
  const Matrix x = normal_matrix(rng, n * T, p);
  const Matrix g = gram_matrix(x, n, T);
  // Entry (i,k) by the definition sum.
  double direct = 0;
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < p; ++j) direct += x(t * n + 1, j) * x(t * n + 3, j);
  direct /= static_cast<double>(n) * p * T;
  CHECK(g(1, 3) == doctest::Approx(direct).epsilon(1e-12));
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("eigenvalue-ratio selection on fixed spectra") {
  Vector ev(5);
  ev << 10, 5, 1, 0.5, 0.25;
  CHECK(select_k_by_eigenvalue_ratio(ev, 4) == 2);

  Vector tie(4);
  tie << 9, 3, 1, 1.0 / 3.0;
  CHECK(select_k_by_eigenvalue_ratio(tie, 3) == 1);

  Vector dead = Vector::Constant(4, 1e-14);
  CHECK(code_of([&] { select_k_by_eigenvalue_ratio(dead, 3); }) ==
        ErrorCode::degenerate_spectrum);
}

TEST_CASE("extract_factors_pca rejects out-of-range K") {
  Rng rng(9);
  const Matrix x = normal_matrix(rng, 6, 4);
  CHECK(code_of([&] { extract_factors_pca(x, 6, 1, 0); }) ==
        ErrorCode::dimension);
  CHECK(code_of([&] { extract_factors_pca(x, 6, 1, 6); }) ==
        ErrorCode::dimension);
  CHECK_NOTHROW(extract_factors_pca(x, 6, 1, 4));
}

TEST_CASE("projection on factors") {
  Rng rng(77);
  const int n = 10, K = 2, T = 3;
  const Matrix f = normal_matrix(rng, n, K);

  // Exact fit: v_t = F c.
  Vector c(K);
  c << 1.5, -2.0;
  Matrix v(n, T);
  for (int t = 0; t < T; ++t) v.col(t) = f * c;
  const auto deltas = project_on_factors(f, v);
  for (int t = 0; t < T; ++t)
    CHECK((deltas[t] - c).cwiseAbs().maxCoeff() < 1e-10);

  // Orthogonal response: coefficients vanish.
  Matrix v_orth = normal_matrix(rng, n, T);
  v_orth -= f * (f.transpose() * f).ldlt().solve(f.transpose() * v_orth);
  const auto zero_deltas = project_on_factors(f, v_orth);
  for (int t = 0; t < T; ++t)
    CHECK(zero_deltas[t].cwiseAbs().maxCoeff() < 1e-10);

  // Hand scalar case: F = (1,-1)', v = (3,1)' -> delta = 1.
  Matrix f2(2, 1);
  f2 << 1, -1;
  Matrix v2(2, 1);
  v2 << 3, 1;
  CHECK(project_on_factors(f2, v2)[0](0) == doctest::Approx(1.0).epsilon(1e-14));

  // Residuals orthogonal to the factors.
  const FactorProjection proj = factor_projection_residual(f, v_orth);
  CHECK((f.transpose() * proj.residual).cwiseAbs().maxCoeff() < 1e-8);

  // Rank-deficient factor matrix rejected.
  Matrix f_rank1(n, 2);
  f_rank1.col(0) = f.col(0);
  f_rank1.col(1) = 2 * f.col(0);
  CHECK(code_of([&] { project_on_factors(f_rank1, v); }) ==
        ErrorCode::singular);
}

TEST_CASE("auto extraction matches manual select-then-extract") {
  Rng rng(15);
  const int n = 16, T = 4, p = 8, K_true = 2;
  const Matrix f = normal_matrix(rng, n, K_true);
  std::vector<Matrix> lambda;
  for (int t = 0; t < T; ++t)
    lambda.push_back(3.0 * normal_matrix(rng, p, K_true));
  const Matrix x =
      rank_k_panel(f, lambda) + 0.1 * normal_matrix(rng, n * T, p);

  const FactorEstimate picked = extract_factors_auto(x, n, T, 5);
  const int k_manual = select_num_factors_er(x, n, T, 5);
  CHECK(picked.K == k_manual);
  CHECK(picked.K == K_true);
  const FactorEstimate manual = extract_factors_pca(x, n, T, k_manual);
  CHECK((picked.F_hat - manual.F_hat).cwiseAbs().maxCoeff() < 1e-12);
}
