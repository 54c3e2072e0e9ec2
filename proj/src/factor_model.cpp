#include "factorlasso/factor_model.hpp"

#include <cmath>
#include <limits>

#include "factorlasso/error.hpp"
#include "factorlasso/parallel.hpp"

namespace factorlasso {

namespace {

void check_panel_dims(const Matrix& x_tilde, int n, int T) {
  if (n < 2 || T < 1)
    throw Error(ErrorCode::dimension, "factor extraction: need n >= 2, T >= 1");
  if (x_tilde.rows() != static_cast<Eigen::Index>(n) * T || x_tilde.cols() < 1)
    throw Error(ErrorCode::dimension, "factor extraction: x must be (n*T) x p");
  if (!x_tilde.allFinite())
    throw Error(ErrorCode::invalid_data, "factor extraction: non-finite input");
}

struct GramEig {
  Matrix vectors;  // n x n, ascending eigenvalue order (Eigen convention)
  Vector values;   // nonincreasing, truncated to min(n, p*T), floored at 0
};

GramEig gram_eig(const Matrix& x_tilde, int n, int T) {
  const Matrix g = gram_matrix(x_tilde, n, T);
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::numerical, "factor extraction: eigensolver failed");
  const int p = static_cast<int>(x_tilde.cols());
  const int len = std::min<long long>(n, static_cast<long long>(p) * T);
  GramEig out;
  out.vectors = es.eigenvectors();
  out.values.resize(len);
  for (int k = 0; k < len; ++k)
    out.values[k] = std::max(es.eigenvalues()[n - 1 - k], 0.0);
  return out;
}

FactorEstimate extract_from_eig(const GramEig& eig, const Matrix& x_tilde,
                                int n, int T, int K, int threads) {
  const int p = static_cast<int>(x_tilde.cols());
  const long long max_k = std::min<long long>(n - 1, static_cast<long long>(p) * T);
  if (K < 1 || K > max_k)
    throw Error(ErrorCode::dimension,
                "factor extraction: K must lie in [1, min(n-1, p*T)]");

  FactorEstimate fe;
  fe.K = K;
  fe.eigvals = eig.values;
  fe.F_hat.resize(n, K);
  const double root_n = std::sqrt(static_cast<double>(n));
  for (int k = 0; k < K; ++k) {
    Vector v = eig.vectors.col(n - 1 - k);  // k-th largest eigenvalue
    int arg = 0;
    double best = std::fabs(v[0]);
    for (int i = 1; i < n; ++i) {
      const double a = std::fabs(v[i]);
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (v[arg] < 0.0) v = -v;
    fe.F_hat.col(k) = root_n * v;
  }

  const Matrix ftf = fe.F_hat.transpose() * fe.F_hat;  // = n * I up to rounding
  const Eigen::LDLT<Matrix> ldlt(ftf);
  fe.Lambda_hat.assign(T, Matrix());
  fe.U_hat.resize(static_cast<Eigen::Index>(n) * T, p);
  parallel_for(T, threads, [&](int t) {
    const auto block = x_tilde.middleRows(static_cast<Eigen::Index>(t) * n, n);
    const Matrix coef = ldlt.solve(fe.F_hat.transpose() * block);  // K x p
    fe.Lambda_hat[t] = coef.transpose();
    fe.U_hat.middleRows(static_cast<Eigen::Index>(t) * n, n) =
        block - fe.F_hat * coef;
  });
  return fe;
}

}  // namespace

Matrix gram_matrix(const Matrix& x_tilde, int n, int T) {
  check_panel_dims(x_tilde, n, T);
  const int p = static_cast<int>(x_tilde.cols());
  Matrix g = Matrix::Zero(n, n);
  for (int t = 0; t < T; ++t) {
    const auto block = x_tilde.middleRows(static_cast<Eigen::Index>(t) * n, n);
    g.noalias() += block * block.transpose();
  }
  g /= static_cast<double>(n) * p * T;
  return g;
}

Vector gram_eigenvalues(const Matrix& x_tilde, int n, int T) {
  return gram_eig(x_tilde, n, T).values;
}

FactorEstimate extract_factors_pca(const Matrix& x_tilde, int n, int T, int K,
                                   int threads) {
  check_panel_dims(x_tilde, n, T);
  return extract_from_eig(gram_eig(x_tilde, n, T), x_tilde, n, T, K, threads);
}

int select_k_by_eigenvalue_ratio(const Vector& eigvals, int K_max) {
  const int len = static_cast<int>(eigvals.size());
  if (K_max < 1 || K_max + 1 > len)
    throw Error(ErrorCode::dimension,
                "eigenvalue-ratio selection: need 1 <= K_max <= #eigvals - 1");
  double top = 0.0;
  for (int k = 0; k < len; ++k) top = std::max(top, eigvals[k]);
  if (top < 1e-12)
    throw Error(ErrorCode::degenerate_spectrum,
                "eigenvalue-ratio selection: all eigenvalues below 1e-12");
  // Floor the denominator so rank-deficient spectra do not produce arbitrary
  // ratios among rounding-level eigenvalues.
  const double floor_val = 1e-15 * top;
  int best_k = 1;
  double best_ratio = -1.0;
  for (int k = 1; k <= K_max; ++k) {
    const double ratio =
        eigvals[k - 1] / std::max(eigvals[k], floor_val);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_k = k;
    }
  }
  return best_k;
}

int select_num_factors_er(const Matrix& x_tilde, int n, int T, int K_max) {
  check_panel_dims(x_tilde, n, T);
  return select_k_by_eigenvalue_ratio(gram_eigenvalues(x_tilde, n, T), K_max);
}

Matrix factor_residuals(const Matrix& x_tilde, const Matrix& f_hat,
                        const std::vector<Matrix>& lambda_hat, int threads) {
  const int n = static_cast<int>(f_hat.rows());
  const int T = static_cast<int>(lambda_hat.size());
  check_panel_dims(x_tilde, n, T);
  Matrix u(x_tilde.rows(), x_tilde.cols());
  parallel_for(T, threads, [&](int t) {
    u.middleRows(static_cast<Eigen::Index>(t) * n, n) =
        x_tilde.middleRows(static_cast<Eigen::Index>(t) * n, n) -
        f_hat * lambda_hat[t].transpose();
  });
  return u;
}

FactorEstimate extract_factors_auto(const Matrix& x_tilde, int n, int T,
                                    int K_max, int threads) {
  check_panel_dims(x_tilde, n, T);
  const GramEig eig = gram_eig(x_tilde, n, T);
  const int k_cap = std::min<int>(K_max, static_cast<int>(eig.values.size()) - 1);
  const int K = select_k_by_eigenvalue_ratio(eig.values, k_cap);
  return extract_from_eig(eig, x_tilde, n, T, K, threads);
}

std::vector<Vector> project_on_factors(const Matrix& F_hat,
                                       const Matrix& panel_var) {
  if (F_hat.rows() != panel_var.rows())
    throw Error(ErrorCode::dimension, "factor projection: row count mismatch");
  const Matrix ftf = F_hat.transpose() * F_hat;
  const Eigen::LDLT<Matrix> ldlt(ftf);
  const Vector diag = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success ||
      diag.minCoeff() <= 1e-12 * std::max(diag.maxCoeff(), 1.0))
    throw Error(ErrorCode::singular, "factor projection: F'F is singular");
  std::vector<Vector> deltas(panel_var.cols());
  for (int t = 0; t < panel_var.cols(); ++t)
    deltas[t] = ldlt.solve(F_hat.transpose() * panel_var.col(t));
  return deltas;
}

FactorProjection factor_projection_residual(const Matrix& F_hat,
                                            const Matrix& panel_var) {
  FactorProjection out;
  out.deltas = project_on_factors(F_hat, panel_var);
  out.residual.resize(panel_var.rows(), panel_var.cols());
  for (int t = 0; t < panel_var.cols(); ++t)
    out.residual.col(t) = panel_var.col(t) - F_hat * out.deltas[t];
  return out;
}

}  // namespace factorlasso
