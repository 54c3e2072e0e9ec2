#include "factorlasso/reference.hpp"

#include <cmath>

namespace factorlasso {
namespace serial_ref {

Vector penalty_loadings_triple_sum(const Matrix& u_hat, const Matrix& resid,
                                   int n, int T) {
  const int p = static_cast<int>(u_hat.cols());
  const double inv_nT = 1.0 / (static_cast<double>(n) * T);
  Vector loadings(p);
  for (int j = 0; j < p; ++j) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T; ++t)
        for (int s = 0; s < T; ++s)
          acc += u_hat(static_cast<Eigen::Index>(t) * n + i, j) *
                 u_hat(static_cast<Eigen::Index>(s) * n + i, j) *
                 resid(i, t) * resid(i, s);
    loadings[j] = std::sqrt(inv_nT * acc);
  }
  return loadings;
}

Matrix gram_matrix_naive(const Matrix& x_tilde, int n, int T) {
  const int p = static_cast<int>(x_tilde.cols());
  Matrix g = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < p; ++j)
          acc += x_tilde(static_cast<Eigen::Index>(t) * n + i, j) *
                 x_tilde(static_cast<Eigen::Index>(t) * n + k, j);
      g(i, k) = acc / (static_cast<double>(n) * p * T);
    }
  return g;
}

Matrix factor_residuals_naive(const Matrix& x_tilde, const Matrix& f_hat,
                              const std::vector<Matrix>& lambda_hat) {
  const int n = static_cast<int>(f_hat.rows());
  const int K = static_cast<int>(f_hat.cols());
  const int T = static_cast<int>(lambda_hat.size());
  const int p = static_cast<int>(x_tilde.cols());
  Matrix u(x_tilde.rows(), p);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) {
        double fit = 0.0;
        for (int k = 0; k < K; ++k) fit += lambda_hat[t](j, k) * f_hat(i, k);
        const Eigen::Index row = static_cast<Eigen::Index>(t) * n + i;
        u(row, j) = x_tilde(row, j) - fit;
      }
  return u;
}

std::pair<double, double> clustered_variance_loops(const Matrix& eta_hat,
                                                   const Matrix& eps_hat) {
  const int n = static_cast<int>(eta_hat.rows());
  const int T = static_cast<int>(eta_hat.cols());
  double score_sq = 0.0, eta_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double unit_score = 0.0;
    for (int t = 0; t < T; ++t) {
      unit_score += eta_hat(i, t) * eps_hat(i, t);
      eta_sq += eta_hat(i, t) * eta_hat(i, t);
    }
    score_sq += unit_score * unit_score;
  }
  const double inv_nT = 1.0 / (static_cast<double>(n) * T);
  return {inv_nT * score_sq, inv_nT * eta_sq};
}

}  // namespace serial_ref
}  // namespace factorlasso
