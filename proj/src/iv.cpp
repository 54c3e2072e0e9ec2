#include "factorlasso/iv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "factorlasso/error.hpp"
#include "factorlasso/stats.hpp"

namespace factorlasso {

void IVDataset::validate() const {
  if (n < 3) throw Error(ErrorCode::dimension, "iv: need at least 3 units");
  if (p < 1) throw Error(ErrorCode::dimension, "iv: need at least 1 covariate");
  if (y.size() != n || d.size() != n || z.size() != n || x.rows() != n ||
      x.cols() != p)
    throw Error(ErrorCode::dimension, "iv: shape mismatch");
  if (!y.allFinite() || !d.allFinite() || !z.allFinite() || !x.allFinite())
    throw Error(ErrorCode::invalid_data, "iv: non-finite values");
  const Vector zc = z.array() - z.mean();
  if (zc.squaredNorm() <= 0.0)
    throw Error(ErrorCode::weak_instrument, "iv: instrument has zero variance");
}

namespace {

Vector demeaned(const Vector& v) { return v.array() - v.mean(); }

// Least-squares residual of v on the columns of w.
Vector partial_out(const Matrix& w, const Vector& v) {
  if (w.cols() == 0) return v;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(w);
  return v - w * cod.solve(v);
}

struct RobustSlope {
  double coef = 0.0;
  double se = 0.0;
};

// Slope of y on x through the origin with heteroskedasticity-robust variance.
RobustSlope robust_ratio(const Vector& x, const Vector& instr, const Vector& y) {
  const double denom = instr.dot(x);
  if (denom == 0.0)
    throw Error(ErrorCode::weak_instrument,
                "iv: instrument orthogonal to regressor after partialling");
  RobustSlope out;
  out.coef = instr.dot(y) / denom;
  const Vector resid = y - out.coef * x;
  const double meat = (instr.array().square() * resid.array().square()).sum();
  out.se = std::sqrt(meat) / std::fabs(denom);
  return out;
}

}  // namespace

IVFit iv_factor_lasso(const IVDataset& data, const EstimateConfig& config) {
  data.validate();
  if (!(config.tau > 0.0 && config.tau <= 1.0))
    throw Error(ErrorCode::domain, "iv: tau must lie in (0,1]");

  const int n = data.n, p = data.p;
  Matrix x_tilde = data.x;
  x_tilde.rowwise() -= data.x.colwise().mean();
  const Vector y_t = demeaned(data.y);
  const Vector d_t = demeaned(data.d);
  const Vector z_t = demeaned(data.z);

  IVFit fit;
  fit.tau = config.tau;
  FactorEstimate factors;
  if (config.K) {
    factors = extract_factors_pca(x_tilde, n, 1, *config.K, config.threads);
  } else {
    const int k_cap = std::max(1, std::min(config.k_max, n - 2));
    factors = extract_factors_auto(x_tilde, n, 1, k_cap, config.threads);
  }
  fit.K_used = factors.K;

  auto lasso_on = [&](const Vector& var) {
    const Matrix var_panel = Eigen::Map<const Matrix>(var.data(), n, 1);
    const FactorProjection proj =
        factor_projection_residual(factors.F_hat, var_panel);
    const LassoProblem prob(factors.U_hat, proj.residual);
    return iterated_loadings_lasso(prob, proj.residual, config.refinements,
                                   config.c0, config.q_n, config.tol,
                                   config.max_sweeps, config.threads)
        .solution;
  };
  fit.lasso_y = lasso_on(y_t);
  fit.lasso_d = lasso_on(d_t);
  fit.lasso_z = lasso_on(z_t);

  IndexSet j_hat = post_double_select(fit.lasso_y, fit.lasso_d);
  {
    IndexSet with_z;
    std::set_union(j_hat.begin(), j_hat.end(), fit.lasso_z.support.begin(),
                   fit.lasso_z.support.end(), std::back_inserter(with_z));
    j_hat = std::move(with_z);
  }
  fit.J_hat = j_hat;

  Matrix controls(n, factors.K + static_cast<Eigen::Index>(j_hat.size()));
  controls.leftCols(factors.K) = factors.F_hat;
  if (!j_hat.empty())
    controls.rightCols(static_cast<Eigen::Index>(j_hat.size())) =
        columns_subset(factors.U_hat, j_hat);

  const Vector y_perp = partial_out(controls, y_t);
  const Vector d_perp = partial_out(controls, d_t);
  const Vector z_perp = partial_out(controls, z_t);
  if (z_perp.squaredNorm() <= 0.0)
    throw Error(ErrorCode::weak_instrument,
                "iv: partialled instrument has zero variance");

  const RobustSlope first = robust_ratio(z_perp, z_perp, d_perp);
  fit.pi_hat = first.coef;
  fit.se_pi = first.se;
  if (first.se <= 0.0) {
    // Noiseless first stage: F-statistic is unbounded.
    fit.first_stage_F = std::numeric_limits<double>::infinity();
  } else {
    fit.first_stage_F = (first.coef / first.se) * (first.coef / first.se);
  }

  const RobustSlope second = robust_ratio(d_perp, z_perp, y_perp);
  fit.alpha_hat = second.coef;
  fit.se_alpha = second.se;
  const double zeta =
      (config.tau == 1.0) ? 0.0 : normal_quantile(1.0 - config.tau / 2.0);
  fit.ci = Interval{fit.alpha_hat - zeta * fit.se_alpha,
                    fit.alpha_hat + zeta * fit.se_alpha};
  return fit;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  return out;
}

double parse_field(const std::string& field, int row, const std::string& col) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorCode::parse, "row " + std::to_string(row) + ", column '" +
                                      col + "': cannot parse '" + field + "'");
  return value;
}

}  // namespace

IVDataset load_iv_csv(const std::string& path, const CsvSchema& schema,
                      const std::string& z_col) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::parse, "empty file '" + path + "'");
  const auto header = split_line(line);

  int y_col = -1, d_col = -1, z_idx = -1;
  std::vector<int> x_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& name = header[c];
    if (name == schema.y) y_col = c;
    else if (name == schema.d) d_col = c;
    else if (name == z_col) z_idx = c;
    else if (name == schema.id || name == schema.time) continue;
    else if (name.rfind(schema.x_prefix, 0) == 0) x_cols.push_back(c);
  }
  if (y_col < 0 || d_col < 0 || z_idx < 0)
    throw Error(ErrorCode::parse, "header must contain '" + schema.y + "', '" +
                                      schema.d + "', '" + z_col + "'");
  if (x_cols.empty())
    throw Error(ErrorCode::parse,
                "header has no covariate columns with prefix '" +
                    schema.x_prefix + "'");

  std::vector<double> ys, ds, zs;
  std::vector<std::vector<double>> xs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::parse,
                  "row " + std::to_string(line_no) + ": wrong field count");
    ys.push_back(parse_field(fields[y_col], line_no, schema.y));
    ds.push_back(parse_field(fields[d_col], line_no, schema.d));
    zs.push_back(parse_field(fields[z_idx], line_no, z_col));
    std::vector<double> row(x_cols.size());
    for (std::size_t j = 0; j < x_cols.size(); ++j)
      row[j] = parse_field(fields[x_cols[j]], line_no, header[x_cols[j]]);
    xs.push_back(std::move(row));
  }

  IVDataset data;
  data.n = static_cast<int>(ys.size());
  data.p = static_cast<int>(x_cols.size());
  data.y = Eigen::Map<Vector>(ys.data(), data.n);
  data.d = Eigen::Map<Vector>(ds.data(), data.n);
  data.z = Eigen::Map<Vector>(zs.data(), data.n);
  data.x.resize(data.n, data.p);
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.p; ++j) data.x(i, j) = xs[i][j];
  data.validate();
  return data;
}

}  // namespace factorlasso
