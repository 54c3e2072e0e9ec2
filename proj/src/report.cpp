#include "factorlasso/report.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "factorlasso/error.hpp"
#include "factorlasso/factor_model.hpp"

namespace factorlasso {

namespace {

Json interval_json(const Interval& ci) { return Json::array({ci.lo, ci.hi}); }

// NaN is not representable in JSON; emit null.
Json num(double v) {
  if (std::isnan(v) || std::isinf(v)) return nullptr;
  return v;
}

Json stats_row(const EstimatorStats& st, bool with_boot) {
  Json row;
  row["estimator"] = st.name;
  row["reps"] = st.reps;
  row["n_failed"] = st.n_failed;
  row["rmse"] = num(st.rmse);
  row["rmse_truncated"] = num(st.rmse_truncated);
  row["bias"] = num(st.bias);
  row["size_5pct"] = num(st.size_5pct);
  row["coverage_95"] = num(st.coverage_95);
  row["mean_ci_length"] = num(st.mean_ci_length);
  row["mean_K"] = num(st.mean_K);
  row["mean_support_size"] = num(st.mean_support_size);
  if (with_boot) {
    row["n_boot_failed"] = st.n_boot_failed;
    row["boot_coverage_95"] = num(st.boot_coverage_95);
    row["boot_mean_ci_length"] = num(st.boot_mean_ci_length);
  }
  return row;
}

}  // namespace

Json config_json(const RunConfig& rc) {
  Json cfg;
  cfg["command"] = rc.command;
  if (!rc.input.empty()) cfg["input"] = rc.input;
  cfg["format"] = rc.format;
  cfg["threads"] = rc.threads;
  if (rc.command == "simulate") {
    cfg["design"] = rc.design;
    Json d;
    if (rc.design == "ppfm") {
      d["n"] = rc.ppfm.n;
      d["periods"] = rc.ppfm.T;
      d["p"] = rc.ppfm.p;
      d["k_true"] = rc.ppfm.K;
      d["rho_u"] = rc.ppfm.rho_u;
      d["r2_x"] = rc.ppfm.r2_x;
      d["r2_d"] = rc.ppfm.r2_d;
      d["r2_y"] = rc.ppfm.r2_y;
      d["share_d"] = rc.ppfm.share_d;
      d["share_y"] = rc.ppfm.share_y;
      d["alpha_true"] = rc.ppfm.alpha_true;
      d["seed"] = rc.ppfm.seed;
    } else {
      d["n"] = rc.iv.n;
      d["p"] = rc.iv.p;
      d["k_true"] = rc.iv.K;
      d["rho_u"] = rc.iv.rho_u;
      d["corr_eps_eta"] = rc.iv.corr_eps_eta;
      d["r2_x"] = rc.iv.r2_x;
      d["r2_z"] = rc.iv.r2_z;
      d["share_z"] = rc.iv.share_z;
      d["r2_d"] = rc.iv.r2_d;
      d["share_d"] = rc.iv.share_d;
      d["r2_y"] = rc.iv.r2_y;
      d["share_y"] = rc.iv.share_y;
      d["frac_z"] = rc.iv.frac_z;
      d["alpha_true"] = rc.iv.alpha_true;
      d["seed"] = rc.iv.seed;
    }
    cfg["design_params"] = d;
    cfg["reps"] = rc.mc.R;
    cfg["bootstrap"] = rc.mc.bootstrap_B;
    cfg["ksteps"] = rc.mc.boot_ksteps;
    cfg["weights"] =
        rc.mc.boot_weights == WeightScheme::mammen ? "mammen" : "rademacher";
  } else {
    Json s;
    s["id"] = rc.schema.id;
    s["time"] = rc.schema.time;
    s["y"] = rc.schema.y;
    s["d"] = rc.schema.d;
    s["x_prefix"] = rc.schema.x_prefix;
    if (rc.command == "iv-estimate") s["z"] = rc.z_col;
    cfg["schema"] = s;
  }
  if (rc.command == "factors") {
    cfg["k_max"] = rc.k_max_spectrum;
    return cfg;
  }
  {
    Json m;
    if (rc.est.K) m["k"] = *rc.est.K;
    else m["k"] = "auto";
    m["k_max"] = rc.est.k_max;
    m["c0"] = rc.est.c0;
    if (rc.est.q_n) m["qn"] = *rc.est.q_n;
    else m["qn"] = "default";
    m["alpha_level"] = rc.est.tau;
    m["refinements"] = rc.est.refinements;
    m["tol"] = rc.est.tol;
    m["max_sweeps"] = rc.est.max_sweeps;
    cfg["method"] = m;
  }
  if (rc.command == "bootstrap") {
    Json b;
    b["b"] = rc.boot.B;
    b["ksteps"] = rc.boot.k;
    b["tau"] = rc.boot.tau;
    b["seed"] = rc.boot.seed;
    b["weights"] =
        rc.boot.weights == WeightScheme::mammen ? "mammen" : "rademacher";
    cfg["bootstrap"] = b;
  }
  return cfg;
}

namespace {

Json fit_body(const FactorLassoFit& fit) {
  Json out;
  out["alpha_hat"] = fit.alpha_hat;
  out["se"] = fit.se;
  out["ci"] = interval_json(fit.ci);
  out["K"] = fit.K_used;
  out["kappa"] = fit.penalty_y.kappa;
  out["J_hat"] = fit.J_hat;
  Json diag;
  diag["n"] = fit.n;
  diag["periods"] = fit.T;
  diag["p"] = fit.p;
  diag["qn"] = fit.penalty_y.q_n;
  diag["support_y"] = fit.lasso_y.support;
  diag["support_d"] = fit.lasso_d.support;
  diag["sweeps_y"] = fit.lasso_y.sweeps;
  diag["sweeps_d"] = fit.lasso_d.sweeps;
  diag["objective_y"] = fit.lasso_y.objective;
  diag["objective_d"] = fit.lasso_d.objective;
  diag["sigma_eta_eps"] = fit.sigma_eta_eps;
  diag["sigma_eta_sq"] = fit.sigma_eta_sq;
  const int top = std::min<int>(10, static_cast<int>(fit.factors.eigvals.size()));
  diag["eigvals_top"] =
      std::vector<double>(fit.factors.eigvals.data(),
                          fit.factors.eigvals.data() + top);
  out["diagnostics"] = diag;
  return out;
}

}  // namespace

Json fit_json(const RunConfig& rc, const FactorLassoFit& fit) {
  Json out;
  out["spec_version"] = kSpecVersion;
  out["command"] = rc.command;
  out["config"] = config_json(rc);
  out.update(fit_body(fit));
  return out;
}

Json bootstrap_json(const RunConfig& rc, const FactorLassoFit& fit,
                    const BootstrapResult& boot) {
  Json out = fit_json(rc, fit);
  Json b;
  b["q_star"] = boot.q_star;
  b["ci"] = interval_json(boot.ci);
  b["n_degenerate"] = boot.n_degenerate;
  const int B = static_cast<int>(boot.draws.size());
  b["b"] = B;
  const double mean = boot.draws.mean();
  b["draws_mean"] = mean;
  if (B > 1) {
    const double sd = std::sqrt((boot.draws.array() - mean).square().sum() / (B - 1));
    b["draws_sd"] = sd;
  }
  b["draws_min"] = boot.draws.minCoeff();
  b["draws_max"] = boot.draws.maxCoeff();
  out["bootstrap"] = b;
  return out;
}

Json iv_json(const RunConfig& rc, const IVFit& fit) {
  Json out;
  out["spec_version"] = kSpecVersion;
  out["command"] = rc.command;
  out["config"] = config_json(rc);
  out["alpha_hat"] = fit.alpha_hat;
  out["se_alpha"] = fit.se_alpha;
  out["ci"] = interval_json(fit.ci);
  out["pi_hat"] = fit.pi_hat;
  out["se_pi"] = fit.se_pi;
  out["first_stage_F"] = num(fit.first_stage_F);
  out["K"] = fit.K_used;
  out["J_hat"] = fit.J_hat;
  Json diag;
  diag["support_y"] = fit.lasso_y.support;
  diag["support_d"] = fit.lasso_d.support;
  diag["support_z"] = fit.lasso_z.support;
  out["diagnostics"] = diag;
  return out;
}

Json factors_json(const RunConfig& rc, const Vector& eigvals, int k_max_used,
                  int k_selected) {
  Json out;
  out["spec_version"] = kSpecVersion;
  out["command"] = rc.command;
  out["config"] = config_json(rc);
  out["eigvals"] = std::vector<double>(eigvals.data(), eigvals.data() + eigvals.size());
  std::vector<double> ratios;
  const double floor_val = 1e-15 * eigvals.maxCoeff();
  for (int k = 1; k <= k_max_used; ++k)
    ratios.push_back(eigvals[k - 1] / std::max(eigvals[k], floor_val));
  out["ratios"] = ratios;
  out["k_max"] = k_max_used;
  out["k_selected"] = k_selected;
  return out;
}

Json simulate_json(const RunConfig& rc, const MonteCarloReport& report) {
  Json out;
  out["spec_version"] = kSpecVersion;
  out["command"] = rc.command;
  out["config"] = config_json(rc);
  out["design"] = report.design_name;
  out["reps"] = report.R;
  out["trunc_cap"] = report.trunc_cap;
  Json rows = Json::array();
  for (const auto& st : report.estimators)
    rows.push_back(stats_row(st, report.bootstrap_B > 0 &&
                                     st.name == "factor_lasso"));
  out["results"] = rows;
  return out;
}

std::string simulate_csv(const MonteCarloReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "estimator,reps,n_failed,rmse,rmse_truncated,bias,size_5pct,"
        "coverage_95,mean_ci_length,mean_K,mean_support_size";
  const bool with_boot = report.bootstrap_B > 0;
  if (with_boot) os << ",n_boot_failed,boot_coverage_95,boot_mean_ci_length";
  os << "\n";
  for (const auto& st : report.estimators) {
    os << st.name << "," << st.reps << "," << st.n_failed << "," << st.rmse
       << "," << st.rmse_truncated << "," << st.bias << "," << st.size_5pct
       << "," << st.coverage_95 << "," << st.mean_ci_length << "," << st.mean_K
       << "," << st.mean_support_size;
    if (with_boot) {
      if (st.name == "factor_lasso")
        os << "," << st.n_boot_failed << "," << st.boot_coverage_95 << ","
           << st.boot_mean_ci_length;
      else
        os << ",,,";
    }
    os << "\n";
  }
  return os.str();
}

void emit_report(const std::string& text, const std::string& path) {
  std::string body = text;
  if (body.empty() || body.back() != '\n') body += '\n';
  if (path.empty()) {
    std::cout << body;
    std::cout.flush();
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  out << body;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

int run_cli(int argc, char** argv) {
  RunConfig rc;
  try {
    rc = parse_args(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  if (rc.command == "help") {
    std::cout << rc.help_text;
    return 0;
  }

  try {
    if (rc.command == "estimate") {
      const PanelDataset data = load_csv(rc.input, rc.schema);
      const FactorLassoFit fit = factor_lasso_estimate(data, rc.est);
      emit_report(fit_json(rc, fit).dump(2), rc.output);
    } else if (rc.command == "bootstrap") {
      const PanelDataset data = load_csv(rc.input, rc.schema);
      const FactorLassoFit fit = factor_lasso_estimate(data, rc.est);
      const BootstrapResult boot = run_bootstrap(fit, fit.factors, rc.boot);
      emit_report(bootstrap_json(rc, fit, boot).dump(2), rc.output);
    } else if (rc.command == "iv-estimate") {
      const IVDataset data = load_iv_csv(rc.input, rc.schema, rc.z_col);
      const IVFit fit = iv_factor_lasso(data, rc.est);
      emit_report(iv_json(rc, fit).dump(2), rc.output);
    } else if (rc.command == "factors") {
      const PanelDataset data = load_csv(rc.input, rc.schema);
      const DemeanedPanel dm = demean_panel(data);
      const Vector eigvals = gram_eigenvalues(dm.x_tilde, data.n, data.T);
      const int k_cap =
          std::max(1, std::min({rc.k_max_spectrum, data.n - 2,
                                static_cast<int>(eigvals.size()) - 1}));
      const int k_sel = select_k_by_eigenvalue_ratio(eigvals, k_cap);
      emit_report(factors_json(rc, eigvals, k_cap, k_sel).dump(2), rc.output);
    } else {
      MonteCarloReport report;
      if (rc.design == "ppfm")
        report = run_monte_carlo(rc.ppfm, rc.mc);
      else
        report = run_monte_carlo(rc.iv, rc.mc);
      if (rc.format == "csv")
        emit_report(simulate_csv(report), rc.output);
      else
        emit_report(simulate_json(rc, report).dump(2), rc.output);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

}  // namespace factorlasso
