#include <CLI11.hpp>
#include <cstdlib>
#include <sstream>

#include "factorlasso/cli.hpp"
#include "factorlasso/error.hpp"

namespace factorlasso {

namespace {

int threads_from_env() {
  const char* env = std::getenv("FACTOR_LASSO_THREADS");
  if (!env) return 0;
  try {
    const int v = std::stoi(env);
    return v > 0 ? v : 0;
  } catch (...) {
    return 0;
  }
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void add_schema_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--id-col", rc.schema.id, "unit identifier column name");
  cmd->add_option("--time-col", rc.schema.time, "period column name");
  cmd->add_option("--y-col", rc.schema.y, "outcome column name");
  cmd->add_option("--d-col", rc.schema.d, "treatment column name");
  cmd->add_option("--x-prefix", rc.schema.x_prefix,
                  "prefix of the covariate columns");
}

void add_method_flags(CLI::App* cmd, RunConfig& rc, bool with_alpha_level) {
  auto* k_opt = cmd->add_option(
      "--k", rc.est.K, "fixed number of factors K used in x_it = Lambda_t f_i + u_it");
  auto* k_auto = cmd->add_flag(
      "--k-auto", rc.k_auto,
      "select K by the eigenvalue ratio eig[k]/eig[k+1] (default behavior)");
  k_auto->excludes(k_opt);
  k_opt->excludes(k_auto);
  cmd->add_option("--k-max", rc.est.k_max,
                  "largest K considered by the eigenvalue-ratio rule");
  cmd->add_option(
      "--c0", rc.est.c0,
      "scaling constant in the penalty kappa = (2*c0/sqrt(nT)) * "
      "InvNormalCdf(1 - qn/(2p))");
  cmd->add_option("--qn", rc.est.q_n,
                  "tail probability qn in the penalty level (default 0.1/ln(n))");
  if (with_alpha_level)
    cmd->add_option("--alpha-level", rc.est.tau,
                    "tau in the interval alpha_hat +/- InvNormalCdf(1-tau/2)*se");
  cmd->add_option("--refinements", rc.est.refinements,
                  "penalty-loading refinement rounds (loadings_jj from "
                  "sqrt((1/nT) sum_i (sum_t u_itj r_it)^2))");
  cmd->add_option("--tol", rc.est.tol,
                  "coordinate-descent convergence tolerance on coordinate change");
  cmd->add_option("--max-sweeps", rc.est.max_sweeps,
                  "coordinate-descent sweep cap");
}

void add_io_flags(CLI::App* cmd, RunConfig& rc, bool need_input) {
  auto* in = cmd->add_option("--input,-i", rc.input, "input CSV path");
  if (need_input) in->required();
  cmd->add_option("--output,-o", rc.output, "output path (default stdout)");
  cmd->add_option("--format", rc.format, "output format: json or csv");
  cmd->add_option("--threads", rc.threads,
                  "worker threads, 0 = auto (env FACTOR_LASSO_THREADS)");
}

void validate_common(const RunConfig& rc) {
  if (rc.format != "json" && rc.format != "csv")
    throw Error(ErrorCode::usage, "--format must be json or csv");
  if (rc.format == "csv" && rc.command != "simulate")
    throw Error(ErrorCode::usage, "csv output is only available for simulate");
  if (rc.est.K && *rc.est.K < 1)
    throw Error(ErrorCode::usage, "--k must be >= 1");
  if (rc.est.k_max < 1) throw Error(ErrorCode::usage, "--k-max must be >= 1");
  if (rc.est.q_n && !(*rc.est.q_n > 0.0 && *rc.est.q_n < 1.0))
    throw Error(ErrorCode::usage, "--qn must lie in (0,1)");
  if (rc.est.c0 < 1.0) throw Error(ErrorCode::usage, "--c0 must be >= 1");
  if (!(rc.est.tau > 0.0 && rc.est.tau < 1.0))
    throw Error(ErrorCode::usage, "--alpha-level must lie in (0,1)");
  if (rc.est.refinements < 1)
    throw Error(ErrorCode::usage, "--refinements must be >= 1");
  if (rc.est.tol <= 0.0) throw Error(ErrorCode::usage, "--tol must be > 0");
  if (rc.est.max_sweeps < 1)
    throw Error(ErrorCode::usage, "--max-sweeps must be >= 1");
  if (rc.threads < 0) throw Error(ErrorCode::usage, "--threads must be >= 0");
}

}  // namespace

RunConfig parse_args(const std::vector<std::string>& args) {
  RunConfig rc;
  rc.threads = threads_from_env();
  std::string weights = "mammen";
  std::string bootstrap_reps = "off";
  std::string estimators;

  CLI::App app{"factor_lasso: treatment inference in high-dimensional panels"};
  app.require_subcommand(1);

  auto* est = app.add_subcommand(
      "estimate", "factor extraction + double-selection lasso + inference");
  add_io_flags(est, rc, true);
  add_schema_flags(est, rc);
  add_method_flags(est, rc, true);

  auto* boot = app.add_subcommand(
      "bootstrap", "estimate, then a k-step wild cluster bootstrap interval");
  add_io_flags(boot, rc, true);
  add_schema_flags(boot, rc);
  add_method_flags(boot, rc, false);
  boot->add_option("--b", rc.boot.B, "bootstrap replicates B");
  boot->add_option("--ksteps", rc.boot.k,
                   "lasso sweeps per replicate (warm-started, frozen penalty)");
  boot->add_option("--tau", rc.boot.tau,
                   "interval level: ci = alpha_hat +/- q_star/sqrt(nT), "
                   "q_star the ceil((1-tau)B)-th order statistic");
  boot->add_option("--seed", rc.boot.seed, "bootstrap weight seed");
  boot->add_option("--weights", weights, "weight scheme: mammen or rademacher");

  auto* iv = app.add_subcommand(
      "iv-estimate", "cross-sectional factor-lasso instrumental variables");
  add_io_flags(iv, rc, true);
  add_schema_flags(iv, rc);
  add_method_flags(iv, rc, true);
  iv->add_option("--z-col", rc.z_col, "instrument column name");

  auto* fac = app.add_subcommand(
      "factors", "report the Gram spectrum and the eigenvalue-ratio choice");
  add_io_flags(fac, rc, true);
  add_schema_flags(fac, rc);
  fac->add_option("--k-max", rc.k_max_spectrum,
                  "largest K considered by the eigenvalue-ratio rule");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study on synthetic panels");
  add_io_flags(sim, rc, false);
  add_method_flags(sim, rc, false);
  sim->add_option("--design", rc.design, "data design: ppfm or iv");
  sim->add_option("--n", rc.ppfm.n, "units");
  sim->add_option("--periods", rc.ppfm.T, "periods (ppfm design)");
  sim->add_option("--p", rc.ppfm.p, "covariates");
  auto* k_true_opt =
      sim->add_option("--k-true", rc.ppfm.K, "true number of factors");
  sim->add_option("--rho-u", rc.ppfm.rho_u, "covariate noise AR parameter");
  sim->add_option("--r2-x", rc.ppfm.r2_x, "average covariate R^2 target");
  sim->add_option("--r2-d", rc.ppfm.r2_d, "treatment equation R^2 target");
  sim->add_option("--r2-y", rc.ppfm.r2_y, "outcome equation R^2 target");
  sim->add_option("--share-d", rc.ppfm.share_d,
                  "factor share of the treatment structural variance");
  sim->add_option("--share-y", rc.ppfm.share_y,
                  "factor share of the outcome structural variance");
  sim->add_option("--alpha-true", rc.ppfm.alpha_true, "true treatment effect");
  sim->add_option("--r2-z", rc.iv.r2_z, "instrument equation R^2 target (iv)");
  sim->add_option("--share-z", rc.iv.share_z,
                  "factor share of the instrument structural variance (iv)");
  sim->add_option("--frac-z", rc.iv.frac_z,
                  "partial contribution of the instrument to d (iv)");
  sim->add_option("--corr", rc.iv.corr_eps_eta, "corr(eps, eta) (iv)");
  sim->add_option("--reps", rc.mc.R, "Monte Carlo replications");
  sim->add_option("--seed", rc.ppfm.seed, "design seed");
  sim->add_option("--estimators", estimators,
                  "comma-separated list, e.g. factor_lasso,ols_all_x,pure_factor");
  sim->add_option("--bootstrap", bootstrap_reps,
                  "off, or the bootstrap replicate count B per replication");
  sim->add_option("--ksteps", rc.mc.boot_ksteps, "bootstrap lasso sweeps");
  sim->add_option("--weights", weights, "bootstrap weights: mammen or rademacher");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("factor_lasso");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    rc.command = "help";
    for (auto* sub : app.get_subcommands())
      return (rc.help_text = sub->help(), rc);
    rc.help_text = app.help();
    return rc;
  } catch (const CLI::CallForAllHelp&) {
    rc.command = "help";
    rc.help_text = app.help("", CLI::AppFormatMode::All);
    return rc;
  } catch (const CLI::ParseError& e) {
    throw Error(ErrorCode::usage, e.what());
  }

  if (est->parsed()) rc.command = "estimate";
  else if (boot->parsed()) rc.command = "bootstrap";
  else if (iv->parsed()) rc.command = "iv-estimate";
  else if (fac->parsed()) rc.command = "factors";
  else rc.command = "simulate";

  validate_common(rc);

  if (rc.command == "bootstrap") {
    if (rc.boot.B < 1) throw Error(ErrorCode::usage, "--b must be >= 1");
    if (rc.boot.k < 0) throw Error(ErrorCode::usage, "--ksteps must be >= 0");
    if (!(rc.boot.tau > 0.0 && rc.boot.tau < 1.0))
      throw Error(ErrorCode::usage, "--tau must lie in (0,1)");
    rc.est.tau = rc.boot.tau;
  }
  if (weights == "mammen") {
    rc.boot.weights = WeightScheme::mammen;
  } else if (weights == "rademacher") {
    rc.boot.weights = WeightScheme::rademacher;
  } else {
    throw Error(ErrorCode::usage, "--weights must be mammen or rademacher");
  }
  rc.mc.boot_weights = rc.boot.weights;

  if (rc.command == "simulate") {
    if (rc.design != "ppfm" && rc.design != "iv")
      throw Error(ErrorCode::usage, "--design must be ppfm or iv");
    if (rc.mc.R < 1) throw Error(ErrorCode::usage, "--reps must be >= 1");
    rc.mc.estimators = split_list(estimators);
    if (bootstrap_reps == "off") {
      rc.mc.bootstrap_B = 0;
    } else {
      try {
        rc.mc.bootstrap_B = std::stoi(bootstrap_reps);
      } catch (...) {
        throw Error(ErrorCode::usage, "--bootstrap must be off or an integer");
      }
      if (rc.mc.bootstrap_B < 1)
        throw Error(ErrorCode::usage, "--bootstrap must be off or >= 1");
    }
    if (rc.mc.boot_ksteps < 0)
      throw Error(ErrorCode::usage, "--ksteps must be >= 0");
    // Shared dimension/seed flags feed both designs.
    rc.iv.n = rc.ppfm.n;
    rc.iv.p = rc.ppfm.p;
    if (k_true_opt->count() > 0) rc.iv.K = rc.ppfm.K;  // iv default stays 2
    rc.iv.rho_u = rc.ppfm.rho_u;
    rc.iv.r2_x = rc.ppfm.r2_x;
    rc.iv.r2_d = rc.ppfm.r2_d;
    rc.iv.r2_y = rc.ppfm.r2_y;
    rc.iv.share_d = rc.ppfm.share_d;
    rc.iv.share_y = rc.ppfm.share_y;
    rc.iv.alpha_true = rc.ppfm.alpha_true;
    rc.iv.seed = rc.ppfm.seed;
  }
  if (rc.command == "factors" && rc.k_max_spectrum < 1)
    throw Error(ErrorCode::usage, "--k-max must be >= 1");

  rc.est.threads = rc.threads;
  rc.boot.threads = rc.threads;
  rc.mc.threads = rc.threads;
  rc.mc.est = rc.est;
  return rc;
}

}  // namespace factorlasso
