#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "factorlasso/cli.hpp"
#include "factorlasso/error.hpp"
#include "factorlasso/rng.hpp"
#include "factorlasso/simulation.hpp"

using namespace factorlasso;

namespace {

const char* cli_path() { return FACTOR_LASSO_CLI_PATH; }

int run_command(const std::string& args, const std::string& stdout_file) {
  const std::string cmd =
      std::string(cli_path()) + " " + args + " > " + stdout_file + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small deterministic panel fixture on disk.
std::string write_fixture() {
  PpfmDesign design;
  design.n = 25;
  design.T = 4;
  design.p = 12;
  design.seed = 2024;
  const PpfmInstance inst = make_ppfm_instance(design);
  Rng rng(derive_seed(design.seed, 1, 0));
  const PanelDataset data = gen_ppfm(inst, rng);

  const std::string path = "cli_fixture.csv";
  std::ofstream out(path);
  out.precision(17);
  out << "id,time,y,d";
  for (int j = 1; j <= data.p; ++j) out << ",x" << j;
  out << "\n";
  for (int i = 0; i < data.n; ++i)
    for (int t = 0; t < data.T; ++t) {
      out << i << "," << t << "," << data.y(i, t) << "," << data.d(i, t);
      for (int j = 0; j < data.p; ++j) out << "," << data.xv(i, t, j);
      out << "\n";
    }
  return path;
}

}  // namespace

TEST_CASE("parse_args basic forms") {
  const RunConfig rc =
      parse_args({"estimate", "--input", "panel.csv", "--k", "3"});
  CHECK(rc.command == "estimate");
  CHECK(rc.input == "panel.csv");
  REQUIRE(rc.est.K.has_value());
  CHECK(*rc.est.K == 3);
  CHECK_FALSE(rc.k_auto);

  CHECK_THROWS_AS(parse_args({"estimate", "--input", "a.csv", "--qn", "3.0"}),
                  Error);
  CHECK_THROWS_AS(parse_args({}), Error);
  CHECK_THROWS_AS(parse_args({"estimate", "--input", "a.csv", "--k", "2",
                              "--k-auto"}),
                  Error);
  CHECK_THROWS_AS(parse_args({"estimate"}), Error);  // --input required
  CHECK_THROWS_AS(parse_args({"estimate", "--input", "a.csv", "--format",
                              "csv"}),
                  Error);  // csv reports only for simulate
  CHECK_THROWS_AS(parse_args({"frobnicate"}), Error);
  CHECK_THROWS_AS(parse_args({"estimate", "--input", "a.csv", "--bogus"}),
                  Error);

  const RunConfig help = parse_args({"--help"});
  CHECK(help.command == "help");
  CHECK(help.help_text.find("factor") != std::string::npos);
}

TEST_CASE("parse_args bootstrap and simulate flags") {
  const RunConfig boot = parse_args({"bootstrap", "--input", "p.csv", "--b",
                                     "99", "--ksteps", "7", "--tau", "0.1",
                                     "--seed", "5", "--weights", "rademacher"});
  CHECK(boot.boot.B == 99);
  CHECK(boot.boot.k == 7);
  CHECK(boot.boot.tau == 0.1);
  CHECK(boot.boot.seed == 5);
  CHECK(boot.boot.weights == WeightScheme::rademacher);

  const RunConfig sim = parse_args(
      {"simulate", "--design", "iv", "--n", "64", "--p", "32", "--reps", "9",
       "--seed", "4", "--estimators", "factor_lasso,oracle_iv", "--format",
       "csv"});
  CHECK(sim.design == "iv");
  CHECK(sim.iv.n == 64);
  CHECK(sim.iv.p == 32);
  CHECK(sim.mc.R == 9);
  CHECK(sim.format == "csv");
  REQUIRE(sim.mc.estimators.size() == 2);
  CHECK(sim.mc.estimators[0] == "factor_lasso");
  CHECK(sim.mc.estimators[1] == "oracle_iv");

  const RunConfig off =
      parse_args({"simulate", "--design", "ppfm", "--bootstrap", "off"});
  CHECK(off.mc.bootstrap_B == 0);
  const RunConfig on =
      parse_args({"simulate", "--design", "ppfm", "--bootstrap", "40"});
  CHECK(on.mc.bootstrap_B == 40);

  // IV keeps its own default factor count unless --k-true is given.
  const RunConfig iv_default = parse_args({"simulate", "--design", "iv"});
  CHECK(iv_default.iv.K == 2);
  const RunConfig iv_k = parse_args(
      {"simulate", "--design", "iv", "--k-true", "4"});
  CHECK(iv_k.iv.K == 4);

  // Threads propagate to the nested configs.
  const RunConfig thr =
      parse_args({"simulate", "--design", "ppfm", "--threads", "6"});
  CHECK(thr.mc.threads == 6);
  const RunConfig est_thr =
      parse_args({"bootstrap", "--input", "x.csv", "--threads", "2"});
  CHECK(est_thr.boot.threads == 2);
}

TEST_CASE("threads env fallback") {
  setenv("FACTOR_LASSO_THREADS", "3", 1);
  const RunConfig rc = parse_args({"estimate", "--input", "a.csv"});
  CHECK(rc.threads == 3);
  const RunConfig explicit_flag =
      parse_args({"estimate", "--input", "a.csv", "--threads", "5"});
  CHECK(explicit_flag.threads == 5);
  unsetenv("FACTOR_LASSO_THREADS");
  const RunConfig unset = parse_args({"estimate", "--input", "a.csv"});
  CHECK(unset.threads == 0);
}

TEST_CASE("cli subprocess exit codes") {
  CHECK(run_command("", "cli_out_none.txt") == 2);
  CHECK(run_command("--help", "cli_out_help.txt") == 0);
  CHECK(slurp("cli_out_help.txt").find("SUBCOMMAND") != std::string::npos);
  CHECK(run_command("estimate --input no_such_file.csv", "cli_out_io.txt") ==
        3);
  std::remove("cli_out_none.txt");
  std::remove("cli_out_help.txt");
  std::remove("cli_out_io.txt");
}

TEST_CASE("cli estimate: deterministic output and numeric error code") {
  const std::string fixture = write_fixture();

  CHECK(run_command("estimate --input " + fixture + " --k 3", "cli_out1.json") ==
        0);
  CHECK(run_command("estimate --input " + fixture + " --k 3", "cli_out2.json") ==
        0);
  const std::string a = slurp("cli_out1.json");
  CHECK(a == slurp("cli_out2.json"));
  CHECK(a.find("\"alpha_hat\"") != std::string::npos);
  CHECK(a.find("\"spec_version\"") != std::string::npos);
  CHECK(a.find("\"kappa\"") != std::string::npos);

  // K beyond n-1 is a numerical-domain failure: exit 4.
  CHECK(run_command("estimate --input " + fixture + " --k 60",
                    "cli_out_bad.json") == 4);

  std::remove("cli_out1.json");
  std::remove("cli_out2.json");
  std::remove("cli_out_bad.json");
  std::remove(fixture.c_str());
}

TEST_CASE("cli round trip: echoed config reproduces the run") {
  const std::string fixture = write_fixture();
  const std::string flags =
      " --k 2 --c0 1.4 --qn 0.03 --alpha-level 0.1 --refinements 1";

  CHECK(run_command("estimate --input " + fixture + flags, "cli_rt1.json") == 0);
  // Re-issue the command from the echoed configuration values.
  const std::string first = slurp("cli_rt1.json");
  auto grab = [&](const std::string& key) {
    const auto pos = first.find("\"" + key + "\": ");
    REQUIRE(pos != std::string::npos);
    const auto start = pos + key.size() + 4;
    auto end = first.find_first_of(",\n", start);
    std::string value = first.substr(start, end - start);
    if (!value.empty() && value.front() == '"') value = value.substr(1, value.size() - 2);
    return value;
  };
  const std::string rebuilt = "estimate --input " + grab("input") + " --k " +
                              grab("k") + " --c0 " + grab("c0") + " --qn " +
                              grab("qn") + " --alpha-level " +
                              grab("alpha_level") + " --refinements " +
                              grab("refinements");
  CHECK(run_command(rebuilt, "cli_rt2.json") == 0);
  CHECK(first == slurp("cli_rt2.json"));

  std::remove("cli_rt1.json");
  std::remove("cli_rt2.json");
  std::remove(fixture.c_str());
}

TEST_CASE("cli simulate csv shape") {
  CHECK(run_command(
            "simulate --design ppfm --n 30 --periods 3 --p 12 --reps 2 "
            "--seed 6 --estimators factor_lasso,ols_all_x --format csv",
            "cli_sim.csv") == 0);
  const std::string csv = slurp("cli_sim.csv");
  CHECK(csv.find("estimator,reps,n_failed,rmse") == 0);
  CHECK(csv.find("factor_lasso,") != std::string::npos);
  CHECK(csv.find("ols_all_x,") != std::string::npos);
  std::remove("cli_sim.csv");
}
