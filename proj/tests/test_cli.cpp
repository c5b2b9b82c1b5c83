#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dhglm/util.hpp"

namespace fs = std::filesystem;

namespace {

// tests run from the build directory, next to the binary
const char* kCli = "./dhglm_cli";

int run_cli(const std::string& args) {
  std::string cmd = std::string(kCli) + " " + args + " > cli_stdout.txt 2> cli_stderr.txt";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::string line;
  std::getline(f, line);
  return line;
}

int count_lines(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  int n = 0;
  std::string line;
  while (std::getline(f, line)) ++n;
  return n;
}

void write_summary_fixture(const fs::path& p, double gamma1_mean) {
  std::ofstream f(p);
  f << "parameter,true_value,mean,sd,q025,q975\n";
  f << "beta0,,0.9893,0.0764,0.8396,1.1391\n";
  f << "beta1,0.25,0.2505,0.0033,0.2440,0.2570\n";
  f << "gamma0,,-0.0862,0.0699,-0.2232,0.0508\n";
  f << "gamma1,5,4.8568,0.2942,4.2801,5.4334\n";
  (void)gamma1_mean;
}

void write_summary_fixture_b(const fs::path& p, double gamma1_mean) {
  std::ofstream f(p);
  f << "parameter,true_value,mean,sd,q025,q975\n";
  f << "beta0,,0.9875,0.0760,0.8386,1.1365\n";
  f << "beta1,0.25,0.2506,0.0034,0.2439,0.2573\n";
  f << "gamma0,,-0.0879,0.0701,-0.2253,0.0495\n";
  f << "gamma1,5," << gamma1_mean << ",0.2951,4.2810,5.4380\n";
}

}  // namespace

TEST_CASE("list-presets names every experiment") {
  REQUIRE(fs::exists(kCli));
  CHECK(run_cli("list-presets") == 0);
  std::string out = slurp("cli_stdout.txt");
  for (const char* id : {"poisson-sim", "negbin-sim", "gaussian-sim-scenario-3", "spatial-poisson",
                         "sleep-rcoef", "sleep-fixed"})
    CHECK(out.find(id) != std::string::npos);
}

TEST_CASE("compare passes two close summary tables and flags a perturbed one") {
  write_summary_fixture("cmp_a.csv", 0.0);
  write_summary_fixture_b("cmp_b.csv", 4.8594);  // max |d mean| = 0.0026
  CHECK(run_cli("compare --a cmp_a.csv --b cmp_b.csv --tolerance 0.05 --out cmp_out") == 0);
  std::string cmp = slurp("cmp_out/compare.csv");
  CHECK(first_line("cmp_out/compare.csv") == "parameter,mean_a,mean_b,abs_diff,sd_ratio,pass");
  CHECK(cmp.find(",no\n") == std::string::npos);
  CHECK(count_lines("cmp_out/compare.csv") == 5);

  write_summary_fixture_b("cmp_b.csv", 4.60);  // gamma1 now 0.257 away
  CHECK(run_cli("compare --a cmp_a.csv --b cmp_b.csv --tolerance 0.05 --out cmp_out") == 1);
  cmp = slurp("cmp_out/compare.csv");
  CHECK(cmp.find("gamma1") != std::string::npos);
  CHECK(cmp.find(",no\n") != std::string::npos);
  CHECK(cmp.find("beta1") != std::string::npos);

  // disjoint tables are an error, not a pass
  {
    std::ofstream f("cmp_c.csv");
    f << "parameter,true_value,mean,sd,q025,q975\n";
    f << "other,,1.0,0.1,0.8,1.2\n";
  }
  CHECK(run_cli("compare --a cmp_a.csv --b cmp_c.csv --out cmp_out") == 2);
}

TEST_CASE("simulate writes the dataset and any adjacency structure") {
  CHECK(run_cli("simulate --preset sleep-rcoef --seed 4 --out sim_sleep") == 0);
  CHECK(first_line("sim_sleep/data.csv") == "y,day,group");
  CHECK(count_lines("sim_sleep/data.csv") == 181);  // 18 subjects x 10 days + header

  CHECK(run_cli("simulate --preset spatial-poisson --scale desk --seed 4 --out sim_sp") == 0);
  CHECK(fs::exists("sim_sp/adjacency.csv"));
  CHECK(count_lines("sim_sp/adjacency.csv") == 36);
  std::string header = first_line("sim_sp/data.csv");
  CHECK(header.find("lag_rates") != std::string::npos);
  CHECK(header.find("offset") != std::string::npos);
}

TEST_CASE("fit emits summaries, marginals, diagnostics, and metadata") {
  {
    std::ofstream f("small.json");
    f << R"({"amis": {"n_initial": 600, "n_stages": 3, "n_per_stage": 200},
             "mcmc": {"burn_in": 200, "iterations": 2000, "thin": 10}})";
  }
  REQUIRE(run_cli("fit --preset negbin-sim --scale desk --seed 6 --out fit_nb "
                  "--config small.json --method both") == 0);

  CHECK(first_line("fit_nb/summary_amis.csv") == "parameter,true_value,mean,sd,q025,q975");
  CHECK(first_line("fit_nb/summary_mcmc.csv") == "parameter,true_value,mean,sd,q025,q975");
  CHECK(count_lines("fit_nb/summary_amis.csv") == 5);  // gamma0, gamma1, beta0, beta1
  CHECK(first_line("fit_nb/stage_ess.csv") ==
        "stage,samples_in_stage,total_samples,ess,log_target_at_mean");
  CHECK(count_lines("fit_nb/stage_ess.csv") == 5);
  CHECK(count_lines("fit_nb/ensemble.csv") == 1201);  // 600 + 3*200 samples + header
  CHECK(fs::exists("fit_nb/marginal_beta0.csv"));
  CHECK(first_line("fit_nb/marginal_beta0.csv") == "x,density");
  CHECK(fs::exists("fit_nb/diagnostic_0.csv"));
  CHECK(fs::exists("fit_nb/diagnostic_1.csv"));
  CHECK(fs::exists("fit_nb/compare.csv"));
  CHECK(fs::exists("fit_nb/chains.csv"));

  auto meta = nlohmann::json::parse(slurp("fit_nb/run.json"));
  CHECK(meta["preset"] == "negbin-sim");
  CHECK(meta["scale"] == "desk");
  CHECK(meta["amis"]["total_samples"] == 1200);
  CHECK(meta["amis"]["ess"].get<double>() > 0.0);
  CHECK(meta["mcmc"]["kept_draws"] == 200);
}

TEST_CASE("seeded runs write byte-identical tables") {
  {
    std::ofstream f("tiny.json");
    f << R"({"amis": {"n_initial": 60, "n_stages": 1, "n_per_stage": 30}})";
  }
  REQUIRE(run_cli("fit --preset poisson-sim --scale desk --seed 8 --out fit_a "
                  "--config tiny.json --method amis") == 0);
  REQUIRE(run_cli("fit --preset poisson-sim --scale desk --seed 8 --out fit_b "
                  "--config tiny.json --method amis") == 0);
  CHECK(slurp("fit_a/summary_amis.csv") == slurp("fit_b/summary_amis.csv"));
  CHECK(slurp("fit_a/ensemble.csv") == slurp("fit_b/ensemble.csv"));
}

TEST_CASE("unknown presets and scales fail cleanly") {
  CHECK(run_cli("fit --preset no-such-model --out bad_out") == 2);
  std::string err = slurp("cli_stderr.txt");
  CHECK(err.find("unknown preset") != std::string::npos);
  CHECK(run_cli("fit --preset poisson-sim --scale huge --out bad_out") == 2);
}
