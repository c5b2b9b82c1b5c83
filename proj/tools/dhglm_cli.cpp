// Command-line driver: simulate datasets, fit them with the importance
// sampler and/or the MCMC reference, compare the two, and emit tables,
// marginal grids, and weight diagnostics. See README.md for file formats.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>

#include "dhglm/presets.hpp"

using json = nlohmann::json;
using namespace dhglm;
namespace fs = std::filesystem;

namespace {

struct ParamRow {
  std::string name;
  bool has_true = false;
  double true_value = 0.0;
  double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw dhglm_error("cannot write '" + p.string() + "'");
  f << std::setprecision(17);
  return f;
}

double grid_quantile(const MarginalGrid& g, double p) {
  VectorXd w = trapezoid_weights(g.x);
  double total = (w.array() * g.density.array()).sum();
  double target = p * total, cum = 0.0;
  for (Eigen::Index i = 0; i < g.x.size(); ++i) {
    cum += w[i] * g.density[i];
    if (cum >= target) return g.x[i];
  }
  return g.x[g.x.size() - 1];
}

void write_summary(const fs::path& dir, const std::string& stem, const std::vector<ParamRow>& rows) {
  auto csv = open_out(dir / (stem + ".csv"));
  csv << "parameter,true_value,mean,sd,q025,q975\n";
  for (const auto& r : rows) {
    csv << r.name << ",";
    if (r.has_true) csv << r.true_value;
    csv << "," << r.mean << "," << r.sd << "," << r.lo << "," << r.hi << "\n";
  }
  auto txt = open_out(dir / (stem + ".txt"));
  txt << std::setprecision(4) << std::fixed;
  txt << std::setw(14) << "parameter" << std::setw(12) << "true" << std::setw(12) << "mean"
      << std::setw(12) << "sd" << std::setw(22) << "95% interval" << "\n";
  for (const auto& r : rows) {
    txt << std::setw(14) << r.name;
    if (r.has_true)
      txt << std::setw(12) << r.true_value;
    else
      txt << std::setw(12) << "-";
    std::ostringstream ci;
    ci << std::setprecision(4) << std::fixed << "(" << r.lo << ", " << r.hi << ")";
    txt << std::setw(12) << r.mean << std::setw(12) << r.sd << std::setw(22) << ci.str() << "\n";
  }
}

void write_marginal(const fs::path& dir, const std::string& name, const MarginalGrid& g) {
  auto f = open_out(dir / ("marginal_" + name + ".csv"));
  f << "x,density\n";
  for (Eigen::Index i = 0; i < g.x.size(); ++i) f << g.x[i] << "," << g.density[i] << "\n";
}

std::vector<std::string> hyper_names(const DhglmSpec& spec) {
  std::vector<std::string> out;
  if (spec.mean.random_effect &&
      spec.mean.random_effect->precision_model == RePrecisionModel::FreeScalar)
    out.push_back("tau_" + spec.mean.random_effect->name);
  if (spec.dispersion.random_effect) out.push_back("tau_" + spec.dispersion.random_effect->name);
  return out;
}

std::vector<std::string> latent_coef_names(const PresetRun& run) {
  std::vector<std::string> out;
  for (const auto& t : run.spec.mean.terms) out.push_back(t.coef_name);
  if (run.plan.kind == PlanKind::GroupLogPrecisions)
    for (const auto& t : run.spec.dispersion.terms) out.push_back(t.coef_name);
  return out;
}

ParamRow make_row(const PresetRun& run, const std::string& name) {
  ParamRow r;
  r.name = name;
  auto it = run.true_values.find(name);
  if (it != run.true_values.end()) {
    r.has_true = true;
    r.true_value = it->second;
  }
  return r;
}

struct FitArtifacts {
  std::vector<ParamRow> amis_rows, mcmc_rows;
  json meta;
};

void run_amis_side(const PresetRun& preset, const fs::path& dir, int workers, FitArtifacts& art) {
  PresetRun run = preset;
  run.amis.workers = workers;
  ConditionalTarget target(run.spec, run.data, run.plan);

  auto t0 = std::chrono::steady_clock::now();
  if (run.permutation_init) {
    ProposalState cand =
        make_proposal(run.amis.family, run.amis.init_mean, run.amis.init_cov, run.amis.df);
    ProposalState best = permutation_search_init(cand, target, run.n_permutations, run.amis.seed);
    run.amis.init_mean = best.mean;
    run.amis.init_cov = best.cov;
  }
  WeightedEnsemble e = run_amis(target, run.amis);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  {
    auto f = open_out(dir / "stage_ess.csv");
    f << "stage,samples_in_stage,total_samples,ess,log_target_at_mean\n";
    for (const auto& s : e.stage_logs)
      f << s.stage << "," << s.samples_in_stage << "," << s.total_samples << "," << s.ess << ","
        << s.log_target_at_mean << "\n";
  }
  {
    auto f = open_out(dir / "ensemble.csv");
    for (int j = 0; j < run.plan.dim(); ++j) f << run.plan.theta_names[(size_t)j] << ",";
    f << "log_target,weight\n";
    for (Eigen::Index m = 0; m < e.size(); ++m) {
      for (int j = 0; j < run.plan.dim(); ++j) f << e.samples(m, j) << ",";
      f << e.log_targets[m] << "," << e.weights[m] << "\n";
    }
  }
  for (int j = 0; j < run.plan.dim(); ++j) {
    auto f = open_out(dir / ("diagnostic_" + std::to_string(j) + ".csv"));
    f << "empirical_p,cumulative_weight\n";
    for (const auto& [p, c] : weight_diagnostic_curve(e, j)) f << p << "," << c << "\n";
  }

  bool theta_ok = true;
  try {
    for (const auto& s : sample_posterior_theta_c(e, run.plan.theta_names)) {
      ParamRow r = make_row(run, s.name);
      r.mean = s.mean;
      r.sd = s.sd;
      r.lo = s.lo;
      r.hi = s.hi;
      art.amis_rows.push_back(r);
    }
  } catch (const dhglm_error& err) {
    theta_ok = false;
    std::cerr << "warning: " << err.what() << "\n";
  }
  for (const auto& name : latent_coef_names(run)) {
    MarginalGrid g = mix_marginals(e, name);
    write_marginal(dir, name, g);
    CoefSummary cs = mixed_coefficient_summary(e, name);
    ParamRow r = make_row(run, name);
    r.mean = cs.mean;
    r.sd = cs.sd;
    r.lo = grid_quantile(g, 0.025);
    r.hi = grid_quantile(g, 0.975);
    art.amis_rows.push_back(r);
  }
  for (const auto& name : hyper_names(run.spec)) {
    // mix on the log scale, then change variables to the natural scale
    MarginalGrid lg = mix_marginals(e, "log_" + name);
    write_marginal(dir, "log_" + name, lg);
    MarginalGrid g = transform_marginal(lg, exp_map());
    g.normalize();
    write_marginal(dir, name, g);
    ParamRow r = make_row(run, name);
    r.mean = g.mean();
    r.sd = g.sd();
    r.lo = grid_quantile(g, 0.025);
    r.hi = grid_quantile(g, 0.975);
    art.amis_rows.push_back(r);
  }
  write_summary(dir, "summary_amis", art.amis_rows);

  art.meta["amis"] = {{"ess", e.ess},
                      {"total_samples", (int)e.size()},
                      {"seconds", secs},
                      {"theta_summary_available", theta_ok}};
  if (e.ess < 100.0) {
    std::cerr << "warning: effective sample size " << e.ess << " of " << e.size()
              << " is low; inspect the weight diagnostics before trusting these estimates\n";
    art.meta["amis"]["low_ess"] = true;
  }
  std::cout << "amis: ESS " << e.ess << " of " << e.size() << " (" << secs << " s)\n";
}

void run_mcmc_side(const PresetRun& run, const fs::path& dir, FitArtifacts& art) {
  auto t0 = std::chrono::steady_clock::now();
  McmcChain chain = run_mcmc(run.spec, run.data, run.mcmc);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  {
    auto f = open_out(dir / "chains.csv");
    bool first = true;
    for (const auto& [name, d] : chain.draws) {
      f << (first ? "" : ",") << name;
      first = false;
    }
    f << "\n";
    for (int i = 0; i < chain.kept; ++i) {
      first = true;
      for (const auto& [name, d] : chain.draws) {
        f << (first ? "" : ",") << d[i];
        first = false;
      }
      f << "\n";
    }
  }
  for (const auto& s : chain_summary(chain)) {
    ParamRow r = make_row(run, s.name);
    r.mean = s.mean;
    r.sd = s.sd;
    r.lo = s.lo;
    r.hi = s.hi;
    art.mcmc_rows.push_back(r);
  }
  write_summary(dir, "summary_mcmc", art.mcmc_rows);
  art.meta["mcmc"] = {{"kept_draws", chain.kept}, {"seconds", secs}};
  std::cout << "mcmc: " << chain.kept << " retained draws (" << secs << " s)\n";
}

struct CompareRow {
  std::string name;
  double mean_a, mean_b, dmean, sd_ratio;
  bool pass;
};

std::vector<CompareRow> compare_rows(const std::vector<ParamRow>& a, const std::vector<ParamRow>& b,
                                     double tol) {
  std::vector<CompareRow> out;
  for (const auto& ra : a)
    for (const auto& rb : b)
      if (ra.name == rb.name) {
        CompareRow c;
        c.name = ra.name;
        c.mean_a = ra.mean;
        c.mean_b = rb.mean;
        c.dmean = std::abs(ra.mean - rb.mean);
        c.sd_ratio = rb.sd > 0.0 ? ra.sd / rb.sd : std::numeric_limits<double>::quiet_NaN();
        c.pass = c.dmean <= tol;
        out.push_back(c);
      }
  if (out.empty()) throw dhglm_error("compare: the two summaries share no parameter names");
  return out;
}

void write_compare(const fs::path& path, const std::vector<CompareRow>& rows) {
  auto f = open_out(path);
  f << "parameter,mean_a,mean_b,abs_diff,sd_ratio,pass\n";
  for (const auto& r : rows)
    f << r.name << "," << r.mean_a << "," << r.mean_b << "," << r.dmean << "," << r.sd_ratio << ","
      << (r.pass ? "yes" : "no") << "\n";
}

std::vector<ParamRow> read_summary_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw dhglm_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw dhglm_error("empty summary file '" + path + "'");
  std::vector<ParamRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    ParamRow r;
    std::getline(ss, r.name, ',');
    std::getline(ss, tok, ',');
    if (!tok.empty()) {
      r.has_true = true;
      r.true_value = std::stod(tok);
    }
    auto next = [&]() {
      std::getline(ss, tok, ',');
      return std::stod(tok);
    };
    r.mean = next();
    r.sd = next();
    r.lo = next();
    r.hi = next();
    rows.push_back(std::move(r));
  }
  return rows;
}

void apply_config(PresetRun& run, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw dhglm_error("cannot read config '" + path + "'");
  json cfg = json::parse(f);
  if (cfg.contains("amis")) {
    const auto& a = cfg["amis"];
    if (a.contains("n_initial")) run.amis.n_initial = a["n_initial"];
    if (a.contains("n_stages")) run.amis.n_stages = a["n_stages"];
    if (a.contains("n_per_stage")) run.amis.n_per_stage = a["n_per_stage"];
    if (a.contains("df")) run.amis.df = a["df"];
    if (a.contains("family")) {
      std::string fam = a["family"];
      if (fam == "gaussian")
        run.amis.family = ProposalFamily::Gaussian;
      else if (fam == "student-t")
        run.amis.family = ProposalFamily::StudentT;
      else
        throw dhglm_error("config: unknown proposal family '" + fam + "'");
    }
  }
  if (cfg.contains("mcmc")) {
    const auto& m = cfg["mcmc"];
    if (m.contains("burn_in")) run.mcmc.burn_in = m["burn_in"];
    if (m.contains("iterations")) run.mcmc.iterations = m["iterations"];
    if (m.contains("thin")) run.mcmc.thin = m["thin"];
  }
}

int default_workers() {
  if (const char* env = std::getenv("DHGLM_WORKERS")) {
    int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"double hierarchical GLM fitting by adaptive importance sampling"};
  app.require_subcommand(1);

  std::string preset, scale = "desk", out_dir = "out", config_path, method = "both";
  std::uint64_t seed = 1;
  int workers = default_workers();
  double tolerance = 0.05;
  std::string file_a, file_b;

  auto add_common = [&](CLI::App* cmd, bool with_method) {
    cmd->add_option("--preset", preset, "experiment preset id")->required();
    cmd->add_option("--scale", scale, "paper or desk");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out", out_dir, "output directory");
    if (with_method) {
      cmd->add_option("--method", method, "amis, mcmc, or both");
      cmd->add_option("--workers", workers, "worker threads (env DHGLM_WORKERS)");
      cmd->add_option("--config", config_path, "structured-text override file");
    }
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a preset dataset as CSV");
  add_common(sim, false);
  CLI::App* fit = app.add_subcommand("fit", "simulate and fit a preset end to end");
  add_common(fit, true);
  CLI::App* diag = app.add_subcommand("diagnose", "run the importance sampler and emit diagnostics");
  add_common(diag, true);
  CLI::App* cmp = app.add_subcommand("compare", "compare two summary tables");
  cmp->add_option("--a", file_a, "first summary CSV")->required();
  cmp->add_option("--b", file_b, "second summary CSV")->required();
  cmp->add_option("--tolerance", tolerance, "pass threshold on |mean difference|");
  cmp->add_option("--out", out_dir, "output directory");
  CLI::App* lsp = app.add_subcommand("list-presets", "list experiment presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (lsp->parsed()) {
      for (const auto& id : preset_ids())
        std::cout << std::left << std::setw(26) << id << preset_description(id) << "\n";
      return 0;
    }
    if (cmp->parsed()) {
      auto rows = compare_rows(read_summary_csv(file_a), read_summary_csv(file_b), tolerance);
      fs::create_directories(out_dir);
      write_compare(fs::path(out_dir) / "compare.csv", rows);
      bool all = true;
      for (const auto& r : rows) {
        std::cout << std::left << std::setw(14) << r.name << " |d mean| " << std::setprecision(5)
                  << r.dmean << (r.pass ? "  pass" : "  FAIL") << "\n";
        all = all && r.pass;
      }
      return all ? 0 : 1;
    }

    RunScale rs = scale_from_string(scale);
    PresetRun run = build_preset(preset, rs, seed);
    fs::create_directories(out_dir);
    fs::path dir(out_dir);

    if (sim->parsed()) {
      write_csv(run.data, (dir / "data.csv").string());
      if (run.data.W) {
        auto f = open_out(dir / "adjacency.csv");
        const MatrixXd& W = *run.data.W;
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
          for (Eigen::Index j = 0; j < W.cols(); ++j) f << (W(i, j) > 0.0 ? 1 : 0) << (j + 1 < W.cols() ? "," : "");
          f << "\n";
        }
      }
      std::cout << "wrote " << run.data.n() << " observations in " << run.data.n_groups
                << " groups to " << (dir / "data.csv").string() << "\n";
      return 0;
    }

    if (!config_path.empty()) apply_config(run, config_path);

    FitArtifacts art;
    art.meta = {{"preset", preset}, {"scale", scale}, {"seed", seed}, {"workers", workers},
                {"method", diag->parsed() ? "amis" : method}};
    if (diag->parsed() || method == "amis" || method == "both")
      run_amis_side(run, dir, workers, art);
    if (!diag->parsed() && (method == "mcmc" || method == "both")) run_mcmc_side(run, dir, art);
    if (!diag->parsed() && method == "both" && !art.amis_rows.empty()) {
      auto rows = compare_rows(art.amis_rows, art.mcmc_rows, tolerance);
      write_compare(dir / "compare.csv", rows);
    }
    auto f = open_out(dir / "run.json");
    f << art.meta.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
