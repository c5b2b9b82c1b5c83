#include "dhglm/presets.hpp"

namespace dhglm {

RunScale scale_from_string(const std::string& s) {
  if (s == "paper") return RunScale::Paper;
  if (s == "desk") return RunScale::Desk;
  throw dhglm_error("unknown scale '" + s + "' (expected paper or desk)");
}

std::string to_string(RunScale s) { return s == RunScale::Paper ? "paper" : "desk"; }

namespace {

Term intercept(const std::string& name) { return {name, ""}; }
Term covar(const std::string& name, const std::string& col) { return {name, col}; }

VectorXd group_sample_variances(const Dataset& d) {
  VectorXd mean = VectorXd::Zero(d.n_groups), ss = VectorXd::Zero(d.n_groups);
  VectorXd cnt = VectorXd::Zero(d.n_groups);
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    mean[d.group[i]] += d.y[i];
    cnt[d.group[i]] += 1.0;
  }
  mean.array() /= cnt.array();
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    double r = d.y[i] - mean[d.group[i]];
    ss[d.group[i]] += r * r;
  }
  for (int g = 0; g < d.n_groups; ++g) {
    if (cnt[g] < 2) throw dhglm_error("group sample variance needs at least two observations");
    ss[g] /= cnt[g] - 1.0;
  }
  return ss;
}

void vague_init(AmisConfig& a, int dim, double diag) {
  a.init_mean = VectorXd::Zero(dim);
  a.init_cov = diag * MatrixXd::Identity(dim, dim);
}

// Per-group sample variances inform the starting distribution over the group
// log-precisions: mean log(1/S2_i), shared diagonal variance
// var(log S2) / n_i, inflated by `factor`.
void informed_init(AmisConfig& a, const Dataset& d, double factor) {
  VectorXd s2 = group_sample_variances(d);
  VectorXd ls = s2.array().log();
  double m = ls.mean();
  double v = (ls.array() - m).square().sum() / std::max<Eigen::Index>(1, ls.size() - 1);
  VectorXd cnt = VectorXd::Zero(d.n_groups);
  for (Eigen::Index i = 0; i < d.n(); ++i) cnt[d.group[i]] += 1.0;
  a.init_mean = (-ls.array()).matrix();
  a.init_cov = MatrixXd::Zero(d.n_groups, d.n_groups);
  for (int g = 0; g < d.n_groups; ++g) a.init_cov(g, g) = factor * v / cnt[g];
}

struct PresetInfo {
  const char* id;
  const char* description;
};

const PresetInfo kPresets[] = {
    {"poisson-sim", "Poisson counts with per-observation random effects whose log-precision is a regression"},
    {"negbin-sim", "negative binomial counts with a regression on the log-sizes"},
    {"gaussian-sim-scenario-1", "grouped Gaussian, mixed model on group log-precisions; 5000+10x1000 samples, vague start"},
    {"gaussian-sim-scenario-2", "grouped Gaussian; 5000+10x1000 samples, data-informed start"},
    {"gaussian-sim-scenario-3", "grouped Gaussian; 1000+10x1000 samples, vague start (known-pathological)"},
    {"gaussian-sim-scenario-4", "grouped Gaussian; 1000+10x1000 samples, data-informed start"},
    {"gaussian-sim-scenario-5", "grouped Gaussian; 5000+10x1000 samples, data-informed start with 10x variance"},
    {"gaussian-sim-scenario-6", "grouped Gaussian; 5000+10x5000 samples, data-informed start"},
    {"spatial-poisson", "regional Poisson counts with spatial-lag covariate and dispersion regression"},
    {"spatial-negbin", "regional negative binomial counts with spatial-lag covariate and size regression"},
    {"sleep-rcoef", "reaction times with per-subject random slopes and per-subject precisions"},
    {"sleep-fixed", "reaction times with a fixed slope and per-subject precisions"},
};

}  // namespace

std::vector<std::string> preset_ids() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.push_back(p.id);
  return out;
}

bool is_preset(const std::string& id) {
  for (const auto& p : kPresets)
    if (id == p.id) return true;
  return false;
}

std::string preset_description(const std::string& id) {
  for (const auto& p : kPresets)
    if (id == p.id) return p.description;
  throw dhglm_error("unknown preset '" + id + "'");
}

PresetRun build_preset(const std::string& id, RunScale scale, std::uint64_t seed) {
  if (!is_preset(id)) throw dhglm_error("unknown preset '" + id + "'");
  const bool desk = scale == RunScale::Desk;

  PresetRun run;
  run.id = id;
  run.description = preset_description(id);
  run.amis.seed = seed;
  run.amis.n_initial = desk ? 1000 : 5000;
  run.amis.n_stages = desk ? 5 : 10;
  run.amis.n_per_stage = desk ? 500 : 1000;
  run.mcmc.seed = seed;
  run.mcmc.burn_in = desk ? 2000 : 10000;
  run.mcmc.iterations = desk ? 20000 : 100000;
  run.mcmc.thin = desk ? 20 : 100;

  if (id == "poisson-sim") {
    PoissonReParams p;
    p.n = desk ? 250 : 1000;
    run.data = simulate_poisson_re(p, seed);
    LinearPredictor mean{{intercept("beta0"), covar("beta1", "x")}, Link::Log};
    mean.random_effect = RandomEffectBlock{"u", "", RePrecisionModel::ModeledByDispersion, {}};
    LinearPredictor disp{{intercept("gamma0"), covar("gamma1", "z")}, Link::Log};
    run.spec = build_spec(Family::Poisson, mean, disp);
    vague_init(run.amis, 2, 5.0);
    run.true_values = {{"beta0", p.beta0}, {"beta1", p.beta1}, {"gamma0", p.gamma0}, {"gamma1", p.gamma1}};
  } else if (id == "negbin-sim") {
    NegbinParams p;
    p.n = desk ? 125 : 500;
    run.data = simulate_negbin(p, seed);
    LinearPredictor mean{{intercept("beta0"), covar("beta1", "x")}, Link::Log};
    LinearPredictor disp{{intercept("gamma0"), covar("gamma1", "z")}, Link::Log};
    run.spec = build_spec(Family::NegativeBinomial, mean, disp);
    vague_init(run.amis, 2, 5.0);
    run.true_values = {{"beta0", p.beta0}, {"beta1", p.beta1}, {"gamma0", p.gamma0}, {"gamma1", p.gamma1}};
  } else if (id.rfind("gaussian-sim-scenario-", 0) == 0) {
    int scen = id.back() - '0';
    GaussianGroupsParams p;
    p.per_group = desk ? 125 : 500;
    run.data = simulate_gaussian_groups(p, seed);
    LinearPredictor mean{{intercept("beta0"), covar("beta1", "x")}, Link::Identity};
    LinearPredictor disp{{intercept("gamma0"), covar("gamma1", "z")}, Link::Log};
    disp.random_effect = RandomEffectBlock{"u", "", RePrecisionModel::FreeScalar, {}};
    run.spec = build_spec(Family::Gaussian, mean, disp);

    bool small_start = scen == 3 || scen == 4;
    run.amis.n_initial = desk ? (small_start ? 250 : 1000) : (small_start ? 1000 : 5000);
    if (scen == 6) run.amis.n_per_stage = desk ? 1000 : 5000;
    switch (scen) {
      case 1:
      case 3:
        vague_init(run.amis, p.n_groups, 5.0);
        break;
      case 5:
        informed_init(run.amis, run.data, 10.0);
        break;
      default:
        informed_init(run.amis, run.data, 1.0);
        break;
    }
    run.expect_low_ess = scen == 3;
    run.true_values = {{"beta0", p.beta0}, {"beta1", p.beta1}, {"gamma0", p.gamma0},
                       {"gamma1", p.gamma1}, {"tau_u", p.tau_u}};
  } else if (id == "spatial-poisson" || id == "spatial-negbin") {
    SpatialCountsParams p;
    p.negbin = id == "spatial-negbin";
    run.data = simulate_spatial_counts(p, seed);
    LinearPredictor mean{{intercept("beta"), covar("rho", "lag_rates")}, Link::Log};
    mean.use_dataset_offset = true;
    if (!p.negbin)
      mean.random_effect = RandomEffectBlock{"u", "", RePrecisionModel::ModeledByDispersion, {}};
    LinearPredictor disp{{intercept("gamma0"), covar("gamma1", "ibn")}, Link::Log};
    run.spec = build_spec(p.negbin ? Family::NegativeBinomial : Family::Poisson, mean, disp);
    // vague on the dispersion-predictor scale: the covariate spans tens of
    // units, so its slope axis shrinks by the covariate variance
    const VectorXd& ibn = run.data.col("ibn");
    double vz = (ibn.array() - ibn.mean()).square().sum() / (ibn.size() - 1);
    vague_init(run.amis, 2, 5.0);
    run.amis.init_cov(1, 1) = 5.0 / vz;
    run.true_values = {{"beta", p.beta}, {"rho", p.rho}, {"gamma0", p.gamma0}, {"gamma1", p.gamma1}};
  } else {  // sleep-rcoef / sleep-fixed
    SleepParams p;
    run.data = simulate_sleep(p, seed);
    LinearPredictor mean;
    if (id == "sleep-rcoef") {
      mean = LinearPredictor{{intercept("beta0")}, Link::Identity};
      mean.random_effect = RandomEffectBlock{"b", "day", RePrecisionModel::FreeScalar, {}};
    } else {
      mean = LinearPredictor{{intercept("beta0"), covar("beta1", "day")}, Link::Identity};
    }
    LinearPredictor disp{{intercept("gamma")}, Link::Log};
    disp.random_effect = RandomEffectBlock{"u", "", RePrecisionModel::FreeScalar, {}};
    run.spec = build_spec(Family::Gaussian, mean, disp);

    run.amis.n_initial = desk ? 500 : 1000;
    run.amis.n_stages = desk ? 10 : 20;
    run.amis.n_per_stage = desk ? 250 : 1000;
    ProposalState init = init_proposal_from_data(group_sample_variances(run.data));
    run.amis.init_mean = init.mean;
    run.amis.init_cov = init.cov;
    run.permutation_init = true;
    run.n_permutations = desk ? 100 : 500;
  }

  run.plan = derive_conditioning_plan(run.spec, run.data);
  return run;
}

}  // namespace dhglm
