#include "dhglm/amis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <numeric>

namespace dhglm {

// ---- proposal -----------------------------------------------------------

void ProposalState::factorize() {
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw dhglm_error("proposal covariance is not positive definite");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-10)
    throw dhglm_error("proposal covariance is numerically singular");
  chol_ = llt.matrixL();
  double logdet = 0.0;
  for (int j = 0; j < dim(); ++j) logdet += 2.0 * std::log(chol_(j, j));
  int d = dim();
  if (family == ProposalFamily::Gaussian) {
    log_norm_ = -0.5 * d * kLog2Pi - 0.5 * logdet;
  } else {
    log_norm_ = std::lgamma(0.5 * (df + d)) - std::lgamma(0.5 * df) -
                0.5 * d * std::log(df * M_PI) - 0.5 * logdet;
  }
}

double ProposalState::log_density(const VectorXd& x) const {
  VectorXd z = chol_.triangularView<Eigen::Lower>().solve(x - mean);
  double q = z.squaredNorm();
  if (family == ProposalFamily::Gaussian) return log_norm_ - 0.5 * q;
  return log_norm_ - 0.5 * (df + dim()) * std::log1p(q / df);
}

VectorXd ProposalState::sample(Rng& rng) const {
  VectorXd z(dim());
  for (int j = 0; j < dim(); ++j) z[j] = rng.normal();
  VectorXd x = mean + chol_ * z;
  if (family == ProposalFamily::StudentT) {
    double chi2 = 2.0 * rng.gamma(0.5 * df, 1.0);
    x = mean + (x - mean) * std::sqrt(df / chi2);
  }
  return x;
}

ProposalState make_proposal(ProposalFamily family, VectorXd mean, MatrixXd cov, double df) {
  if (mean.size() != cov.rows() || cov.rows() != cov.cols())
    throw dhglm_error("proposal mean/covariance dimension mismatch");
  ProposalState s;
  s.family = family;
  s.df = df;
  s.mean = std::move(mean);
  s.cov = std::move(cov);
  s.factorize();
  return s;
}

// ---- weights ------------------------------------------------------------

double effective_sample_size(const VectorXd& weights) {
  if (weights.size() == 0) throw dhglm_error("ess: empty weight vector");
  double s = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw dhglm_error("ess: negative weight");
    s += weights[i];
    s2 += weights[i] * weights[i];
  }
  if (s == 0.0) throw dhglm_error("ess: all weights are zero");
  return s * s / s2;
}

namespace {

// log of the deterministic multiple mixture sum_t (N_t / N) s_t(x)
double log_mixture_density(const std::vector<ProposalState>& proposals,
                           const std::vector<int>& counts, const VectorXd& x) {
  int total = std::accumulate(counts.begin(), counts.end(), 0);
  VectorXd terms((Eigen::Index)proposals.size());
  for (size_t t = 0; t < proposals.size(); ++t)
    terms[(Eigen::Index)t] = std::log((double)counts[t]) + proposals[t].log_density(x);
  return log_sum_exp(terms) - std::log((double)total);
}

void reweight(WeightedEnsemble& e, const std::vector<ProposalState>& proposals,
              const std::vector<int>& counts) {
  Eigen::Index m = e.size();
  e.log_weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i)
    e.log_weights[i] = e.log_targets[i] - log_mixture_density(proposals, counts, e.samples.row(i));
  double lse = log_sum_exp(e.log_weights);
  if (!std::isfinite(lse))
    throw dhglm_error("amis: all importance weights are zero; the proposal is catastrophically "
                      "misplaced relative to the target");
  // std::exp, not Eigen's packet exp: the latter clamps its argument and maps
  // -inf to a subnormal positive value instead of zero
  e.weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) e.weights[i] = std::exp(e.log_weights[i] - lse);
  e.ess = effective_sample_size(e.weights);
}

}  // namespace

ProposalState adapt_proposal(const WeightedEnsemble& ensemble, const ProposalState& state) {
  if (ensemble.ess <= 1.0) throw dhglm_error("adapt_proposal requires ESS > 1");
  int d = (int)ensemble.samples.cols();
  VectorXd mean = VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < ensemble.size(); ++i)
    mean += ensemble.weights[i] * ensemble.samples.row(i).transpose();
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < ensemble.size(); ++i) {
    VectorXd c = ensemble.samples.row(i).transpose() - mean;
    cov += ensemble.weights[i] * (c * c.transpose());
  }
  double ridge = 1e-6 * cov.trace() / d;
  bool collapsed = !(ridge > 1e-12);
  if (collapsed) ridge = 1e-8;
  cov.diagonal().array() += ridge;

  ProposalState next;
  next.family = state.family;
  next.df = state.df;
  next.mean = std::move(mean);
  next.cov = std::move(cov);
  next.history = state.history;
  next.history.push_back({state.mean, state.cov, 0});
  next.low_ess_warning = collapsed || ensemble.ess < d + 1;
  try {
    next.factorize();
  } catch (const dhglm_error&) {
    throw dhglm_error("amis: degenerate weighted covariance after ridge regularization");
  }
  return next;
}

WeightedEnsemble run_amis(const AmisTarget& target, const AmisConfig& config) {
  if (config.n_initial < 1 || config.n_stages < 0 || config.n_per_stage < 1)
    throw dhglm_error("amis: invalid stage sizes");
  if (config.init_mean.size() != target.dim())
    throw dhglm_error("amis: initial proposal dimension mismatch");

  std::vector<ProposalState> proposals;
  proposals.push_back(make_proposal(config.family, config.init_mean, config.init_cov, config.df));
  std::vector<int> counts;

  WeightedEnsemble e;
  int total = config.n_initial + config.n_stages * config.n_per_stage;
  e.samples.resize(total, target.dim());
  e.log_targets.resize(total);
  if (config.keep_fits) e.fits.resize(total);

  Eigen::Index filled = 0;
  for (int stage = 0; stage <= config.n_stages; ++stage) {
    int n_stage = stage == 0 ? config.n_initial : config.n_per_stage;
    const ProposalState& prop = proposals.back();

    Eigen::Index base = filled;
    for (Eigen::Index i = 0; i < n_stage; ++i) {
      Rng rng(config.seed, "amis-sample", (std::uint64_t)(base + i));
      e.samples.row(base + i) = prop.sample(rng).transpose();
    }
    parallel_for(n_stage, config.workers, [&](Eigen::Index i) {
      ConditionalFit* fit = config.keep_fits ? &e.fits[(size_t)(base + i)] : nullptr;
      try {
        double lt = target.log_target(e.samples.row(base + i), fit);
        // overflow in an extreme corner of the proposal must not poison the run
        if (std::isnan(lt) || lt > 1e300) lt = -std::numeric_limits<double>::infinity();
        e.log_targets[base + i] = lt;
      } catch (const dhglm_error&) {
        // a failed conditional fit carries zero weight
        e.log_targets[base + i] = -std::numeric_limits<double>::infinity();
      }
    });
    filled += n_stage;
    counts.push_back(n_stage);
    e.stage_sizes.push_back(n_stage);

    // reweight everything against the deterministic mixture so far
    WeightedEnsemble view;
    view.samples = e.samples.topRows(filled);
    view.log_targets = e.log_targets.head(filled);
    reweight(view, proposals, counts);

    StageLog log;
    log.stage = stage;
    log.samples_in_stage = n_stage;
    log.total_samples = (int)filled;
    log.ess = view.ess;
    log.proposal_mean = prop.mean;
    log.proposal_cov = prop.cov;

    if (stage < config.n_stages) {
      try {
        proposals.push_back(adapt_proposal(view, prop));
      } catch (const dhglm_error&) {
        // a degenerate ensemble (one dominant weight) cannot support a
        // covariance estimate; re-center on the weighted mean and contract
        // the current search scale so later stages can home in instead of
        // resampling the same diffuse proposal forever
        VectorXd center = prop.mean;
        if (view.ess > 0.0) {
          center.setZero();
          for (Eigen::Index i = 0; i < view.size(); ++i)
            center += view.weights[i] * view.samples.row(i).transpose();
        }
        ProposalState recenter = make_proposal(prop.family, center, 0.25 * prop.cov, prop.df);
        recenter.history = prop.history;
        recenter.history.push_back({prop.mean, prop.cov, 0});
        recenter.low_ess_warning = true;
        proposals.push_back(std::move(recenter));
      }
    }

    if (config.monitor_target_at_mean) {
      try {
        log.log_target_at_mean = target.log_target(proposals.back().mean, nullptr);
      } catch (const dhglm_error&) {
        log.log_target_at_mean = -std::numeric_limits<double>::infinity();
      }
    }
    e.stage_logs.push_back(std::move(log));
  }

  reweight(e, proposals, counts);
  return e;
}

// ---- posterior summaries ------------------------------------------------

MarginalGrid mix_marginals(const WeightedEnsemble& ensemble, const std::string& name, int points) {
  if (ensemble.fits.empty()) throw dhglm_error("mix_marginals: ensemble carries no fits");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  // negligible-weight components may sit at extreme modes; letting them set
  // the grid range would starve the bulk of resolution
  double w_floor = 1e-8 * ensemble.weights.maxCoeff();
  std::vector<MarginalGrid> grids;
  grids.reserve((size_t)ensemble.size());
  for (Eigen::Index m = 0; m < ensemble.size(); ++m) {
    const ConditionalFit& f = ensemble.fits[(size_t)m];
    if (ensemble.weights[m] <= 0.0) {
      grids.emplace_back();
      continue;
    }
    if (!f.has_marginal(name))
      throw dhglm_error("mix_marginals: fit " + std::to_string(m) + " lacks marginal '" + name + "'");
    grids.push_back(f.marginal_grid(name));
    if (ensemble.weights[m] < w_floor) continue;
    lo = std::min(lo, grids.back().x[0]);
    hi = std::max(hi, grids.back().x[grids.back().x.size() - 1]);
  }
  MarginalGrid out;
  out.x = VectorXd::LinSpaced(points, lo, hi);
  out.density = VectorXd::Zero(points);
  for (Eigen::Index m = 0; m < ensemble.size(); ++m) {
    if (ensemble.weights[m] <= 0.0) continue;
    const MarginalGrid& g = grids[(size_t)m];
    out.scale = g.scale;
    for (int t = 0; t < points; ++t) out.density[t] += ensemble.weights[m] * g.at(out.x[t]);
  }
  return out;
}

CoefSummary mixed_coefficient_summary(const WeightedEnsemble& ensemble, const std::string& name) {
  if (ensemble.fits.empty()) throw dhglm_error("ensemble carries no fits");
  double mean = 0.0, second = 0.0;
  for (Eigen::Index m = 0; m < ensemble.size(); ++m) {
    if (ensemble.weights[m] <= 0.0) continue;
    auto it = ensemble.fits[(size_t)m].latent.find(name);
    if (it == ensemble.fits[(size_t)m].latent.end())
      throw dhglm_error("fit lacks latent summary '" + name + "'");
    mean += ensemble.weights[m] * it->second.mean;
    second += ensemble.weights[m] *
              (it->second.sd * it->second.sd + it->second.mean * it->second.mean);
  }
  return {mean, std::sqrt(std::max(0.0, second - mean * mean))};
}

std::vector<ComponentSummary> sample_posterior_theta_c(const WeightedEnsemble& ensemble,
                                                       const std::vector<std::string>& names) {
  if (ensemble.size() > 1 && ensemble.ess <= 10.0)
    throw dhglm_error("theta_c summary refused: ESS <= 10; inspect the weight diagnostics and "
                      "re-run with a better initial proposal or more samples");
  int d = (int)ensemble.samples.cols();
  if ((int)names.size() != d) throw dhglm_error("component name count mismatch");
  std::vector<ComponentSummary> out((size_t)d);
  for (int j = 0; j < d; ++j) {
    VectorXd v = ensemble.samples.col(j);
    double mean = (ensemble.weights.array() * v.array()).sum();
    double m2 = (ensemble.weights.array() * v.array().square()).sum();
    ComponentSummary& s = out[(size_t)j];
    s.name = names[(size_t)j];
    s.mean = mean;
    s.sd = std::sqrt(std::max(0.0, m2 - mean * mean));
    s.lo = weighted_quantile(v, ensemble.weights, 0.025);
    s.hi = weighted_quantile(v, ensemble.weights, 0.975);
  }
  return out;
}

std::vector<std::pair<double, double>> weight_diagnostic_curve(const WeightedEnsemble& ensemble,
                                                               int component) {
  Eigen::Index m = ensemble.size();
  if (m < 2) throw dhglm_error("diagnostic curve requires at least two samples");
  std::vector<Eigen::Index> idx((size_t)m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return ensemble.samples(a, component) < ensemble.samples(b, component);
  });
  std::vector<std::pair<double, double>> curve;
  curve.reserve((size_t)m);
  double cum = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cum += ensemble.weights[idx[(size_t)k]];
    curve.emplace_back((double)(k + 1) / (double)m, cum);
  }
  return curve;
}

ProposalState init_proposal_from_data(const VectorXd& s2, double scale) {
  int d = (int)s2.size();
  VectorXd mean(d);
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    if (!(s2[j] > 0.0)) throw dhglm_error("init_proposal_from_data: sample variance must be > 0");
    mean[j] = std::log(1.0 / s2[j]);
    // |.| guard: a scale proportional to the raw mean goes negative whenever S^2 > 1
    cov(j, j) = std::max(scale * std::abs(mean[j]), 0.05);
  }
  return make_proposal(ProposalFamily::Gaussian, std::move(mean), std::move(cov));
}

ProposalState permutation_search_init(const ProposalState& candidate, const AmisTarget& target,
                                      int n_perm, std::uint64_t seed) {
  if (n_perm < 1) throw dhglm_error("permutation search requires n_perm >= 1");
  int d = candidate.dim();
  std::vector<int> best((size_t)d), perm((size_t)d);
  std::iota(best.begin(), best.end(), 0);
  double best_value = -std::numeric_limits<double>::infinity();
  bool any = false;

  auto evaluate = [&](const std::vector<int>& p) {
    VectorXd mean(d);
    for (int j = 0; j < d; ++j) mean[j] = candidate.mean[p[(size_t)j]];
    try {
      double v = target.log_target(mean, nullptr);
      any = true;
      if (v > best_value) {  // first-encountered maximum wins ties
        best_value = v;
        best = p;
      }
    } catch (const dhglm_error&) {
      // skip permutations where the conditional fit fails
    }
  };

  std::iota(perm.begin(), perm.end(), 0);
  evaluate(perm);  // identity first
  for (int r = 0; r < n_perm; ++r) {
    Rng rng(seed, "perm-search", (std::uint64_t)r);
    std::iota(perm.begin(), perm.end(), 0);
    for (int j = d - 1; j > 0; --j) {
      int k = (int)(rng.uniform() * (j + 1));
      std::swap(perm[(size_t)j], perm[(size_t)std::min(k, j)]);
    }
    evaluate(perm);
  }
  if (!any) throw dhglm_error("permutation search: the conditional fit failed at every permutation");

  VectorXd mean(d);
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    mean[j] = candidate.mean[best[(size_t)j]];
    for (int k = 0; k < d; ++k) cov(j, k) = candidate.cov(best[(size_t)j], best[(size_t)k]);
  }
  return make_proposal(candidate.family, std::move(mean), std::move(cov), candidate.df);
}

}  // namespace dhglm
