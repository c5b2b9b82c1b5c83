#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dhglm/amis.hpp"

using namespace dhglm;

namespace {

// analytic scalar target: no conditional model behind it
struct FnTarget : AmisTarget {
  int d = 1;
  std::function<double(const VectorXd&)> f;
  int dim() const override { return d; }
  double log_target(const VectorXd& theta, ConditionalFit*) const override { return f(theta); }
};

AmisConfig toy_config(int dim, std::uint64_t seed, int n0 = 400, int stages = 3, int per = 200) {
  AmisConfig c;
  c.n_initial = n0;
  c.n_stages = stages;
  c.n_per_stage = per;
  c.init_mean = VectorXd::Zero(dim);
  c.init_cov = 4.0 * MatrixXd::Identity(dim, dim);
  c.seed = seed;
  c.keep_fits = false;
  c.monitor_target_at_mean = false;
  return c;
}

}  // namespace

TEST_CASE("effective sample size identities") {
  VectorXd uniform = VectorXd::Constant(64, 1.0 / 64.0);
  CHECK(effective_sample_size(uniform) == doctest::Approx(64.0).epsilon(1e-12));

  VectorXd scaled = VectorXd::Constant(64, 3.7);  // normalization must not matter
  CHECK(effective_sample_size(scaled) == doctest::Approx(64.0).epsilon(1e-12));

  VectorXd two = VectorXd::Zero(10);
  two[2] = 0.5;
  two[7] = 0.5;
  CHECK(effective_sample_size(two) == doctest::Approx(2.0).epsilon(1e-12));

  VectorXd point = VectorXd::Zero(10);
  point[4] = 1.0;
  CHECK(effective_sample_size(point) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)effective_sample_size(VectorXd()), dhglm_error);
  CHECK_THROWS_AS((void)effective_sample_size(VectorXd::Zero(5)), dhglm_error);
  VectorXd neg = VectorXd::Constant(3, 1.0);
  neg[1] = -0.1;
  CHECK_THROWS_AS((void)effective_sample_size(neg), dhglm_error);
}

TEST_CASE("proposal density matches the closed form") {
  VectorXd mean(2);
  mean << 1.0, -2.0;
  MatrixXd cov(2, 2);
  cov << 2.0, 0.3, 0.3, 0.5;
  ProposalState p = make_proposal(ProposalFamily::Gaussian, mean, cov);

  VectorXd x(2);
  x << 0.5, -1.0;
  VectorXd r = x - mean;
  double quad = r.dot(cov.inverse() * r);
  double ref = -0.5 * (2.0 * kLog2Pi + std::log(cov.determinant()) + quad);
  CHECK(p.log_density(x) == doctest::Approx(ref).epsilon(1e-12));

  // integral of the t density over a wide grid is 1 (1-D)
  ProposalState t = make_proposal(ProposalFamily::StudentT, VectorXd::Zero(1),
                                  MatrixXd::Identity(1, 1), 3.0);
  VectorXd grid = VectorXd::LinSpaced(20001, -200.0, 200.0);
  double mass = 0.0;
  double h = grid[1] - grid[0];
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    VectorXd v(1);
    v << grid[i];
    mass += h * std::exp(t.log_density(v));
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));

  CHECK_THROWS_AS((void)make_proposal(ProposalFamily::Gaussian, VectorXd::Zero(2),
                                      MatrixXd::Zero(2, 2)),
                  dhglm_error);
}

TEST_CASE("proposal sampling recovers its own moments") {
  VectorXd mean(2);
  mean << 3.0, -1.0;
  MatrixXd cov(2, 2);
  cov << 1.0, 0.6, 0.6, 2.0;
  ProposalState p = make_proposal(ProposalFamily::Gaussian, mean, cov);
  Rng rng(77, "test-prop-sample");
  const int n = 200000;
  VectorXd m = VectorXd::Zero(2);
  MatrixXd s = MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    VectorXd x = p.sample(rng);
    m += x;
    s += x * x.transpose();
  }
  m /= n;
  s = s / n - m * m.transpose();
  CHECK(m[0] == doctest::Approx(3.0).epsilon(0.01));
  CHECK(m[1] == doctest::Approx(-1.0).epsilon(0.02));
  CHECK(s(0, 1) == doctest::Approx(0.6).epsilon(0.05));
  CHECK(s(1, 1) == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("adapt_proposal equals the hand-computed weighted moments plus ridge") {
  WeightedEnsemble e;
  e.samples.resize(4, 2);
  e.samples << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0;
  e.weights.resize(4);
  e.weights << 0.1, 0.2, 0.3, 0.4;
  e.ess = effective_sample_size(e.weights);
  ProposalState prev = make_proposal(ProposalFamily::Gaussian, VectorXd::Zero(2),
                                     MatrixXd::Identity(2, 2));

  ProposalState next = adapt_proposal(e, prev);

  VectorXd mean = VectorXd::Zero(2);
  for (int i = 0; i < 4; ++i) mean += e.weights[i] * e.samples.row(i).transpose();
  MatrixXd cov = MatrixXd::Zero(2, 2);
  for (int i = 0; i < 4; ++i) {
    VectorXd c = e.samples.row(i).transpose() - mean;
    cov += e.weights[i] * c * c.transpose();
  }
  cov.diagonal().array() += 1e-6 * cov.trace() / 2.0;

  CHECK((next.mean - mean).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((next.cov - cov).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  REQUIRE(next.history.size() == 1);
  CHECK((next.history[0].mean - prev.mean).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("reweighting is invariant to a constant shift of the log target") {
  FnTarget base;
  base.f = [](const VectorXd& t) { return -0.5 * t[0] * t[0]; };
  FnTarget shifted;
  shifted.f = [](const VectorXd& t) { return 123.456 - 0.5 * t[0] * t[0]; };

  AmisConfig cfg = toy_config(1, 42);
  WeightedEnsemble a = run_amis(base, cfg);
  WeightedEnsemble b = run_amis(shifted, cfg);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.ess == doctest::Approx(b.ess).epsilon(1e-12));
}

TEST_CASE("seeded runs replay bit-identically") {
  FnTarget t;
  t.f = [](const VectorXd& x) { return -0.5 * (x[0] - 1.0) * (x[0] - 1.0); };
  AmisConfig cfg = toy_config(1, 9);
  WeightedEnsemble a = run_amis(t, cfg);
  WeightedEnsemble b = run_amis(t, cfg);
  CHECK(a.samples == b.samples);
  CHECK(a.log_targets == b.log_targets);
  CHECK(a.weights == b.weights);
  CHECK(a.ess == b.ess);
}

TEST_CASE("conjugate 1-D toy: posterior mean within Monte Carlo error over 20 seeds") {
  // posterior of mu for y ~ N(mu, 1), mu ~ N(0, 1), given ybar over n obs:
  // N(n ybar / (n+1), 1/(n+1))
  const int n = 5;
  const double ybar = 1.2;
  const double post_mean = n * ybar / (n + 1.0);
  const double post_sd = 1.0 / std::sqrt(n + 1.0);

  FnTarget t;
  t.f = [=](const VectorXd& x) {
    double m = x[0];
    return -0.5 * n * (ybar - m) * (ybar - m) - 0.5 * m * m;
  };

  int covered = 0;
  std::vector<double> err_small, err_big;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    AmisConfig small = toy_config(1, seed, 200, 2, 100);
    WeightedEnsemble es = run_amis(t, small);
    double mean_s = (es.weights.array() * es.samples.col(0).array()).sum();
    err_small.push_back(std::abs(mean_s - post_mean));
    double se = post_sd / std::sqrt(es.ess);
    if (std::abs(mean_s - post_mean) <= 3.0 * se) ++covered;

    AmisConfig big = toy_config(1, seed, 2000, 2, 1000);
    WeightedEnsemble eb = run_amis(t, big);
    double mean_b = (eb.weights.array() * eb.samples.col(0).array()).sum();
    err_big.push_back(std::abs(mean_b - post_mean));
  }
  CHECK(covered >= 17);  // ~99.7% nominal, allow a few boundary cases

  // ten times the samples should shrink the error by ~sqrt(10) in median
  std::sort(err_small.begin(), err_small.end());
  std::sort(err_big.begin(), err_big.end());
  double med_small = 0.5 * (err_small[9] + err_small[10]);
  double med_big = 0.5 * (err_big[9] + err_big[10]);
  CHECK(med_big / med_small < 0.7);
}

TEST_CASE("a bimodal target is covered by the adapted proposal") {
  // equal mixture of N(-3, 0.5^2) and N(3, 0.5^2)
  FnTarget t;
  t.f = [](const VectorXd& x) {
    double a = -0.5 * (x[0] + 3.0) * (x[0] + 3.0) / 0.25;
    double b = -0.5 * (x[0] - 3.0) * (x[0] - 3.0) / 0.25;
    VectorXd v(2);
    v << a, b;
    return log_sum_exp(v);
  };
  AmisConfig cfg = toy_config(1, 13, 2000, 4, 500);
  cfg.init_cov = 25.0 * MatrixXd::Identity(1, 1);
  WeightedEnsemble e = run_amis(t, cfg);

  double mean = (e.weights.array() * e.samples.col(0).array()).sum();
  double m2 = (e.weights.array() * e.samples.col(0).array().square()).sum();
  CHECK(mean == doctest::Approx(0.0).epsilon(0.15));
  // mixture variance = 0.25 + 9
  CHECK(m2 - mean * mean == doctest::Approx(9.25).epsilon(0.1));
  CHECK(e.ess > 500.0);
}

TEST_CASE("run_amis rejects invalid configurations and hopeless proposals") {
  FnTarget t;
  t.f = [](const VectorXd& x) { return -0.5 * x[0] * x[0]; };
  AmisConfig cfg = toy_config(1, 3);
  cfg.n_initial = 0;
  CHECK_THROWS_AS((void)run_amis(t, cfg), dhglm_error);

  FnTarget hopeless;
  hopeless.f = [](const VectorXd&) { return -std::numeric_limits<double>::infinity(); };
  AmisConfig cfg2 = toy_config(1, 3);
  CHECK_THROWS_AS((void)run_amis(hopeless, cfg2), dhglm_error);
}

TEST_CASE("per-stage logs record the growing ensemble") {
  FnTarget t;
  t.f = [](const VectorXd& x) { return -0.5 * x[0] * x[0]; };
  AmisConfig cfg = toy_config(1, 21, 300, 3, 150);
  WeightedEnsemble e = run_amis(t, cfg);
  REQUIRE(e.stage_logs.size() == 4);
  CHECK(e.stage_logs[0].total_samples == 300);
  CHECK(e.stage_logs[3].total_samples == 750);
  for (const auto& log : e.stage_logs) CHECK(log.ess > 0.0);
  CHECK(e.stage_sizes == std::vector<int>{300, 150, 150, 150});
}

TEST_CASE("theta summaries and their low-ESS refusal") {
  WeightedEnsemble e;
  e.samples.resize(4, 1);
  e.samples << 1.0, 2.0, 3.0, 4.0;
  e.weights = VectorXd::Constant(4, 0.25);
  e.ess = 4.0;
  CHECK_THROWS_AS((void)sample_posterior_theta_c(e, {"a"}), dhglm_error);  // ESS <= 10

  WeightedEnsemble big;
  const int m = 1000;
  big.samples.resize(m, 1);
  big.weights = VectorXd::Constant(m, 1.0 / m);
  Rng rng(55, "test-theta-summary");
  for (int i = 0; i < m; ++i) big.samples(i, 0) = rng.normal(2.0, 0.5);
  big.ess = effective_sample_size(big.weights);
  auto s = sample_posterior_theta_c(big, {"a"});
  REQUIRE(s.size() == 1);
  CHECK(s[0].mean == doctest::Approx(2.0).epsilon(0.05));
  CHECK(s[0].sd == doctest::Approx(0.5).epsilon(0.1));
  CHECK(s[0].lo == doctest::Approx(2.0 - 1.96 * 0.5).epsilon(0.1));
  CHECK(s[0].hi == doctest::Approx(2.0 + 1.96 * 0.5).epsilon(0.1));
}

TEST_CASE("weight diagnostic curves: uniform is diagonal, a point mass is a step") {
  WeightedEnsemble uniform;
  const int m = 50;
  uniform.samples.resize(m, 1);
  for (int i = 0; i < m; ++i) uniform.samples(i, 0) = (double)i;
  uniform.weights = VectorXd::Constant(m, 1.0 / m);
  auto curve = weight_diagnostic_curve(uniform, 0);
  double worst = 0.0;
  for (const auto& [p, c] : curve) worst = std::max(worst, std::abs(p - c));
  CHECK(worst == doctest::Approx(0.0).epsilon(1e-12));

  WeightedEnsemble point = uniform;
  point.weights.setZero();
  point.weights[m - 1] = 1.0;  // largest sampled value holds all the weight
  auto step = weight_diagnostic_curve(point, 0);
  CHECK(step[m - 2].second == doctest::Approx(0.0));
  CHECK(step[m - 1].second == doctest::Approx(1.0));
}

TEST_CASE("weight diagnostic curve is near-diagonal on a well-adapted conjugate run") {
  FnTarget t;
  t.f = [](const VectorXd& x) { return -0.5 * (x[0] - 0.7) * (x[0] - 0.7) / 0.04; };
  AmisConfig cfg = toy_config(1, 77, 1000, 2, 500);
  cfg.init_mean = VectorXd::Constant(1, 0.7);
  cfg.init_cov = 0.04 * MatrixXd::Identity(1, 1);
  WeightedEnsemble e = run_amis(t, cfg);
  auto curve = weight_diagnostic_curve(e, 0);
  double worst = 0.0;
  for (const auto& [p, c] : curve) worst = std::max(worst, std::abs(p - c));
  CHECK(worst < 0.05);
}

TEST_CASE("init_proposal_from_data follows the log-reciprocal-variance recipe") {
  VectorXd ones = VectorXd::Ones(3);
  ProposalState p = init_proposal_from_data(ones);
  CHECK(p.mean.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  for (int j = 0; j < 3; ++j) CHECK(p.cov(j, j) == doctest::Approx(0.05));  // floor

  VectorXd s2(2);
  s2 << std::exp(-2.0), std::exp(-4.0);
  ProposalState q = init_proposal_from_data(s2);
  CHECK(q.mean[0] == doctest::Approx(2.0));
  CHECK(q.mean[1] == doctest::Approx(4.0));
  CHECK(q.cov(0, 0) == doctest::Approx(0.1));
  CHECK(q.cov(1, 1) == doctest::Approx(0.2));

  CHECK_THROWS_AS((void)init_proposal_from_data(VectorXd::Zero(2)), dhglm_error);
}

TEST_CASE("permutation search recovers a swapped candidate mean") {
  // target prefers mean (5, -5); candidate arrives swapped
  FnTarget t;
  t.d = 2;
  t.f = [](const VectorXd& x) {
    return -0.5 * ((x[0] - 5.0) * (x[0] - 5.0) + (x[1] + 5.0) * (x[1] + 5.0));
  };
  VectorXd mean(2);
  mean << -5.0, 5.0;
  MatrixXd cov = MatrixXd::Zero(2, 2);
  cov(0, 0) = 1.0;
  cov(1, 1) = 2.0;
  ProposalState cand = make_proposal(ProposalFamily::Gaussian, mean, cov);

  ProposalState best = permutation_search_init(cand, t, 20, 4);
  CHECK(best.mean[0] == doctest::Approx(5.0));
  CHECK(best.mean[1] == doctest::Approx(-5.0));
  // diagonal entries travel with their components
  CHECK(best.cov(0, 0) == doctest::Approx(2.0));
  CHECK(best.cov(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("permutation search keeps the identity under ties") {
  FnTarget t;
  t.d = 2;
  t.f = [](const VectorXd& x) { return -0.5 * (x[0] * x[0] + x[1] * x[1]); };  // exchangeable
  VectorXd mean(2);
  mean << 1.0, -1.0;
  ProposalState cand = make_proposal(ProposalFamily::Gaussian, mean, MatrixXd::Identity(2, 2));
  ProposalState best = permutation_search_init(cand, t, 50, 12);
  CHECK(best.mean[0] == doctest::Approx(1.0));
  CHECK(best.mean[1] == doctest::Approx(-1.0));
}

TEST_CASE("mix_marginals blends per-fit grids by weight") {
  WeightedEnsemble e;
  e.samples.resize(2, 1);
  e.samples << 0.0, 0.0;
  e.weights.resize(2);
  e.weights << 0.25, 0.75;
  e.ess = effective_sample_size(e.weights);
  ConditionalFit f1, f2;
  f1.latent["b"] = CoefSummary{-1.0, 0.5};
  f2.latent["b"] = CoefSummary{1.0, 0.5};
  e.fits = {f1, f2};

  MarginalGrid g = mix_marginals(e, "b", 401);
  g.normalize();
  CHECK(g.mean() == doctest::Approx(0.25 * -1.0 + 0.75 * 1.0).epsilon(1e-3));

  CoefSummary s = mixed_coefficient_summary(e, "b");
  double var = 0.25 * (0.25 + 1.0) + 0.75 * (0.25 + 1.0) - 0.5 * 0.5;
  CHECK(s.mean == doctest::Approx(0.5));
  CHECK(s.sd == doctest::Approx(std::sqrt(var)));

  CHECK_THROWS_AS((void)mix_marginals(e, "nope"), dhglm_error);
}
