#include "dhglm/sim_data.hpp"

#include "dhglm/rng.hpp"

namespace dhglm {

VectorXd standardize(const VectorXd& v) {
  if (v.size() < 2) throw dhglm_error("standardize: need at least two values");
  double m = v.mean();
  double sd = std::sqrt((v.array() - m).square().sum() / (v.size() - 1));
  if (!(sd > 0.0)) throw dhglm_error("standardize: zero variance");
  return (v.array() - m) / sd;
}

namespace {

VectorXi identity_groups(int n) {
  VectorXi g(n);
  for (int i = 0; i < n; ++i) g[i] = i;
  return g;
}

}  // namespace

Dataset simulate_poisson_re(const PoissonReParams& p, std::uint64_t seed) {
  if (p.n < 1) throw dhglm_error("simulate_poisson_re: n must be positive");
  Rng rx(seed, "sim-x"), rz(seed, "sim-z"), ru(seed, "sim-u"), ry(seed, "sim-y");
  Dataset d;
  d.y.resize(p.n);
  VectorXd x(p.n), z(p.n);
  for (int i = 0; i < p.n; ++i) {
    x[i] = rx.uniform();
    z[i] = rz.normal();
    double tau = std::exp(p.gamma0 + p.gamma1 * z[i]);
    double u = ru.normal(0.0, 1.0 / std::sqrt(tau));
    d.y[i] = (double)ry.poisson(std::exp(p.beta0 + p.beta1 * x[i] + u));
  }
  d.cols["x"] = x;
  d.cols["z"] = z;
  d.group = identity_groups(p.n);
  d.n_groups = p.n;
  d.provenance = "simulate_poisson_re";
  return d;
}

Dataset simulate_negbin(const NegbinParams& p, std::uint64_t seed) {
  if (p.n < 2) throw dhglm_error("simulate_negbin: n must be at least 2");
  Rng rx(seed, "sim-x"), rz(seed, "sim-z"), ry(seed, "sim-y");
  Dataset d;
  d.y.resize(p.n);
  VectorXd x(p.n), z(p.n);
  for (int i = 0; i < p.n; ++i) {
    x[i] = rx.uniform(10.0, 20.0);
    z[i] = rz.uniform(0.0, 20.0);
  }
  z = standardize(z);
  for (int i = 0; i < p.n; ++i) {
    double mu = std::exp(p.beta0 + p.beta1 * x[i]);
    double k = std::exp(p.gamma0 + p.gamma1 * z[i]);
    d.y[i] = (double)ry.neg_binomial(mu, k);
  }
  d.cols["x"] = x;
  d.cols["z"] = z;
  d.group = identity_groups(p.n);
  d.n_groups = p.n;
  d.provenance = "simulate_negbin";
  return d;
}

Dataset simulate_gaussian_groups(const GaussianGroupsParams& p, std::uint64_t seed) {
  if (p.n_groups < 1 || p.per_group < 1)
    throw dhglm_error("simulate_gaussian_groups: group counts must be positive");
  Rng rx(seed, "sim-x"), rz(seed, "sim-z"), ru(seed, "sim-u"), ry(seed, "sim-y");
  int n = p.n_groups * p.per_group;
  Dataset d;
  d.y.resize(n);
  VectorXd x(n), z(p.n_groups);
  VectorXi g(n);
  for (int i = 0; i < p.n_groups; ++i) z[i] = rz.uniform(-1.0, 1.0);
  for (int i = 0; i < p.n_groups; ++i) {
    double u = ru.normal(0.0, 1.0 / std::sqrt(p.tau_u));
    double sd = 1.0 / std::sqrt(std::exp(p.gamma0 + p.gamma1 * z[i] + u));
    for (int j = 0; j < p.per_group; ++j) {
      int row = i * p.per_group + j;
      x[row] = rx.uniform();
      g[row] = i;
      d.y[row] = ry.normal(p.beta0 + p.beta1 * x[row], sd);
    }
  }
  d.cols["x"] = x;
  d.group_cols["z"] = z;
  d.group = g;
  d.n_groups = p.n_groups;
  d.provenance = "simulate_gaussian_groups";
  return d;
}

MatrixXd lattice_adjacency(int rows, int cols) {
  if (rows < 1 || cols < 1) throw dhglm_error("lattice_adjacency: empty lattice");
  if ((long)rows * cols < 2) throw dhglm_error("lattice_adjacency: a single cell has no neighbors");
  int n = rows * cols;
  MatrixXd a = MatrixXd::Zero(n, n);
  auto id = [&](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (r + 1 < rows) a(id(r, c), id(r + 1, c)) = a(id(r + 1, c), id(r, c)) = 1.0;
      if (c + 1 < cols) a(id(r, c), id(r, c + 1)) = a(id(r, c + 1), id(r, c)) = 1.0;
    }
  return a;
}

Dataset simulate_spatial_counts(const SpatialCountsParams& p, std::uint64_t seed) {
  MatrixXd W = row_standardize(lattice_adjacency(p.rows, p.cols));
  int n = p.rows * p.cols;
  Rng rb(seed, "sim-births"), ri(seed, "sim-ibn"), ru(seed, "sim-u"), ry0(seed, "sim-y0"),
      ry(seed, "sim-y");

  VectorXd births(n), ibn(n), u(n);
  for (int i = 0; i < n; ++i) {
    births[i] = std::floor(rb.uniform(1000.0, 10000.0));
    ibn[i] = ri.uniform(10.0, 70.0);
    double tau = std::exp(p.gamma0 + p.gamma1 * ibn[i]);
    u[i] = ru.normal(0.0, 1.0 / std::sqrt(tau));
  }

  // preliminary draw without the spatial term fixes the lag covariate
  VectorXd rates(n);
  for (int i = 0; i < n; ++i) {
    double mu = births[i] * std::exp(p.beta + (p.negbin ? 0.0 : u[i]));
    double k = std::exp(p.gamma0 + p.gamma1 * ibn[i]);
    double y0 = p.negbin ? (double)ry0.neg_binomial(mu, k) : (double)ry0.poisson(mu);
    rates[i] = 1000.0 * y0 / births[i];
  }
  VectorXd lag = W * rates;

  Dataset d;
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    double mu = births[i] * std::exp(p.beta + p.rho * lag[i] + (p.negbin ? 0.0 : u[i]));
    double k = std::exp(p.gamma0 + p.gamma1 * ibn[i]);
    d.y[i] = p.negbin ? (double)ry.neg_binomial(mu, k) : (double)ry.poisson(mu);
  }
  d.cols["lag_rates"] = lag;
  d.cols["ibn"] = ibn;
  d.cols["births"] = births;
  d.offset = births.array().log().matrix();
  d.W = W;
  d.group = identity_groups(n);
  d.n_groups = n;
  d.provenance = p.negbin ? "simulate_spatial_counts (negbin)" : "simulate_spatial_counts (poisson)";
  return d;
}

Dataset simulate_sleep(const SleepParams& p, std::uint64_t seed) {
  if (p.subjects < 1 || p.days < 2) throw dhglm_error("simulate_sleep: need >= 2 days per subject");
  Rng rs(seed, "sim-slope"), ru(seed, "sim-u"), ry(seed, "sim-y");
  int n = p.subjects * p.days;
  Dataset d;
  d.y.resize(n);
  VectorXd day(n);
  VectorXi g(n);
  for (int i = 0; i < p.subjects; ++i) {
    double slope = rs.normal(p.slope_mean, p.slope_sd);
    double u = ru.normal(0.0, 1.0 / std::sqrt(p.tau_u));
    double sd = 1.0 / std::sqrt(std::exp(p.gamma + u));
    for (int j = 0; j < p.days; ++j) {
      int row = i * p.days + j;
      day[row] = j;
      g[row] = i;
      d.y[row] = ry.normal(p.beta0 + slope * j, sd);
    }
  }
  d.cols["day"] = day;
  d.group = g;
  d.n_groups = p.subjects;
  d.provenance = "simulate_sleep";
  return d;
}

}  // namespace dhglm
