#pragma once

#include <cstdint>

#include "dhglm/data.hpp"

namespace dhglm {

// Synthetic datasets matching the model structures the engine targets. Every
// generator draws each column from its own named stream, so adding a column
// never perturbs the others.

// Centered and scaled to unit sample standard deviation.
VectorXd standardize(const VectorXd& v);

// Poisson counts with one random effect per observation whose log-precision
// is a regression on z: y_i ~ Poi(exp(b0 + b1 x_i + u_i)),
// u_i ~ N(0, 1/exp(g0 + g1 z_i)), x ~ U(0,1), z ~ N(0,1).
struct PoissonReParams {
  int n = 1000;
  double beta0 = 1.0, beta1 = 0.25;
  double gamma0 = 0.0, gamma1 = 0.5;
};
Dataset simulate_poisson_re(const PoissonReParams& p, std::uint64_t seed);

// Negative binomial with a regression on the log-sizes:
// y_i ~ NB(mu_i, k_i), log mu = b0 + b1 x, log k = g0 + g1 z~,
// x ~ U(10,20), z ~ U(0,20) standardized before use.
struct NegbinParams {
  int n = 500;
  double beta0 = 1.0, beta1 = 0.25;
  double gamma0 = 0.0, gamma1 = 5.0;
};
Dataset simulate_negbin(const NegbinParams& p, std::uint64_t seed);

// Grouped Gaussian data with a mixed model on the group log-precisions:
// y_ij ~ N(b0 + b1 x_ij, prec exp(g0 + g1 z_i + u_i)), u_i ~ N(0, 1/tau_u),
// x ~ U(0,1), z ~ U(-1,1).
struct GaussianGroupsParams {
  int n_groups = 5;
  int per_group = 500;
  double beta0 = 1.0, beta1 = 0.25;
  double gamma0 = 0.0, gamma1 = 5.0;
  double tau_u = 1.0;
};
Dataset simulate_gaussian_groups(const GaussianGroupsParams& p, std::uint64_t seed);

// Rook-neighbourhood adjacency of a rows x cols lattice.
MatrixXd lattice_adjacency(int rows, int cols);

// Regional count data on a lattice with an expected-count offset and a
// spatial-lag covariate. Deaths are first drawn without the lag term; the
// lag of those preliminary rates (per 1000) then enters the final draw:
//   Poisson: y_i ~ Poi(exp(log births_i + b + rho lag_i + u_i)),
//            u_i ~ N(0, 1/exp(g0 + g1 ibn_i))
//   NB:      y_i ~ NB(exp(log births_i + b + rho lag_i), exp(g0 + g1 ibn_i))
struct SpatialCountsParams {
  int rows = 6, cols = 6;
  bool negbin = false;
  double beta = -4.9, rho = 0.04;
  double gamma0 = 4.2, gamma1 = -0.04;
};
Dataset simulate_spatial_counts(const SpatialCountsParams& p, std::uint64_t seed);

// Longitudinal reaction-time data: per-subject random slopes on day and
// per-subject residual precisions, on the scale of seconds:
// y_ij ~ N(b0 + s_i day_ij, prec exp(g + u_i)), s_i ~ N(slope_mean, slope_sd),
// u_i ~ N(0, 1/tau_u).
struct SleepParams {
  int subjects = 18;
  int days = 10;  // day runs 0..days-1
  double beta0 = 0.25;
  double slope_mean = 0.01, slope_sd = 0.006;
  double gamma = 7.0;
  double tau_u = 2.0;
};
Dataset simulate_sleep(const SleepParams& p, std::uint64_t seed);

}  // namespace dhglm
