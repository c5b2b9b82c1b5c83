#include "dhglm/latent_fitter.hpp"

#include <Eigen/Cholesky>

namespace dhglm {

// ---- MarginalGrid -------------------------------------------------------

void MarginalGrid::normalize() {
  double z = integral();
  if (z <= 0.0) throw dhglm_error("marginal grid has nonpositive mass");
  density /= z;
}

double MarginalGrid::mean() const {
  VectorXd w = trapezoid_weights(x);
  double z = (w.array() * density.array()).sum();
  return (w.array() * density.array() * x.array()).sum() / z;
}

double MarginalGrid::sd() const {
  VectorXd w = trapezoid_weights(x);
  double z = (w.array() * density.array()).sum();
  double m = (w.array() * density.array() * x.array()).sum() / z;
  double m2 = (w.array() * density.array() * x.array().square()).sum() / z;
  return std::sqrt(std::max(0.0, m2 - m * m));
}

double MarginalGrid::mode() const {
  Eigen::Index k = 0;
  density.maxCoeff(&k);
  return x[k];
}

MarginalGrid make_gaussian_grid(double mean, double sd, int points, double half_width) {
  if (sd <= 0.0) throw dhglm_error("gaussian grid requires sd > 0");
  MarginalGrid g;
  g.x = VectorXd::LinSpaced(points, mean - half_width * sd, mean + half_width * sd);
  g.density.resize(points);
  double c = 1.0 / (sd * std::sqrt(2.0 * M_PI));
  for (int i = 0; i < points; ++i) {
    double z = (g.x[i] - mean) / sd;
    g.density[i] = c * std::exp(-0.5 * z * z);
  }
  return g;
}

MonotoneMap exp_map() {
  return {[](double v) { return std::exp(v); }, [](double v) { return std::exp(v); }};
}

MonotoneMap log_map() {
  return {[](double v) { return std::log(v); }, [](double v) { return 1.0 / v; }};
}

MonotoneMap identity_map() {
  return {[](double v) { return v; }, [](double) { return 1.0; }};
}

MarginalGrid transform_marginal(const MarginalGrid& grid, const MonotoneMap& map) {
  Eigen::Index n = grid.x.size();
  VectorXd y(n), d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = map.forward(grid.x[i]);
    double j = map.deriv(grid.x[i]);
    if (j == 0.0 || !std::isfinite(j)) throw dhglm_error("transform has a vanishing derivative");
    d[i] = grid.density[i] / std::abs(j);
  }
  bool increasing = y[n - 1] > y[0];
  MarginalGrid out;
  out.x.resize(n);
  out.density.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = increasing ? i : n - 1 - i;
    out.x[i] = y[k];
    out.density[i] = d[k];
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    if (out.x[i + 1] <= out.x[i]) throw dhglm_error("transform is not strictly monotone on the grid");
  out.scale = grid.scale == MarginalGrid::Scale::LogTransformed ? MarginalGrid::Scale::Identity
                                                                : MarginalGrid::Scale::LogTransformed;
  return out;
}

MarginalGrid ConditionalFit::marginal_grid(const std::string& name, int points) const {
  auto it = marginals.find(name);
  if (it != marginals.end()) return it->second;
  auto jt = latent.find(name);
  if (jt == latent.end()) throw dhglm_error("no marginal named '" + name + "'");
  return make_gaussian_grid(jt->second.mean, std::max(jt->second.sd, 1e-12), points);
}

// ---- likelihood kernels -------------------------------------------------

namespace {

constexpr double kExpCap = 500.0;

inline double safe_exp(double x) { return std::exp(std::min(x, kExpCap)); }

// Per-observation log-likelihood, first and (negated) second derivative with
// respect to the linear predictor.
struct ObsDerivs {
  double ll, g, d;
};

inline ObsDerivs obs_derivs(Family family, double y, double eta, double obs_prec, double nb_size) {
  ObsDerivs o{};
  switch (family) {
    case Family::Gaussian: {
      double r = y - eta;
      o.ll = 0.5 * (std::log(obs_prec) - kLog2Pi) - 0.5 * obs_prec * r * r;
      o.g = obs_prec * r;
      o.d = obs_prec;
      break;
    }
    case Family::Poisson: {
      double mu = safe_exp(eta);
      o.ll = y * eta - mu - std::lgamma(y + 1.0);
      o.g = y - mu;
      o.d = mu;
      break;
    }
    case Family::NegativeBinomial: {
      // written in terms of z = eta - log k so the objective stays concave
      // and finite however far Newton overshoots
      double k = std::clamp(nb_size, 1e-8, 1e8);
      double lk = std::log(k);
      double z = eta - lk;
      double t = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      double s = 1.0 / (1.0 + std::exp(-z));  // mu / (k + mu)
      o.ll = std::lgamma(y + k) - std::lgamma(k) - std::lgamma(y + 1.0) - k * t +
             y * (eta - lk - t);
      o.g = y - (y + k) * s;
      o.d = (y + k) * s * (1.0 - s);
      break;
    }
  }
  return o;
}

// Nuisance values with the free hyperparameter (if any) substituted.
struct Effective {
  VectorXd obs_prec;  // Gaussian
  VectorXd re_prec;   // per-group
};

Effective make_effective(const LatentGaussianSubproblem& sub, std::optional<double> tau) {
  Effective e;
  if (sub.family == Family::Gaussian) {
    if (sub.obs_precision.size() != sub.n_obs())
      throw dhglm_error("gaussian subproblem requires per-observation precisions");
    e.obs_prec = sub.obs_precision;
  }
  if (sub.re) {
    e.re_prec = sub.re->precision;
    if (e.re_prec.size() != sub.re->n_groups)
      e.re_prec = VectorXd::Ones(sub.re->n_groups);
  }
  if (tau) {
    if (!sub.free_hyper) throw dhglm_error("no free hyperparameter declared");
    if (sub.free_hyper->role == FreeHyperparameter::Role::ObservationPrecisionScale) {
      if (sub.family != Family::Gaussian)
        throw dhglm_error("observation-precision hyperparameter requires a Gaussian likelihood");
      e.obs_prec *= *tau;
    } else {
      if (sub.re) e.re_prec.setConstant(*tau);
    }
  }
  return e;
}

struct InnerFit {
  double log_marginal = -std::numeric_limits<double>::infinity();
  VectorXd fixed_mean, fixed_sd;
  VectorXd re_mean, re_sd;
  int iterations = 0;
  bool converged = false;
};

double prior_log_const(const LatentGaussianSubproblem& sub, const Effective& eff) {
  double c = 0.0;
  for (Eigen::Index j = 0; j < sub.n_fixed(); ++j)
    if (sub.prior_precision[j] > 0.0)
      c += 0.5 * (std::log(sub.prior_precision[j]) - kLog2Pi);
  if (sub.re)
    for (int g = 0; g < sub.re->n_groups; ++g) c += 0.5 * (std::log(eff.re_prec[g]) - kLog2Pi);
  return c;
}

double prior_quad(const LatentGaussianSubproblem& sub, const Effective& eff, const VectorXd& beta,
                  const VectorXd& u) {
  double q = 0.0;
  for (Eigen::Index j = 0; j < sub.n_fixed(); ++j) {
    double r = beta[j] - sub.prior_mean[j];
    q += sub.prior_precision[j] * r * r;
  }
  if (sub.re)
    for (int g = 0; g < sub.re->n_groups; ++g) q += eff.re_prec[g] * u[g] * u[g];
  return -0.5 * q;
}

double loading_at(const LatentGaussianSubproblem& sub, Eigen::Index i) {
  if (!sub.re || sub.re->loading.size() == 0) return 1.0;
  return sub.re->loading[i];
}

// Newton with step halving on the arrow-structured system
//   H = [[F, B^T], [B, E]],  E diagonal (one entry per random-effect group).
InnerFit solve_inner(const LatentGaussianSubproblem& sub, const Effective& eff,
                     const InnerFit* warm = nullptr) {
  const Eigen::Index n = sub.n_obs();
  const Eigen::Index p = sub.n_fixed();
  const int q = sub.re ? sub.re->n_groups : 0;

  VectorXd beta = warm && warm->fixed_mean.size() == p ? warm->fixed_mean : sub.prior_mean;
  VectorXd u = warm && warm->re_mean.size() == q ? warm->re_mean : VectorXd::Zero(q);
  VectorXd offset = sub.offset.size() == n ? sub.offset : VectorXd::Zero(n);

  auto predictor = [&](const VectorXd& b, const VectorXd& uu) {
    VectorXd eta = offset + sub.X * b;
    if (sub.re)
      for (Eigen::Index i = 0; i < n; ++i) eta[i] += loading_at(sub, i) * uu[sub.re->group[i]];
    return eta;
  };

  auto loglik = [&](const VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      ll += obs_derivs(sub.family, sub.y[i], eta[i],
                       sub.family == Family::Gaussian ? eff.obs_prec[i] : 0.0,
                       sub.family == Family::NegativeBinomial ? sub.nb_size[i] : 0.0)
                .ll;
    return ll;
  };

  auto objective = [&](const VectorXd& b, const VectorXd& uu) {
    return loglik(predictor(b, uu)) + prior_quad(sub, eff, b, uu);
  };

  InnerFit fit;
  double phi = objective(beta, u);
  if (!std::isfinite(phi)) throw dhglm_error("non-finite objective at the starting point");

  MatrixXd F(p, p), B(q, p);
  VectorXd E(q), grad_f(p), grad_r(q), gvec(n), dvec(n);
  Eigen::LLT<MatrixXd> schur_llt;
  MatrixXd S(p, p);

  auto assemble = [&](const VectorXd& b, const VectorXd& uu) {
    VectorXd eta = predictor(b, uu);
    for (Eigen::Index i = 0; i < n; ++i) {
      ObsDerivs o = obs_derivs(sub.family, sub.y[i], eta[i],
                               sub.family == Family::Gaussian ? eff.obs_prec[i] : 0.0,
                               sub.family == Family::NegativeBinomial ? sub.nb_size[i] : 0.0);
      gvec[i] = o.g;
      dvec[i] = o.d;
    }
    F.setZero();
    B.setZero();
    E.setZero();
    grad_f = sub.X.transpose() * gvec;
    for (Eigen::Index j = 0; j < p; ++j)
      grad_f[j] -= sub.prior_precision[j] * (b[j] - sub.prior_mean[j]);
    F = sub.X.transpose() * dvec.asDiagonal() * sub.X;
    F.diagonal() += sub.prior_precision;
    grad_r.setZero();
    if (sub.re) {
      for (Eigen::Index i = 0; i < n; ++i) {
        int g = sub.re->group[i];
        double z = loading_at(sub, i);
        grad_r[g] += z * gvec[i];
        E[g] += z * z * dvec[i];
        if (p > 0) B.row(g) += z * dvec[i] * sub.X.row(i);
      }
      for (int g = 0; g < q; ++g) {
        grad_r[g] -= eff.re_prec[g] * uu[g];
        E[g] += eff.re_prec[g];
      }
    }
  };

  // Factorize the Schur complement S = F - B^T E^{-1} B of the current H.
  auto factorize = [&]() {
    if (p > 0) {
      S = F;
      if (q > 0) S -= B.transpose() * E.cwiseInverse().asDiagonal() * B;
      schur_llt.compute(S);
      if (schur_llt.info() != Eigen::Success)
        throw dhglm_error("singular posterior precision (collinear design with an improper prior?)");
    }
    for (int g = 0; g < q; ++g)
      if (E[g] <= 0.0) throw dhglm_error("posterior precision not positive definite at the mode");
  };

  int iter = 0;
  for (; iter < sub.max_newton_iterations; ++iter) {
    assemble(beta, u);
    factorize();
    VectorXd delta_f(p), delta_r(q);
    if (p > 0) {
      VectorXd rhs = grad_f;
      if (q > 0) rhs -= B.transpose() * (grad_r.array() / E.array()).matrix();
      delta_f = schur_llt.solve(rhs);
    }
    if (q > 0) {
      VectorXd t = grad_r;
      if (p > 0) t -= B * delta_f;
      delta_r = (t.array() / E.array()).matrix();
    }
    double dmax = 0.0;
    if (p > 0) dmax = std::max(dmax, delta_f.cwiseAbs().maxCoeff());
    if (q > 0) dmax = std::max(dmax, delta_r.cwiseAbs().maxCoeff());
    if (dmax < sub.newton_tolerance) {
      fit.converged = true;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h <= 10; ++h) {
      VectorXd bc = beta + (p > 0 ? (step * delta_f).eval() : VectorXd(p));
      VectorXd uc = u + (q > 0 ? (step * delta_r).eval() : VectorXd(q));
      double phic = objective(bc, uc);
      if (std::isfinite(phic) && phic >= phi - 1e-12) {
        beta = bc;
        u = uc;
        phi = phic;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (step * dmax < sub.newton_tolerance) {
      fit.converged = true;
      ++iter;
      break;
    }
  }
  fit.iterations = iter;
  if (!fit.converged && iter >= sub.max_newton_iterations)
    throw dhglm_error("Newton failed to converge in " + std::to_string(iter) + " iterations");

  // curvature at the accepted mode
  assemble(beta, u);
  factorize();

  double logdet = 0.0;
  MatrixXd Sinv;
  if (p > 0) {
    MatrixXd L = schur_llt.matrixL();
    for (Eigen::Index j = 0; j < p; ++j) logdet += 2.0 * std::log(L(j, j));
    Sinv = schur_llt.solve(MatrixXd::Identity(p, p));
  }
  for (int g = 0; g < q; ++g) logdet += std::log(E[g]);

  double ll = loglik(predictor(beta, u));
  double lp = prior_log_const(sub, eff) + prior_quad(sub, eff, beta, u);
  double d = (double)(p + q);
  fit.log_marginal = ll + lp + 0.5 * d * kLog2Pi - 0.5 * logdet;

  fit.fixed_mean = beta;
  fit.fixed_sd.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) fit.fixed_sd[j] = std::sqrt(Sinv(j, j));
  fit.re_mean = u;
  fit.re_sd.resize(q);
  for (int g = 0; g < q; ++g) {
    double v = 1.0 / E[g];
    if (p > 0) {
      VectorXd bg = B.row(g).transpose();
      v += bg.dot(Sinv * bg) / (E[g] * E[g]);
    }
    fit.re_sd[g] = std::sqrt(v);
  }
  return fit;
}

void fill_fit(const LatentGaussianSubproblem& sub, const InnerFit& in, ConditionalFit& out) {
  out.log_marginal = in.log_marginal;
  out.newton_iterations = in.iterations;
  out.converged = in.converged;
  for (Eigen::Index j = 0; j < sub.n_fixed(); ++j)
    out.latent[sub.coef_names[(size_t)j]] = CoefSummary{in.fixed_mean[j], in.fixed_sd[j]};
  if (sub.re && sub.include_random_effect_summaries)
    for (int g = 0; g < sub.re->n_groups; ++g)
      out.latent[sub.re->name + "[" + std::to_string(g) + "]"] =
          CoefSummary{in.re_mean[g], in.re_sd[g]};
}

// Mode-based Gaussian marginals understate skewness for non-Gaussian
// likelihoods (the latent mode is not the latent mean). For each fixed
// effect we therefore profile: pin the coefficient on a grid with an
// effectively infinite prior precision, re-optimize the remaining latents,
// and read the marginal off the profiled Laplace values. The pin's prior
// normalization and its log-determinant contribution cancel up to O(1/kPin).
void profile_fixed_marginals(const LatentGaussianSubproblem& sub, const Effective& eff,
                             const InnerFit& base, ConditionalFit& out) {
  constexpr double kPin = 1e9;
  const int n_nodes = 15;
  const double half_width = 4.5;

  for (Eigen::Index j = 0; j < sub.n_fixed(); ++j) {
    double sd = base.fixed_sd[j];
    if (!(sd > 0.0) || !std::isfinite(sd))
      throw dhglm_error("degenerate posterior sd for '" + sub.coef_names[(size_t)j] +
                        "'; the curvature at this conditioning point is unusable");
    LatentGaussianSubproblem pinned = sub;
    pinned.prior_precision[j] = kPin;

    VectorXd x = VectorXd::LinSpaced(n_nodes, base.fixed_mean[j] - half_width * sd,
                                     base.fixed_mean[j] + half_width * sd);
    VectorXd g(n_nodes);
    InnerFit warm = base;
    // walk outward from the mode so each solve warm-starts off its neighbor
    std::vector<int> order;
    int mid = n_nodes / 2;
    order.push_back(mid);
    for (int s = 1; s <= mid; ++s) {
      if (mid - s >= 0) order.push_back(mid - s);
      if (mid + s < n_nodes) order.push_back(mid + s);
    }
    InnerFit lower = base, upper = base;
    for (int k : order) {
      InnerFit& start = k < mid ? lower : (k > mid ? upper : warm);
      pinned.prior_mean[j] = x[k];
      start.fixed_mean = start.fixed_mean.size() == sub.n_fixed() ? start.fixed_mean
                                                                  : base.fixed_mean;
      InnerFit in = solve_inner(pinned, eff, &start);
      g[k] = in.log_marginal;
      if (sub.prior_precision[j] > 0.0) {
        double r = x[k] - sub.prior_mean[j];
        g[k] += 0.5 * (std::log(sub.prior_precision[j]) - kLog2Pi) -
                0.5 * sub.prior_precision[j] * r * r;
      }
      if (k < mid)
        lower = in;
      else if (k > mid)
        upper = in;
      else
        lower = upper = in;
    }

    MarginalGrid mg;
    mg.x = x;
    mg.density = (g.array() - g.maxCoeff()).exp().matrix();
    mg.normalize();
    const std::string& name = sub.coef_names[(size_t)j];
    out.latent[name] = CoefSummary{mg.mean(), mg.sd()};
    if (sub.detailed_marginals) out.marginals[name] = mg;
  }
}

void check_shapes(const LatentGaussianSubproblem& sub) {
  if (sub.y.size() == 0) throw dhglm_error("subproblem has no observations");
  if (sub.X.rows() != sub.y.size()) throw dhglm_error("design rows != observations");
  if ((Eigen::Index)sub.coef_names.size() != sub.X.cols())
    throw dhglm_error("coefficient names != design columns");
  if (sub.prior_mean.size() != sub.X.cols() || sub.prior_precision.size() != sub.X.cols())
    throw dhglm_error("prior vectors must match the number of coefficients");
  if (sub.family == Family::NegativeBinomial && sub.nb_size.size() != sub.y.size())
    throw dhglm_error("negative binomial subproblem requires per-observation sizes");
  if (sub.re && sub.re->group.size() != sub.y.size())
    throw dhglm_error("random-effect group index length mismatch");
}

}  // namespace

// ---- public fits --------------------------------------------------------

ConditionalFit fit_gaussian_exact(const LatentGaussianSubproblem& sub) {
  check_shapes(sub);
  if (sub.family != Family::Gaussian)
    throw dhglm_error("fit_gaussian_exact requires a Gaussian likelihood");
  if (sub.free_hyper) throw dhglm_error("fit_gaussian_exact does not handle free hyperparameters");
  Effective eff = make_effective(sub, std::nullopt);
  ConditionalFit fit;
  fill_fit(sub, solve_inner(sub, eff), fit);
  return fit;
}

ConditionalFit fit_laplace(const LatentGaussianSubproblem& sub) {
  check_shapes(sub);
  if (sub.free_hyper) throw dhglm_error("fit_laplace does not handle free hyperparameters");
  Effective eff = make_effective(sub, std::nullopt);
  ConditionalFit fit;
  InnerFit in = solve_inner(sub, eff);
  fill_fit(sub, in, fit);
  if (sub.family != Family::Gaussian) profile_fixed_marginals(sub, eff, in, fit);
  return fit;
}

ConditionalFit fit_with_hyperparameter(const LatentGaussianSubproblem& sub) {
  check_shapes(sub);
  if (!sub.free_hyper) throw dhglm_error("fit_with_hyperparameter requires a free hyperparameter");
  const GammaPrior& prior = sub.free_hyper->prior;
  double log_prior_const = prior.shape * std::log(prior.rate) - std::lgamma(prior.shape);

  // Log posterior kernel of ell = log(tau), including the Jacobian.
  auto eval = [&](double ell, InnerFit* keep) {
    InnerFit in = solve_inner(sub, make_effective(sub, std::exp(ell)));
    if (keep) *keep = in;
    return in.log_marginal + log_prior_const + prior.shape * ell - prior.rate * std::exp(ell);
  };

  // coarse mode search on the log scale
  const int n_coarse = 41;
  VectorXd cl = VectorXd::LinSpaced(n_coarse, -20.0, 20.0);
  VectorXd cg(n_coarse);
  for (int i = 0; i < n_coarse; ++i) cg[i] = eval(cl[i], nullptr);
  Eigen::Index imax = 0;
  cg.maxCoeff(&imax);
  double mode = cl[imax];
  double h = cl[1] - cl[0];
  double sd = 2.0;
  if (imax > 0 && imax + 1 < n_coarse) {
    double curv = (cg[imax + 1] - 2.0 * cg[imax] + cg[imax - 1]) / (h * h);
    if (curv < 0.0) sd = 1.0 / std::sqrt(-curv);
  }
  sd = std::clamp(sd, 0.05, 4.0);

  const int n_grid = 43;
  auto build = [&](double center, double spread, VectorXd& ell, VectorXd& g,
                   std::vector<InnerFit>& fits) {
    ell = VectorXd::LinSpaced(n_grid, center - 6.0 * spread, center + 6.0 * spread);
    g.resize(n_grid);
    fits.assign(n_grid, InnerFit{});
    for (int i = 0; i < n_grid; ++i) g[i] = eval(ell[i], &fits[i]);
  };

  VectorXd ell, g;
  std::vector<InnerFit> fits;
  build(mode, sd, ell, g, fits);

  auto node_mass = [&](const VectorXd& e, const VectorXd& lg, VectorXd& pi) {
    VectorXd w = trapezoid_weights(e);
    double m = lg.maxCoeff();
    pi = (w.array() * (lg.array() - m).exp()).matrix();
    pi /= pi.sum();
  };

  VectorXd pi;
  node_mass(ell, g, pi);
  if (pi[0] > 1e-3 || pi[n_grid - 1] > 1e-3) {
    // re-center once on the first-pass moments
    double m1 = (pi.array() * ell.array()).sum();
    double m2 = (pi.array() * ell.array().square()).sum();
    double sd2 = std::max(std::sqrt(std::max(m2 - m1 * m1, 1e-4)), sd);
    build(m1, sd2 * 1.5, ell, g, fits);
    node_mass(ell, g, pi);
    if (pi[0] > 1e-3 || pi[n_grid - 1] > 1e-3)
      throw dhglm_error(
          "hyperparameter posterior mass escapes the quadrature grid after re-centering; "
          "check the prior and data for '" + sub.free_hyper->name + "'");
  }

  VectorXd w = trapezoid_weights(ell);
  double gmax = g.maxCoeff();
  double logz = gmax + std::log((w.array() * (g.array() - gmax).exp()).sum());

  ConditionalFit fit;
  fit.log_marginal = logz;
  fit.converged = true;
  for (const auto& f : fits) {
    fit.newton_iterations = std::max(fit.newton_iterations, f.iterations);
    fit.converged = fit.converged && f.converged;
  }

  MarginalGrid hyper;
  hyper.x = ell;
  hyper.density = (g.array() - logz).exp().matrix();
  hyper.scale = MarginalGrid::Scale::LogTransformed;
  hyper.normalize();
  fit.marginals["log_" + sub.free_hyper->name] = hyper;

  // coefficient marginals mixed over the grid
  Eigen::Index p = sub.n_fixed();
  for (Eigen::Index j = 0; j < p; ++j) {
    double m = 0.0, v = 0.0;
    for (int k = 0; k < n_grid; ++k) m += pi[k] * fits[(size_t)k].fixed_mean[j];
    for (int k = 0; k < n_grid; ++k) {
      const InnerFit& f = fits[(size_t)k];
      v += pi[k] * (f.fixed_sd[j] * f.fixed_sd[j] +
                    (f.fixed_mean[j] - m) * (f.fixed_mean[j] - m));
    }
    const std::string& name = sub.coef_names[(size_t)j];
    fit.latent[name] = CoefSummary{m, std::sqrt(v)};
    if (sub.detailed_marginals) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int k = 0; k < n_grid; ++k) {
        const InnerFit& f = fits[(size_t)k];
        lo = std::min(lo, f.fixed_mean[j] - 6.0 * f.fixed_sd[j]);
        hi = std::max(hi, f.fixed_mean[j] + 6.0 * f.fixed_sd[j]);
      }
      MarginalGrid mg;
      mg.x = VectorXd::LinSpaced(101, lo, hi);
      mg.density = VectorXd::Zero(101);
      for (int k = 0; k < n_grid; ++k) {
        const InnerFit& f = fits[(size_t)k];
        double s = std::max(f.fixed_sd[j], 1e-12);
        double c = pi[k] / (s * std::sqrt(2.0 * M_PI));
        for (int t = 0; t < 101; ++t) {
          double z = (mg.x[t] - f.fixed_mean[j]) / s;
          mg.density[t] += c * std::exp(-0.5 * z * z);
        }
      }
      fit.marginals[name] = mg;
    }
  }
  if (sub.re && sub.include_random_effect_summaries) {
    for (int gr = 0; gr < sub.re->n_groups; ++gr) {
      double m = 0.0, v = 0.0;
      for (int k = 0; k < n_grid; ++k) m += pi[k] * fits[(size_t)k].re_mean[gr];
      for (int k = 0; k < n_grid; ++k) {
        const InnerFit& f = fits[(size_t)k];
        v += pi[k] * (f.re_sd[gr] * f.re_sd[gr] + (f.re_mean[gr] - m) * (f.re_mean[gr] - m));
      }
      fit.latent[sub.re->name + "[" + std::to_string(gr) + "]"] = CoefSummary{m, std::sqrt(v)};
    }
  }
  return fit;
}

ConditionalFit fit_subproblem(const LatentGaussianSubproblem& sub) {
  if (sub.free_hyper) return fit_with_hyperparameter(sub);
  if (sub.family == Family::Gaussian) return fit_gaussian_exact(sub);
  return fit_laplace(sub);
}

double penalized_objective(const LatentGaussianSubproblem& sub, const VectorXd& latent) {
  check_shapes(sub);
  Effective eff = make_effective(sub, std::nullopt);
  Eigen::Index p = sub.n_fixed();
  int q = sub.re ? sub.re->n_groups : 0;
  if (latent.size() != p + q) throw dhglm_error("latent vector has the wrong dimension");
  VectorXd beta = latent.head(p), u = latent.tail(q);
  VectorXd offset = sub.offset.size() == sub.n_obs() ? sub.offset : VectorXd::Zero(sub.n_obs());
  VectorXd eta = offset + sub.X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < sub.n_obs(); ++i) {
    double e = eta[i];
    if (sub.re) e += loading_at(sub, i) * u[sub.re->group[i]];
    ll += obs_derivs(sub.family, sub.y[i], e,
                     sub.family == Family::Gaussian ? eff.obs_prec[i] : 0.0,
                     sub.family == Family::NegativeBinomial ? sub.nb_size[i] : 0.0)
              .ll;
  }
  return ll + prior_quad(sub, eff, beta, u);
}

VectorXd penalized_gradient(const LatentGaussianSubproblem& sub, const VectorXd& latent) {
  check_shapes(sub);
  Effective eff = make_effective(sub, std::nullopt);
  Eigen::Index p = sub.n_fixed();
  int q = sub.re ? sub.re->n_groups : 0;
  VectorXd beta = latent.head(p), u = latent.tail(q);
  VectorXd offset = sub.offset.size() == sub.n_obs() ? sub.offset : VectorXd::Zero(sub.n_obs());
  VectorXd grad = VectorXd::Zero(p + q);
  for (Eigen::Index i = 0; i < sub.n_obs(); ++i) {
    double e = offset[i] + sub.X.row(i).dot(beta);
    double z = 1.0;
    if (sub.re) {
      z = loading_at(sub, i);
      e += z * u[sub.re->group[i]];
    }
    ObsDerivs o = obs_derivs(sub.family, sub.y[i], e,
                             sub.family == Family::Gaussian ? eff.obs_prec[i] : 0.0,
                             sub.family == Family::NegativeBinomial ? sub.nb_size[i] : 0.0);
    grad.head(p) += o.g * sub.X.row(i).transpose();
    if (sub.re) grad[p + sub.re->group[i]] += o.g * z;
  }
  for (Eigen::Index j = 0; j < p; ++j)
    grad[j] -= sub.prior_precision[j] * (beta[j] - sub.prior_mean[j]);
  for (int g = 0; g < q; ++g) grad[p + g] -= eff.re_prec[g] * u[g];
  return grad;
}

}  // namespace dhglm
