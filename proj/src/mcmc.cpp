#include "dhglm/mcmc.hpp"

#include <cmath>

namespace dhglm {

namespace {

struct StepState {
  double step;
  long proposed = 0, accepted = 0;        // post burn-in
  long win_proposed = 0, win_accepted = 0;  // current adaptation window

  void adapt() {
    if (win_proposed < 50) return;
    double acc = (double)win_accepted / (double)win_proposed;
    step *= std::exp(acc - 0.35);
    step = std::min(50.0, std::max(1e-4, step));
    win_proposed = win_accepted = 0;
  }
  double rate() const { return proposed ? (double)accepted / (double)proposed : 0.0; }
};

}  // namespace

McmcChain run_mcmc(const DhglmSpec& spec, const Dataset& data, const McmcConfig& config) {
  validate_against(spec, data);
  if (config.burn_in < 0 || config.iterations < 1 || config.thin < 1)
    throw dhglm_error("mcmc: invalid burn-in/iterations/thinning");
  int kept = config.iterations / config.thin;
  if (kept < 1) throw dhglm_error("mcmc: thinning leaves no post burn-in draws");

  const Family fam = spec.family;
  const bool disp_per_group = fam != Family::NegativeBinomial;
  const MatrixXd X = build_design(spec.mean, data, false);
  const MatrixXd Xd = build_design(spec.dispersion, data, disp_per_group);
  const Eigen::Index n = data.n();
  const int G = data.n_groups;

  std::vector<std::vector<Eigen::Index>> members((size_t)G);
  for (Eigen::Index i = 0; i < n; ++i) members[(size_t)data.group[i]].push_back(i);

  VectorXd loading = VectorXd::Ones(n);
  const bool has_u = spec.mean.random_effect.has_value();
  const bool u_free_tau =
      has_u && spec.mean.random_effect->precision_model == RePrecisionModel::FreeScalar;
  if (has_u && !spec.mean.random_effect->loading_column.empty())
    loading = data.col(spec.mean.random_effect->loading_column);
  const bool has_v = spec.dispersion.random_effect.has_value();

  VectorXd offset = VectorXd::Zero(n);
  if (spec.mean.use_dataset_offset) offset = *data.offset;

  // ---- state ----
  const int p = (int)X.cols(), q = (int)Xd.cols();
  VectorXd beta(p), gamma(q);
  VectorXd bm(p), bq(p), gm(q), gq(q);  // normal prior means/precisions
  for (int j = 0; j < p; ++j) {
    NormalPrior pr = spec.prior_for(spec.mean.terms[(size_t)j].coef_name);
    bm[j] = pr.mean;
    bq[j] = pr.precision;
    beta[j] = pr.mean;
  }
  for (int j = 0; j < q; ++j) {
    NormalPrior pr = spec.prior_for(spec.dispersion.terms[(size_t)j].coef_name);
    gm[j] = pr.mean;
    gq[j] = pr.precision;
    gamma[j] = pr.mean;
  }
  VectorXd u = VectorXd::Zero(has_u ? G : 0);
  VectorXd v = VectorXd::Zero(has_v ? G : 0);
  double lt_u = 0.0;  // log precision of the mean effects (free-scalar case)
  double lt_v = 0.0;  // log precision of the dispersion effects

  VectorXd eta = X * beta + offset;
  if (has_u)
    for (Eigen::Index i = 0; i < n; ++i) eta[i] += loading[i] * u[data.group[i]];
  VectorXd eta_d = Xd * gamma;  // per group, or per observation for NB
  if (has_v) {
    if (disp_per_group)
      eta_d += v;
    else
      for (Eigen::Index i = 0; i < n; ++i) eta_d[i] += v[data.group[i]];
  }

  // log-likelihood of observation i given its mean predictor and dispersion
  // predictor value (additive constants in y are dropped)
  auto obs_ll = [&](Eigen::Index i, double e, double ed) {
    switch (fam) {
      case Family::Gaussian: {
        double r = data.y[i] - e;
        return 0.5 * ed - 0.5 * std::exp(ed) * r * r;
      }
      case Family::Poisson:
        return data.y[i] * e - std::exp(e);
      case Family::NegativeBinomial: {
        double k = std::exp(ed);
        double mu = std::exp(e);
        return std::lgamma(data.y[i] + k) - std::lgamma(k) + k * std::log(k) + data.y[i] * e -
               (data.y[i] + k) * std::log(k + mu);
      }
    }
    return 0.0;
  };
  auto disp_at = [&](Eigen::Index i) { return disp_per_group ? eta_d[data.group[i]] : eta_d[i]; };
  // log precision of u_g under the current state
  auto u_log_prec = [&](int g) { return u_free_tau ? lt_u : eta_d[g]; };

  auto full_log_post = [&]() {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) lp += obs_ll(i, eta[i], disp_at(i));
    for (int j = 0; j < p; ++j) lp -= 0.5 * bq[j] * (beta[j] - bm[j]) * (beta[j] - bm[j]);
    for (int j = 0; j < q; ++j) lp -= 0.5 * gq[j] * (gamma[j] - gm[j]) * (gamma[j] - gm[j]);
    if (has_u)
      for (int g = 0; g < G; ++g)
        lp += 0.5 * u_log_prec(g) - 0.5 * std::exp(u_log_prec(g)) * u[g] * u[g];
    if (u_free_tau) {
      GammaPrior pr = spec.mean.random_effect->precision_prior;
      lp += pr.shape * lt_u - pr.rate * std::exp(lt_u);
    }
    if (has_v) {
      for (int g = 0; g < G; ++g) lp += 0.5 * lt_v - 0.5 * std::exp(lt_v) * v[g] * v[g];
      GammaPrior pr = spec.dispersion.random_effect->precision_prior;
      lp += pr.shape * lt_v - pr.rate * std::exp(lt_v);
    }
    return lp;
  };
  if (!std::isfinite(full_log_post()))
    throw dhglm_error("mcmc: log posterior is not finite at the initial state");

  // ---- steps / bookkeeping ----
  std::vector<StepState> beta_st((size_t)p, {config.coef_step});
  std::vector<StepState> gamma_st((size_t)q, {config.coef_step});
  std::vector<StepState> u_st((size_t)(has_u ? G : 0), {config.effect_step});
  std::vector<StepState> v_st((size_t)(has_v ? G : 0), {config.effect_step});
  StepState ltu_st{config.log_precision_step}, ltv_st{config.log_precision_step};

  Rng rng(config.seed, "mcmc");

  auto try_accept = [&](double delta, StepState& st, bool burning) {
    bool ok = delta >= 0.0 || std::log(rng.uniform()) < delta;
    if (burning) {
      ++st.win_proposed;
      if (ok) ++st.win_accepted;
      if (config.adapt_during_burn_in) st.adapt();
    } else {
      ++st.proposed;
      if (ok) ++st.accepted;
    }
    return ok;
  };

  auto update_beta = [&](int j, bool burning) {
    double d = beta_st[(size_t)j].step * rng.normal();
    double nb = beta[j] + d;
    double delta = -0.5 * bq[j] * ((nb - bm[j]) * (nb - bm[j]) - (beta[j] - bm[j]) * (beta[j] - bm[j]));
    for (Eigen::Index i = 0; i < n; ++i) {
      double e2 = eta[i] + X(i, j) * d;
      delta += obs_ll(i, e2, disp_at(i)) - obs_ll(i, eta[i], disp_at(i));
    }
    if (try_accept(delta, beta_st[(size_t)j], burning)) {
      beta[j] = nb;
      eta += X.col(j) * d;
    }
  };

  auto update_u = [&](int g, bool burning) {
    double d = u_st[(size_t)g].step * rng.normal();
    double nu = u[g] + d;
    double tau = std::exp(u_log_prec(g));
    double delta = -0.5 * tau * (nu * nu - u[g] * u[g]);
    for (Eigen::Index i : members[(size_t)g]) {
      double e2 = eta[i] + loading[i] * d;
      delta += obs_ll(i, e2, disp_at(i)) - obs_ll(i, eta[i], disp_at(i));
    }
    if (try_accept(delta, u_st[(size_t)g], burning)) {
      u[g] = nu;
      for (Eigen::Index i : members[(size_t)g]) eta[i] += loading[i] * d;
    }
  };

  auto update_lt_u = [&](bool burning) {
    double d = ltu_st.step * rng.normal();
    double nlt = lt_u + d;
    GammaPrior pr = spec.mean.random_effect->precision_prior;
    double delta = pr.shape * d - pr.rate * (std::exp(nlt) - std::exp(lt_u));
    double dtau = std::exp(nlt) - std::exp(lt_u);
    for (int g = 0; g < G; ++g) delta += 0.5 * d - 0.5 * dtau * u[g] * u[g];
    if (try_accept(delta, ltu_st, burning)) lt_u = nlt;
  };

  // change the dispersion predictor by `shift` (per group, or per observation
  // for NB) and return the induced change in the log posterior
  auto disp_shift_delta = [&](const VectorXd& shift) {
    double delta = 0.0;
    if (fam == Family::Poisson) {
      // only the random-effect prior sees the dispersion predictor
      if (!u_free_tau)
        for (int g = 0; g < G; ++g)
          delta += 0.5 * shift[g] - 0.5 * (std::exp(eta_d[g] + shift[g]) - std::exp(eta_d[g])) * u[g] * u[g];
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        double ed = disp_at(i);
        double s = disp_per_group ? shift[data.group[i]] : shift[i];
        if (s != 0.0) delta += obs_ll(i, eta[i], ed + s) - obs_ll(i, eta[i], ed);
      }
    }
    return delta;
  };

  auto update_gamma = [&](int j, bool burning) {
    double d = gamma_st[(size_t)j].step * rng.normal();
    double ng = gamma[j] + d;
    double delta = -0.5 * gq[j] * ((ng - gm[j]) * (ng - gm[j]) - (gamma[j] - gm[j]) * (gamma[j] - gm[j]));
    delta += disp_shift_delta(Xd.col(j) * d);
    if (try_accept(delta, gamma_st[(size_t)j], burning)) {
      gamma[j] = ng;
      eta_d += Xd.col(j) * d;
    }
  };

  auto update_v = [&](int g, bool burning) {
    double d = v_st[(size_t)g].step * rng.normal();
    double nv = v[g] + d;
    double delta = -0.5 * std::exp(lt_v) * (nv * nv - v[g] * v[g]);
    if (fam == Family::Poisson) {
      if (!u_free_tau)
        delta += 0.5 * d - 0.5 * (std::exp(eta_d[g] + d) - std::exp(eta_d[g])) * u[g] * u[g];
    } else if (disp_per_group) {
      for (Eigen::Index i : members[(size_t)g])
        delta += obs_ll(i, eta[i], eta_d[g] + d) - obs_ll(i, eta[i], eta_d[g]);
    } else {
      for (Eigen::Index i : members[(size_t)g])
        delta += obs_ll(i, eta[i], eta_d[i] + d) - obs_ll(i, eta[i], eta_d[i]);
    }
    if (try_accept(delta, v_st[(size_t)g], burning)) {
      v[g] = nv;
      if (disp_per_group)
        eta_d[g] += d;
      else
        for (Eigen::Index i : members[(size_t)g]) eta_d[i] += d;
    }
  };

  auto update_lt_v = [&](bool burning) {
    double d = ltv_st.step * rng.normal();
    double nlt = lt_v + d;
    GammaPrior pr = spec.dispersion.random_effect->precision_prior;
    double delta = pr.shape * d - pr.rate * (std::exp(nlt) - std::exp(lt_v));
    double dtau = std::exp(nlt) - std::exp(lt_v);
    for (int g = 0; g < G; ++g) delta += 0.5 * d - 0.5 * dtau * v[g] * v[g];
    if (try_accept(delta, ltv_st, burning)) lt_v = nlt;
  };

  auto sweep = [&](bool burning) {
    for (int j = 0; j < p; ++j) update_beta(j, burning);
    if (has_u)
      for (int g = 0; g < G; ++g) update_u(g, burning);
    if (u_free_tau) update_lt_u(burning);
    for (int j = 0; j < q; ++j) update_gamma(j, burning);
    if (has_v) {
      for (int g = 0; g < G; ++g) update_v(g, burning);
      update_lt_v(burning);
    }
  };

  // ---- run ----
  for (int it = 0; it < config.burn_in; ++it) sweep(true);

  McmcChain out;
  out.kept = kept;
  auto reserve = [&](const std::string& name) { out.draws[name] = VectorXd(kept); };
  for (int j = 0; j < p; ++j) reserve(spec.mean.terms[(size_t)j].coef_name);
  for (int j = 0; j < q; ++j) reserve(spec.dispersion.terms[(size_t)j].coef_name);
  if (u_free_tau) reserve("tau_" + spec.mean.random_effect->name);
  if (has_v) reserve("tau_" + spec.dispersion.random_effect->name);
  if (config.store_random_effects) {
    if (has_u)
      for (int g = 0; g < G; ++g)
        reserve(spec.mean.random_effect->name + "[" + std::to_string(g) + "]");
    if (has_v)
      for (int g = 0; g < G; ++g)
        reserve(spec.dispersion.random_effect->name + "[" + std::to_string(g) + "]");
  }

  int stored = 0;
  for (int it = 0; it < config.iterations; ++it) {
    sweep(false);
    if ((it + 1) % config.thin != 0 || stored >= kept) continue;
    for (int j = 0; j < p; ++j) out.draws[spec.mean.terms[(size_t)j].coef_name][stored] = beta[j];
    for (int j = 0; j < q; ++j)
      out.draws[spec.dispersion.terms[(size_t)j].coef_name][stored] = gamma[j];
    if (u_free_tau) out.draws["tau_" + spec.mean.random_effect->name][stored] = std::exp(lt_u);
    if (has_v) out.draws["tau_" + spec.dispersion.random_effect->name][stored] = std::exp(lt_v);
    if (config.store_random_effects) {
      if (has_u)
        for (int g = 0; g < G; ++g)
          out.draws[spec.mean.random_effect->name + "[" + std::to_string(g) + "]"][stored] = u[g];
      if (has_v)
        for (int g = 0; g < G; ++g)
          out.draws[spec.dispersion.random_effect->name + "[" + std::to_string(g) + "]"][stored] = v[g];
    }
    ++stored;
  }

  for (int j = 0; j < p; ++j)
    out.acceptance[spec.mean.terms[(size_t)j].coef_name] = beta_st[(size_t)j].rate();
  for (int j = 0; j < q; ++j)
    out.acceptance[spec.dispersion.terms[(size_t)j].coef_name] = gamma_st[(size_t)j].rate();
  if (has_u) {
    double acc = 0.0;
    for (const auto& s : u_st) acc += s.rate();
    out.acceptance[spec.mean.random_effect->name] = acc / G;
  }
  if (u_free_tau) out.acceptance["tau_" + spec.mean.random_effect->name] = ltu_st.rate();
  if (has_v) {
    double acc = 0.0;
    for (const auto& s : v_st) acc += s.rate();
    out.acceptance[spec.dispersion.random_effect->name] = acc / G;
    out.acceptance["tau_" + spec.dispersion.random_effect->name] = ltv_st.rate();
  }
  return out;
}

std::vector<McmcParamSummary> chain_summary(const McmcChain& chain) {
  std::vector<McmcParamSummary> out;
  for (const auto& [name, draws] : chain.draws) {
    McmcParamSummary s;
    s.name = name;
    s.mean = draws.mean();
    s.sd = std::sqrt((draws.array() - s.mean).square().sum() / std::max<Eigen::Index>(1, draws.size() - 1));
    VectorXd w = VectorXd::Ones(draws.size());
    s.lo = weighted_quantile(draws, w, 0.025);
    s.hi = weighted_quantile(draws, w, 0.975);
    out.push_back(std::move(s));
  }
  return out;
}

VectorXd random_walk_chain(const std::function<double(double)>& log_density, double init,
                           double step, int burn_in, int iterations, int thin, Rng& rng) {
  if (iterations < 1 || thin < 1 || iterations / thin < 1)
    throw dhglm_error("random_walk_chain: no draws would be kept");
  double x = init, lx = log_density(init);
  if (!std::isfinite(lx)) throw dhglm_error("random_walk_chain: log density not finite at init");
  VectorXd out(iterations / thin);
  int stored = 0;
  for (int it = -burn_in; it < iterations; ++it) {
    double xp = x + step * rng.normal();
    double lp = log_density(xp);
    if (lp - lx >= 0.0 || std::log(rng.uniform()) < lp - lx) {
      x = xp;
      lx = lp;
    }
    if (it >= 0 && (it + 1) % thin == 0 && stored < out.size()) out[stored++] = x;
  }
  return out;
}

}  // namespace dhglm
