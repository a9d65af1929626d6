#include "sviglmm/state.hpp"

#include <iostream>

#include "sviglmm/mathutil.hpp"

namespace sviglmm {

void FitConfig::validate() const {
  if (quadrature_order < 1 || quadrature_order > 100)
    throw ConfigError("quadrature_order must be in [1, 100]");
  if (local_tol <= 0.0) throw ConfigError("local_tol must be positive");
  if (stop_tol <= 0.0) throw ConfigError("stop_tol must be positive");
  if (switch_tol <= 0.0) throw ConfigError("switch_tol must be positive");
  if (damping <= 0.0 || damping > 1.0) throw ConfigError("damping must be in (0, 1]");
  if (max_sweeps < 1) throw ConfigError("max_sweeps must be >= 1");
  if (step_a <= 0.0) throw ConfigError("step_a must be positive");
  if (step_A < 0.0) throw ConfigError("step_A must be nonnegative");
  if (!force_unit_step && (step_alpha <= 0.5 || step_alpha > 1.0))
    throw ConfigError("step_alpha must be in (0.5, 1]");
  if (sigma_beta_scale <= 0.0) throw ConfigError("sigma_beta_scale must be positive");
}

Model prepare_model(Dataset data, Family family, const FitConfig& config,
                    const ColumnClassOverrides& overrides) {
  config.validate();
  Model m;
  m.data = validate_dataset(std::move(data), family);
  m.family = family;
  m.part = classify_columns(m.data, overrides);
  m.rule = hermite_rule(config.quadrature_order);

  GlmFit glm_orig = fit_pooled_glm(m.data, family);
  m.R_hat = kass_prior_guess(m.data, family, glm_orig.beta, config.prior_c);

  m.priors = default_priors(m.data, m.R_hat, config.sigma_beta_scale);
  if (config.prior_nu) m.priors.nu = *config.prior_nu;
  if (config.prior_S) m.priors.S = *config.prior_S;
  m.priors.validate(m.data.p(), m.data.r());

  m.designs =
      build_parametrization(m.data, m.part, config.kind, m.R_hat, glm_orig.beta, family);

  // Move the GLM fit into reordered coordinates for initialization.
  m.glm.beta = Vector(m.part.p());
  m.glm.cov = Matrix(m.part.p(), m.part.p());
  for (Index a = 0; a < m.part.p(); ++a) {
    m.glm.beta[a] = glm_orig.beta[m.part.order[a]];
    for (Index b = 0; b < m.part.p(); ++b)
      m.glm.cov(a, b) = glm_orig.cov(m.part.order[a], m.part.order[b]);
  }
  m.glm.iterations = glm_orig.iterations;
  return m;
}

void initialize_state(const Model& model, GlobalState& global, LocalState& locals) {
  const Index r = model.r();
  const Index n = model.n();

  global.mu_beta = model.glm.beta;
  global.Sigma_beta = model.glm.cov;
  global.nu_D = model.priors.nu + static_cast<double>(n);
  if (global.nu_D > r + 1) {
    global.S_D = (global.nu_D - r - 1) * model.R_hat;
  } else {
    std::cerr << "sviglmm: nu_q(D) <= r + 1 (n = " << n
              << "); initializing S_D = R_hat\n";
    global.S_D = model.R_hat;
  }

  locals.mu.assign(n, Vector());
  locals.Sigma.assign(n, model.R_hat);
  for (Index i = 0; i < n; ++i)
    locals.mu[i] = model.designs[i].W_tilde * global.mu_beta;
}

}  // namespace sviglmm
