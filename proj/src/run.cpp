#include "sviglmm/run.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "sviglmm/mathutil.hpp"
#include "sviglmm/ncvmp.hpp"

namespace sviglmm {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return Matrix(0, 0);
  const auto cols = j.at(0).size();
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Index>(i), static_cast<Index>(k)) = j.at(i).at(k).get<double>();
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j.at(i).get<double>();
  return v;
}

}  // namespace

RunOutput run_fit(Dataset data, const ModelConfig& config, bool verbose) {
  config.validate();
  Model model = prepare_model(std::move(data), config.family, config.fit,
                              config.column_classes);
  if (config.fit.refine_tuning) refine_tuning(model, config.fit);
  if (verbose)
    std::cerr << "sviglmm: n = " << model.n() << " clusters, p = " << model.p()
              << ", r = " << model.r() << ", " << parametrization_name(config.fit.kind)
              << " parametrization\n";

  FitResult fit = config.fit.stochastic ? fit_svi(model, config.fit, config.checkpoint_path)
                                        : fit_ncvmp(model, config.fit);
  if (verbose) {
    for (const auto& row : fit.trace)
      std::cerr << "sweep " << row.sweep << (row.stochastic ? " [svi]" : " [vmp]")
                << "  L = " << row.lower_bound << "\n";
    std::cerr << "converged = " << (fit.converged ? "yes" : "no") << " in " << fit.sweeps
              << " sweeps, " << fit.seconds << " s\n";
  }

  RunOutput out;
  out.config = config;
  out.family = model.family;
  out.x_names = model.data.x_names;
  out.z_cols = model.data.z_cols;
  for (const auto& c : model.data.clusters) out.cluster_ids.push_back(c.id);
  out.part = model.part;
  for (const auto& d : model.designs) out.W.push_back(d.W);
  out.R_hat = model.R_hat;
  out.prior_nu = model.priors.nu;
  out.prior_S = model.priors.S;
  out.sigma_beta_scale = config.fit.sigma_beta_scale;
  for (Index i = 0; i < model.n(); ++i)
    out.u_mean.push_back(fit.locals.mu[i] - model.designs[i].W_tilde * fit.global.mu_beta);
  out.global = std::move(fit.global);
  out.locals = std::move(fit.locals);
  out.trace = std::move(fit.trace);
  out.converged = fit.converged;
  out.sweeps = fit.sweeps;
  out.switch_sweep = fit.switch_sweep;
  out.seconds = fit.seconds;
  out.lb_decreases = fit.lb_decreases;
  return out;
}

json run_output_to_json(const RunOutput& out) {
  json j;
  j["format"] = "sviglmm-run";
  j["version"] = 1;
  j["config"] = model_config_to_json(out.config);
  j["family"] = family_name(out.family);
  j["columns"] = {{"x_names", out.x_names},
                  {"z_cols", out.z_cols},
                  {"order", out.part.order},
                  {"r", out.part.r},
                  {"s", out.part.s},
                  {"g", out.part.g}};
  j["cluster_ids"] = out.cluster_ids;

  // Human-facing posterior summaries in original column order. Marginal sds
  // are the variational ones and typically underestimate the posterior sd.
  const Vector beta = out.beta_mean_original();
  const Matrix cov = out.beta_cov_original();
  json post;
  post["beta_mean"] = vector_to_json(beta);
  post["beta_sd"] = vector_to_json(cov.diagonal().cwiseSqrt());
  post["D_mean"] = out.d_mean_defined() ? matrix_to_json(out.d_mean()) : json();
  json u_means = json::array();
  for (const auto& u : out.u_mean) u_means.push_back(vector_to_json(u));
  post["u_mean"] = std::move(u_means);
  j["posterior"] = std::move(post);

  json state;
  state["mu_beta"] = vector_to_json(out.global.mu_beta);
  state["Sigma_beta"] = matrix_to_json(out.global.Sigma_beta);
  state["nu_D"] = out.global.nu_D;
  state["S_D"] = matrix_to_json(out.global.S_D);
  json mus = json::array(), sigmas = json::array(), tunings = json::array();
  for (const auto& m : out.locals.mu) mus.push_back(vector_to_json(m));
  for (const auto& s : out.locals.Sigma) sigmas.push_back(matrix_to_json(s));
  for (const auto& w : out.W) tunings.push_back(matrix_to_json(w));
  state["locals_mu"] = std::move(mus);
  state["locals_Sigma"] = std::move(sigmas);
  state["W"] = std::move(tunings);
  state["R_hat"] = matrix_to_json(out.R_hat);
  state["prior_nu"] = out.prior_nu;
  state["prior_S"] = matrix_to_json(out.prior_S);
  state["sigma_beta_scale"] = out.sigma_beta_scale;
  j["state"] = std::move(state);

  json trace = json::array();
  for (const auto& row : out.trace)
    trace.push_back({{"sweep", row.sweep},
                     {"lower_bound", row.lower_bound},
                     {"step_size", row.step_size},
                     {"seconds", row.seconds},
                     {"stochastic", row.stochastic}});
  j["trace"] = std::move(trace);
  j["converged"] = out.converged;
  j["sweeps"] = out.sweeps;
  j["switch_sweep"] = out.switch_sweep;
  j["seconds"] = out.seconds;
  j["lb_decreases"] = out.lb_decreases;
  j["seed"] = out.config.fit.seed;
  return j;
}

RunOutput run_output_from_json(const json& j) {
  if (j.value("format", "") != "sviglmm-run")
    throw ConfigError("not a sviglmm run output file");
  RunOutput out;
  out.config = model_config_from_json(j.at("config"));
  out.family = family_from_name(j.at("family").get<std::string>());
  out.x_names = j.at("columns").at("x_names").get<std::vector<std::string>>();
  out.z_cols = j.at("columns").at("z_cols").get<std::vector<int>>();
  out.part.order = j.at("columns").at("order").get<std::vector<int>>();
  out.part.r = j.at("columns").at("r").get<Index>();
  out.part.s = j.at("columns").at("s").get<Index>();
  out.part.g = j.at("columns").at("g").get<Index>();
  out.cluster_ids = j.at("cluster_ids").get<std::vector<std::string>>();

  const json& state = j.at("state");
  out.global.mu_beta = vector_from_json(state.at("mu_beta"));
  out.global.Sigma_beta = matrix_from_json(state.at("Sigma_beta"));
  out.global.nu_D = state.at("nu_D").get<double>();
  out.global.S_D = matrix_from_json(state.at("S_D"));
  for (const auto& m : state.at("locals_mu")) out.locals.mu.push_back(vector_from_json(m));
  for (const auto& s : state.at("locals_Sigma"))
    out.locals.Sigma.push_back(matrix_from_json(s));
  for (const auto& u : j.at("posterior").at("u_mean"))
    out.u_mean.push_back(vector_from_json(u));
  for (const auto& w : state.at("W")) out.W.push_back(matrix_from_json(w));
  out.R_hat = matrix_from_json(state.at("R_hat"));
  out.prior_nu = state.at("prior_nu").get<double>();
  out.prior_S = matrix_from_json(state.at("prior_S"));
  out.sigma_beta_scale = state.at("sigma_beta_scale").get<double>();

  for (const auto& row : j.at("trace"))
    out.trace.push_back({row.at("sweep").get<int>(), row.at("lower_bound").get<double>(),
                         row.at("step_size").get<double>(), row.at("seconds").get<double>(),
                         row.at("stochastic").get<bool>()});
  out.converged = j.at("converged").get<bool>();
  out.sweeps = j.at("sweeps").get<int>();
  out.switch_sweep = j.at("switch_sweep").get<int>();
  out.seconds = j.at("seconds").get<double>();
  out.lb_decreases = j.value("lb_decreases", 0);
  return out;
}

void write_run_output(const RunOutput& out, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << run_output_to_json(out).dump(2) << "\n";
  if (!f.good()) throw std::runtime_error("write failed: " + path);
}

RunOutput read_run_output(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open fit output: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("fit output parse error: " + std::string(e.what()));
  }
  return run_output_from_json(j);
}

Model rebuild_model(Dataset data, const RunOutput& out) {
  Model m;
  m.data = validate_dataset(std::move(data), out.family);
  if (m.data.n_clusters() != static_cast<Index>(out.cluster_ids.size()))
    throw DataError("dataset cluster count does not match the fit output");
  for (Index i = 0; i < m.data.n_clusters(); ++i)
    if (m.data.clusters[i].id != out.cluster_ids[static_cast<std::size_t>(i)])
      throw DataError("dataset cluster ids do not match the fit output");
  m.family = out.family;
  m.part = out.part;
  m.designs = designs_from_tuning(m.data, m.part, out.W);
  m.R_hat = out.R_hat;
  m.priors.Sigma_beta = out.sigma_beta_scale * Matrix::Identity(m.data.p(), m.data.p());
  m.priors.nu = out.prior_nu;
  m.priors.S = out.prior_S;
  m.priors.c = out.config.fit.prior_c;
  m.rule = hermite_rule(out.config.fit.quadrature_order);
  return m;
}

ConflictReport run_diagnose(const Model& model, const RunOutput& out) {
  return diagnose_all(model, out.global, out.locals, out.config.diag_level,
                      out.config.diag_side);
}

namespace {

std::vector<std::size_t> order_by_p(const ConflictReport& report) {
  std::vector<std::size_t> idx(report.clusters.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double pa = report.clusters[a].p_defined ? report.clusters[a].decision_p : 2.0;
    const double pb = report.clusters[b].p_defined ? report.clusters[b].decision_p : 2.0;
    return pa < pb;
  });
  return idx;
}

}  // namespace

CsvTable report_to_csv(const ConflictReport& report) {
  CsvTable t;
  t.header = {"cluster", "delta",   "p_chi2",      "p_lower", "p_upper",
              "p_two_sided", "decision_p", "divergent"};
  for (std::size_t i : order_by_p(report)) {
    const auto& c = report.clusters[i];
    t.rows.push_back({c.cluster_id, format_double(c.delta), format_double(c.p_chi2),
                      format_double(c.p_lower), format_double(c.p_upper),
                      format_double(c.p_two_sided), format_double(c.decision_p),
                      c.divergent ? "1" : "0"});
  }
  return t;
}

json report_to_json(const ConflictReport& report) {
  json j;
  j["level"] = report.level;
  j["side"] = report.side == PValueSide::Lower   ? "lower"
              : report.side == PValueSide::Upper ? "upper"
                                                 : "two_sided";
  json rows = json::array();
  for (std::size_t i : order_by_p(report)) {
    const auto& c = report.clusters[i];
    json row;
    row["cluster"] = c.cluster_id;
    row["delta"] = c.delta;
    row["p_chi2"] = c.p_chi2;
    row["p_lower"] = c.p_lower;
    row["p_upper"] = c.p_upper;
    row["p_two_sided"] = c.p_two_sided;
    row["p_defined"] = c.p_defined;
    row["decision_p"] = c.decision_p;
    row["divergent"] = c.divergent;
    rows.push_back(std::move(row));
  }
  j["clusters"] = std::move(rows);
  return j;
}

Dataset simulate_from_fit(const Model& model, const RunOutput& out, int replication_m,
                          std::uint64_t seed) {
  if (replication_m < 1) throw ConfigError("replication factor must be >= 1");
  if (!out.d_mean_defined())
    throw NumericalError("posterior mean of D undefined (nu_D <= r + 1)");

  const Matrix D_hat = out.d_mean();
  const Matrix L = spd_cholesky(D_hat, "posterior mean of D").matrixL();
  const Vector beta = out.beta_mean_original();
  const Index r = model.r();

  std::mt19937_64 rng(derive_stream(seed, "simulate-stream"));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset sim;
  sim.x_names = model.data.x_names;
  for (int k = 0; k < replication_m; ++k) {
    for (const auto& c : model.data.clusters) {
      ClusterData nc;
      nc.id = k == 0 ? c.id : c.id + ":" + std::to_string(k);
      nc.X = c.X;
      nc.Z = c.Z;
      nc.E = c.E;
      Vector z(r);
      for (Index a = 0; a < r; ++a) z[a] = gauss(rng);
      const Vector u = L * z;
      const Vector eta = c.X * beta + c.Z * u;
      nc.y.resize(c.n_obs());
      for (Index j = 0; j < c.n_obs(); ++j) {
        if (model.family == Family::Poisson) {
          const double E = c.E.size() ? c.E[j] : 1.0;
          const double mu = E * std::exp(clamp_linpred(eta[j]));
          std::poisson_distribution<long> pois(mu);
          nc.y[j] = static_cast<double>(pois(rng));
        } else {
          std::bernoulli_distribution bern(sigmoid(eta[j]));
          nc.y[j] = bern(rng) ? 1.0 : 0.0;
        }
      }
      sim.clusters.push_back(std::move(nc));
    }
  }
  return validate_dataset(std::move(sim), model.family);
}

CsvTable trace_to_csv(const RunOutput& out) {
  CsvTable t;
  t.header = {"sweep", "lower_bound", "step_size", "seconds", "phase"};
  for (const auto& row : out.trace)
    t.rows.push_back({std::to_string(row.sweep), format_double(row.lower_bound),
                      format_double(row.step_size), format_double(row.seconds),
                      row.stochastic ? "stochastic" : "standard"});
  return t;
}

}  // namespace sviglmm
