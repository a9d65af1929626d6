#ifndef SVIGLMM_RUN_HPP
#define SVIGLMM_RUN_HPP

#include <json.hpp>

#include "sviglmm/model_config.hpp"
#include "sviglmm/stochastic.hpp"

namespace sviglmm {

/// Everything a fit produces, including the full variational state so that
/// diagnose and simulate never refit.
struct RunOutput {
  ModelConfig config;
  Family family = Family::Poisson;
  std::vector<std::string> x_names;
  std::vector<int> z_cols;
  std::vector<std::string> cluster_ids;
  ColumnPartition part;
  std::vector<Matrix> W;  // per-cluster tuning matrices
  Matrix R_hat;
  double prior_nu = 0.0;
  Matrix prior_S;
  double sigma_beta_scale = 1000.0;

  GlobalState global;  // reordered beta coordinates
  LocalState locals;
  std::vector<Vector> u_mean;  // posterior means of u_i = E[alpha_i] - C_i beta_c

  std::vector<TraceRow> trace;
  bool converged = false;
  int sweeps = 0;
  int switch_sweep = -1;
  double seconds = 0.0;
  int lb_decreases = 0;

  double final_lower_bound() const {
    return trace.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : trace.back().lower_bound;
  }
  /// Posterior mean of beta mapped back to the original column order.
  Vector beta_mean_original() const { return part.to_original(global.mu_beta); }
  Matrix beta_cov_original() const { return part.to_original(global.Sigma_beta); }
  /// Posterior mean of D; defined only when nu_D > r + 1.
  bool d_mean_defined() const { return global.nu_D > part.r + 1; }
  Matrix d_mean() const { return global.S_D / (global.nu_D - part.r - 1); }
};

/// Fit the model described by config on the dataset (dispatches to Algorithm 1
/// or the stochastic variant with switching).
RunOutput run_fit(Dataset data, const ModelConfig& config, bool verbose = false);

nlohmann::json run_output_to_json(const RunOutput& out);
RunOutput run_output_from_json(const nlohmann::json& j);
void write_run_output(const RunOutput& out, const std::string& path);
RunOutput read_run_output(const std::string& path);

/// Reassemble the fixed model pieces (designs from stored tuning matrices,
/// priors from the stored spec) for a previously fitted run.
Model rebuild_model(Dataset data, const RunOutput& out);

ConflictReport run_diagnose(const Model& model, const RunOutput& out);
CsvTable report_to_csv(const ConflictReport& report);  // sorted by ascending p
nlohmann::json report_to_json(const ConflictReport& report);

/// Replicate every cluster's design m times and draw fresh responses from the
/// fitted model (beta = posterior mean, u_i ~ N(0, posterior mean of D)).
Dataset simulate_from_fit(const Model& model, const RunOutput& out, int replication_m,
                          std::uint64_t seed);

/// Tidy per-sweep trace (sweep, lower bound, step size, seconds, phase).
CsvTable trace_to_csv(const RunOutput& out);

}  // namespace sviglmm

#endif
