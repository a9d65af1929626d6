#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "sviglmm/run.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;

struct FitFlags {
  std::string data_path;
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<bool> stochastic;
  std::optional<int> batch_size;
  std::optional<double> step_A;
  std::optional<double> step_alpha;
  std::optional<std::string> parametrization;
  std::optional<int> quadrature_order;
  std::optional<bool> deterministic;
  bool verbose = false;
};

void apply_overrides(sviglmm::ModelConfig& config, const FitFlags& flags) {
  if (flags.seed) config.fit.seed = *flags.seed;
  if (flags.stochastic) config.fit.stochastic = *flags.stochastic;
  if (flags.batch_size) config.fit.batch_size = *flags.batch_size;
  if (flags.step_A) config.fit.step_A = *flags.step_A;
  if (flags.step_alpha) config.fit.step_alpha = *flags.step_alpha;
  if (flags.parametrization)
    config.fit.kind = sviglmm::parametrization_from_name(*flags.parametrization);
  if (flags.quadrature_order) config.fit.quadrature_order = *flags.quadrature_order;
  if (flags.deterministic) config.fit.deterministic = *flags.deterministic;
}

int cmd_fit(const FitFlags& flags) {
  auto config = sviglmm::read_model_config(flags.config_path);
  apply_overrides(config, flags);
  auto data = sviglmm::ingest_csv(flags.data_path, config);
  auto out = sviglmm::run_fit(std::move(data), config, flags.verbose);
  sviglmm::write_run_output(out, flags.out_path);
  std::cout << "lower_bound " << out.final_lower_bound() << "\n"
            << "converged " << (out.converged ? "yes" : "no") << "\n"
            << "sweeps " << out.sweeps << "\n";
  if (out.switch_sweep >= 0) std::cout << "switched_at_sweep " << out.switch_sweep << "\n";
  return out.converged ? kExitOk : kExitNotConverged;
}

int cmd_diagnose(const std::string& fit_path, const std::string& data_path,
                 const std::string& out_prefix, std::optional<double> level,
                 std::optional<std::string> side) {
  auto out = sviglmm::read_run_output(fit_path);
  if (level) out.config.diag_level = *level;
  if (side) out.config.diag_side = sviglmm::pvalue_side_from_name(*side);
  auto data = sviglmm::ingest_csv(data_path, out.config);
  const auto model = sviglmm::rebuild_model(std::move(data), out);
  const auto report = sviglmm::run_diagnose(model, out);
  sviglmm::write_csv(sviglmm::report_to_csv(report), out_prefix + ".csv");
  std::ofstream jf(out_prefix + ".json");
  if (!jf) throw std::runtime_error("cannot write " + out_prefix + ".json");
  jf << sviglmm::report_to_json(report).dump(2) << "\n";
  int flagged = 0;
  for (const auto& c : report.clusters) flagged += c.divergent ? 1 : 0;
  std::cout << "clusters " << report.clusters.size() << "\n"
            << "divergent " << flagged << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& fit_path, const std::string& data_path,
                 const std::string& out_path, int replicate, std::uint64_t seed) {
  auto out = sviglmm::read_run_output(fit_path);
  auto data = sviglmm::ingest_csv(data_path, out.config);
  const auto model = sviglmm::rebuild_model(std::move(data), out);
  const auto sim = sviglmm::simulate_from_fit(model, out, replicate, seed);
  // The exported covariates are post-standardization values; a refit on this
  // file must not standardize them again.
  auto sim_config = out.config;
  sim_config.standardize.clear();
  sviglmm::write_csv(sviglmm::export_dataset(sim, sim_config), out_path);
  std::cout << "clusters " << sim.n_clusters() << "\n"
            << "observations " << sim.total_obs() << "\n";
  return kExitOk;
}

int cmd_trace(const std::string& fit_path, const std::string& out_path) {
  const auto out = sviglmm::read_run_output(fit_path);
  sviglmm::write_csv(sviglmm::trace_to_csv(out), out_path);
  std::cout << "rows " << out.trace.size() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic variational inference for GLMMs with conflict diagnostics"};
  app.require_subcommand(1);

  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Fit a model to clustered CSV data");
  fit->add_option("--data", fit_flags.data_path, "input CSV")->required();
  fit->add_option("--config", fit_flags.config_path, "model config JSON")->required();
  fit->add_option("--out", fit_flags.out_path, "output JSON path")->required();
  fit->add_option("--seed", fit_flags.seed, "RNG seed override");
  fit->add_flag("--stochastic,!--no-stochastic", fit_flags.stochastic,
                "use mini-batch updates before switching");
  fit->add_option("--batch-size", fit_flags.batch_size, "mini-batch size");
  fit->add_option("--step-A", fit_flags.step_A, "step-size stability constant");
  fit->add_option("--step-alpha", fit_flags.step_alpha, "step-size exponent");
  fit->add_option("--parametrization", fit_flags.parametrization,
                  "centered | noncentered | partial");
  fit->add_option("--quadrature-order", fit_flags.quadrature_order, "Gauss-Hermite order");
  fit->add_flag("--deterministic,!--no-deterministic", fit_flags.deterministic,
                "bit-reproducible reductions");
  fit->add_flag("--verbose", fit_flags.verbose, "print per-sweep progress");

  std::string diag_fit, diag_data, diag_out = "conflict_report";
  std::optional<double> diag_level;
  std::optional<std::string> diag_side;
  auto* diag = app.add_subcommand("diagnose", "Conflict p-values from a fitted model");
  diag->add_option("--fit", diag_fit, "fit output JSON")->required();
  diag->add_option("--data", diag_data, "input CSV used for the fit")->required();
  diag->add_option("--out", diag_out, "output prefix (.csv and .json)");
  diag->add_option("--level", diag_level, "divergence level (default from config)");
  diag->add_option("--side", diag_side, "lower | upper | two_sided");

  std::string sim_fit, sim_data, sim_out;
  int sim_replicate = 1;
  std::uint64_t sim_seed = 1;
  auto* sim = app.add_subcommand("simulate", "Simulate data from a fitted model");
  sim->add_option("--fit", sim_fit, "fit output JSON")->required();
  sim->add_option("--data", sim_data, "input CSV used for the fit")->required();
  sim->add_option("--out", sim_out, "output CSV path")->required();
  sim->add_option("--replicate", sim_replicate, "design replication factor");
  sim->add_option("--seed", sim_seed, "RNG seed");

  std::string trace_fit, trace_out;
  auto* trace = app.add_subcommand("trace", "Export the per-sweep trace as CSV");
  trace->add_option("--fit", trace_fit, "fit output JSON")->required();
  trace->add_option("--out", trace_out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (fit->parsed()) return cmd_fit(fit_flags);
    if (diag->parsed()) return cmd_diagnose(diag_fit, diag_data, diag_out, diag_level, diag_side);
    if (sim->parsed()) return cmd_simulate(sim_fit, sim_data, sim_out, sim_replicate, sim_seed);
    if (trace->parsed()) return cmd_trace(trace_fit, trace_out);
  } catch (const sviglmm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const sviglmm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
