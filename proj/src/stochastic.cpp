#include "sviglmm/stochastic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sviglmm/mathutil.hpp"
#include "sviglmm/ncvmp.hpp"

namespace sviglmm {

double StepSchedule::step(int sweep, int batch_in_sweep) const {
  const double t = sweep + static_cast<double>(batch_in_sweep) / M;
  return a / std::pow(t + A, alpha);
}

SweepSampler::SweepSampler(Index n, int batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), rng_(seed) {
  if (batch_size_ < 1 || batch_size_ > n_)
    throw ConfigError("batch_size must be in [1, n]");
  M_ = static_cast<int>((n_ + batch_size_ - 1) / batch_size_);
}

std::vector<std::vector<int>> partition_batches(std::vector<int> permutation, int batch_size) {
  const int n = static_cast<int>(permutation.size());
  const int M = (n + batch_size - 1) / batch_size;
  const int base = n / M;
  const int extra = n % M;
  std::vector<std::vector<int>> batches;
  batches.reserve(M);
  int pos = 0;
  for (int b = 0; b < M; ++b) {
    const int size = base + (b < extra ? 1 : 0);
    batches.emplace_back(permutation.begin() + pos, permutation.begin() + pos + size);
    pos += size;
  }
  return batches;
}

std::vector<std::vector<int>> SweepSampler::next_sweep() {
  std::vector<int> perm(n_);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng_);
  return partition_batches(std::move(perm), batch_size_);
}

std::string SweepSampler::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void SweepSampler::set_rng_state(const std::string& s) {
  std::istringstream is(s);
  is >> rng_;
  if (!is) throw ConfigError("invalid RNG state string");
}

namespace {

struct BetaHat {
  Matrix precision;       // Sigma_hat^{-1}
  Vector precision_mean;  // Sigma_hat^{-1} mu_hat
};

BetaHat beta_hat_estimate(const Model& model, std::span<const int> batch,
                          const GlobalState& global, const LocalState& locals,
                          const Matrix& prior_precision, Execution exec, bool deterministic) {
  BetaHat hat;
  if (batch.empty()) {
    hat.precision = prior_precision;
    hat.precision_mean = Vector::Zero(model.p());
    return hat;
  }
  const double scale = static_cast<double>(model.n()) / static_cast<double>(batch.size());
  const Matrix P_D =
      global.nu_D * spd_inverse(global.S_D, "stochastic update: S_q(D)");
  const BetaAccum acc = accumulate_beta(model, batch, global, locals, P_D, exec, deterministic);
  hat.precision = symmetrize(prior_precision + scale * acc.G);
  hat.precision_mean = hat.precision * global.mu_beta + scale * acc.h -
                       prior_precision * global.mu_beta;
  return hat;
}

Matrix scale_hat_estimate(const Model& model, std::span<const int> batch,
                          const Vector& mu_beta, const Matrix& Sigma_beta,
                          const LocalState& locals, Execution exec, bool deterministic) {
  Matrix S_hat = model.priors.S;
  if (!batch.empty()) {
    const double scale = static_cast<double>(model.n()) / static_cast<double>(batch.size());
    S_hat += scale * accumulate_scale(model, batch, mu_beta, Sigma_beta, locals, exec,
                                      deterministic);
  }
  return symmetrize(S_hat);
}

}  // namespace

namespace {

// Deterministic mode sums contributions in ascending cluster order so the
// result does not depend on the sampled batch order or thread count.
std::vector<int> canonical_batch(std::span<const int> batch, bool deterministic) {
  std::vector<int> out(batch.begin(), batch.end());
  if (deterministic) std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

NaturalParams natural_param_estimate(const Model& model, std::span<const int> raw_batch,
                                     const GlobalState& global, const LocalState& locals,
                                     Execution exec, bool deterministic) {
  const std::vector<int> batch = canonical_batch(raw_batch, deterministic);
  const Matrix prior_precision = spd_inverse(model.priors.Sigma_beta, "Sigma_beta prior");
  NaturalParams est;
  const BetaHat hat =
      beta_hat_estimate(model, batch, global, locals, prior_precision, exec, deterministic);
  est.beta_precision = hat.precision;
  est.beta_precision_mean = hat.precision_mean;
  est.D_scale = scale_hat_estimate(model, batch, global.mu_beta, global.Sigma_beta, locals,
                                   exec, deterministic);
  est.D_df = model.priors.nu + static_cast<double>(model.n());
  return est;
}

GlobalState stochastic_global_update(const Model& model, std::span<const int> raw_batch,
                                     double a_t, const GlobalState& global,
                                     const LocalState& locals, Execution exec,
                                     bool deterministic) {
  if (raw_batch.empty()) throw ConfigError("stochastic update requires |B| >= 1");
  if (!(a_t > 0.0 && a_t <= 1.0)) throw ConfigError("step size a_t must be in (0, 1]");

  const std::vector<int> batch = canonical_batch(raw_batch, deterministic);
  const Matrix prior_precision = spd_inverse(model.priors.Sigma_beta, "Sigma_beta prior");
  const BetaHat hat =
      beta_hat_estimate(model, batch, global, locals, prior_precision, exec, deterministic);

  const Matrix R_old = spd_inverse(global.Sigma_beta, "Sigma_q(beta)");
  const Vector h_old = R_old * global.mu_beta;

  GlobalState next;
  const Matrix R_new = symmetrize((1.0 - a_t) * R_old + a_t * hat.precision);
  const Vector h_new = (1.0 - a_t) * h_old + a_t * hat.precision_mean;
  const auto R_llt = spd_cholesky(R_new, "updated beta precision (step may be too large)");
  next.Sigma_beta = symmetrize(R_llt.solve(Matrix::Identity(model.p(), model.p())));
  next.mu_beta = R_llt.solve(h_new);
  next.nu_D = global.nu_D;

  // The scale estimate uses the refreshed beta parameters (Algorithm 2 runs
  // its three update lines in order).
  const Matrix S_hat = scale_hat_estimate(model, batch, next.mu_beta, next.Sigma_beta, locals,
                                          exec, deterministic);
  next.S_D = symmetrize((1.0 - a_t) * global.S_D + a_t * S_hat);
  spd_cholesky(next.S_D, "updated S_q(D)");
  return next;
}

// --- checkpointing ---------------------------------------------------------

namespace {

using nlohmann::json;

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

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  json j;
  j["version"] = ck.version;
  j["config_hash"] = ck.config_hash;
  j["sweep"] = ck.sweep;
  j["batch_in_sweep"] = ck.batch_in_sweep;
  j["rng_state"] = ck.rng_state;
  j["global"] = {{"mu_beta", vector_to_json(ck.global.mu_beta)},
                 {"Sigma_beta", matrix_to_json(ck.global.Sigma_beta)},
                 {"nu_D", ck.global.nu_D},
                 {"S_D", matrix_to_json(ck.global.S_D)}};
  json mus = json::array(), sigmas = json::array();
  for (const auto& m : ck.locals.mu) mus.push_back(vector_to_json(m));
  for (const auto& s : ck.locals.Sigma) sigmas.push_back(matrix_to_json(s));
  j["locals"] = {{"mu", std::move(mus)}, {"Sigma", std::move(sigmas)}};
  json trace = json::array();
  for (const auto& row : ck.trace)
    trace.push_back({{"sweep", row.sweep},
                     {"lower_bound", row.lower_bound},
                     {"step_size", row.step_size},
                     {"seconds", row.seconds},
                     {"stochastic", row.stochastic}});
  j["trace"] = std::move(trace);
  j["lb_decreases"] = ck.lb_decreases;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
  out << "\n";
  if (!out.good()) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_config_hash) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  json j;
  in >> j;

  Checkpoint ck;
  ck.version = j.at("version").get<int>();
  if (ck.version != 1)
    throw ConfigError("unsupported checkpoint version " + std::to_string(ck.version));
  ck.config_hash = j.at("config_hash").get<std::uint64_t>();
  if (ck.config_hash != expected_config_hash)
    throw ConfigError("checkpoint config hash mismatch (different configuration or data)");
  ck.sweep = j.at("sweep").get<int>();
  ck.batch_in_sweep = j.at("batch_in_sweep").get<int>();
  ck.rng_state = j.at("rng_state").get<std::string>();
  ck.global.mu_beta = vector_from_json(j.at("global").at("mu_beta"));
  ck.global.Sigma_beta = matrix_from_json(j.at("global").at("Sigma_beta"));
  ck.global.nu_D = j.at("global").at("nu_D").get<double>();
  ck.global.S_D = matrix_from_json(j.at("global").at("S_D"));
  for (const auto& m : j.at("locals").at("mu")) ck.locals.mu.push_back(vector_from_json(m));
  for (const auto& s : j.at("locals").at("Sigma"))
    ck.locals.Sigma.push_back(matrix_from_json(s));
  for (const auto& row : j.at("trace"))
    ck.trace.push_back({row.at("sweep").get<int>(), row.at("lower_bound").get<double>(),
                        row.at("step_size").get<double>(), row.at("seconds").get<double>(),
                        row.at("stochastic").get<bool>()});
  ck.lb_decreases = j.at("lb_decreases").get<int>();
  return ck;
}

std::uint64_t config_hash(const Model& model, const FitConfig& config) {
  // max_sweeps is deliberately excluded: resuming may extend a truncated run.
  std::ostringstream os;
  os << model.n() << '|' << model.p() << '|' << model.r() << '|'
     << family_name(model.family) << '|' << parametrization_name(config.kind) << '|'
     << config.quadrature_order << '|' << config.local_tol << '|' << config.stop_tol << '|'
     << config.switch_tol << '|' << config.damping << '|'
     << config.seed << '|' << config.batch_size << '|' << config.step_a << '|'
     << config.step_A << '|' << config.step_alpha << '|' << config.force_unit_step << '|'
     << config.sigma_beta_scale << '|' << config.prior_c;
  return fnv1a64(os.str());
}

// --- Algorithm 2 with switching --------------------------------------------

FitResult fit_svi(const Model& model, const FitConfig& config,
                  const std::string& checkpoint_path, const Checkpoint* resume) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const Index n = model.n();
  int batch_size = config.batch_size;
  if (batch_size <= 0) batch_size = std::max<int>(1, static_cast<int>(n) / 50);
  batch_size = std::min<int>(batch_size, static_cast<int>(n));

  SweepSampler sampler(n, batch_size, derive_stream(config.seed, "batch-stream"));
  StepSchedule schedule{config.step_a, config.step_A, config.step_alpha,
                        sampler.batches_per_sweep()};
  if (schedule.A == 0.0 && !config.force_unit_step) {
    schedule.A = 1.0 / schedule.M;
    std::cerr << "sviglmm: stability constant A = 0 is singular at t = 0; using A = 1/M = "
              << schedule.A << "\n";
  }

  FitResult result;
  const Execution exec = Execution::Parallel;

  if (resume) {
    result.global = resume->global;
    result.locals = resume->locals;
    result.trace = resume->trace;
    result.sweeps = resume->sweep;
    result.lb_decreases = resume->lb_decreases;
    sampler.set_rng_state(resume->rng_state);
  } else {
    initialize_state(model, result.global, result.locals);
  }

  const std::uint64_t chash = config_hash(model, config);
  double prev_lb = result.trace.empty() ? -std::numeric_limits<double>::infinity()
                                        : result.trace.back().lower_bound;
  bool switched = false;

  auto switch_now = [&](double lb, double prev) {
    return std::isfinite(prev) && std::abs(lb - prev) < config.switch_tol * std::abs(prev);
  };

  // A checkpoint is written at the sweep boundary before the switch decision;
  // re-evaluate that decision when resuming.
  if (resume && result.trace.size() >= 2) {
    const double last = result.trace.back().lower_bound;
    const double before = result.trace[result.trace.size() - 2].lower_bound;
    if (switch_now(last, before)) switched = true;
  }

  while (!switched && result.sweeps < config.max_sweeps) {
    const int s_w = result.sweeps;
    const auto batches = sampler.next_sweep();
    double a_t = 1.0;
    for (int m = 0; m < static_cast<int>(batches.size()); ++m) {
      const auto& batch = batches[m];
      optimize_locals(model, batch, result.global, result.locals, config.local_tol,
                      config.max_local_reps, exec);
      a_t = config.force_unit_step ? 1.0 : std::min(1.0, schedule.step(s_w, m));
      result.global = stochastic_global_update(model, batch, a_t, result.global,
                                               result.locals, exec, config.deterministic);
    }
    const double lb = lower_bound(model, result.global, result.locals, exec,
                                  config.deterministic);
    ++result.sweeps;
    result.trace.push_back({result.sweeps, lb, a_t, elapsed(), true});

    if (!checkpoint_path.empty()) {
      Checkpoint ck;
      ck.config_hash = chash;
      ck.sweep = result.sweeps;
      ck.rng_state = sampler.rng_state();
      ck.global = result.global;
      ck.locals = result.locals;
      ck.trace = result.trace;
      ck.lb_decreases = result.lb_decreases;
      save_checkpoint(ck, checkpoint_path);
    }

    if (std::isfinite(prev_lb) && lb < prev_lb) ++result.lb_decreases;
    if (switch_now(lb, prev_lb)) switched = true;
    prev_lb = lb;
  }

  if (switched) {
    result.switch_sweep = result.sweeps;
    run_ncvmp_phase(model, config, result.global, result.locals, result, elapsed());
  }
  finalize_locals(model, result.global, result.locals, exec);
  result.seconds = elapsed();
  return result;
}

}  // namespace sviglmm
