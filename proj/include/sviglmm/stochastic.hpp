#ifndef SVIGLMM_STOCHASTIC_HPP
#define SVIGLMM_STOCHASTIC_HPP

#include <random>
#include <span>
#include <string>
#include <vector>

#include "sviglmm/parallel.hpp"
#include "sviglmm/state.hpp"

namespace sviglmm {

/// Step sizes a_t = a / (t + A)^alpha with t = s_w + m/M.
struct StepSchedule {
  double a = 1.0;
  double A = 1.0;
  double alpha = 1.0;
  int M = 1;  // mini-batches per sweep

  double step(int sweep, int batch_in_sweep) const;
};

/// Sampling without replacement: each sweep is a fresh uniform permutation of
/// the clusters split into M consecutive blocks whose sizes differ by at most
/// one.
class SweepSampler {
 public:
  SweepSampler(Index n, int batch_size, std::uint64_t seed);

  std::vector<std::vector<int>> next_sweep();
  int batches_per_sweep() const { return M_; }
  int batch_size() const { return batch_size_; }

  std::string rng_state() const;
  void set_rng_state(const std::string& s);

 private:
  Index n_;
  int batch_size_;
  int M_;
  std::mt19937_64 rng_;
};

/// Split a permutation of {0..n-1} into ceil(n/batch_size) blocks with sizes
/// differing by at most one (exposed for testing).
std::vector<std::vector<int>> partition_batches(std::vector<int> permutation, int batch_size);

/// Natural-parameter-scale unbiased estimates built from a mini-batch:
/// precision form for q(beta), scale/df form for q(D). Batch sums carry the
/// n/|B| inflation; an empty batch yields the prior-only terms.
struct NaturalParams {
  Matrix beta_precision;       // Sigma_hat^{-1}
  Vector beta_precision_mean;  // Sigma_hat^{-1} mu_hat
  Matrix D_scale;              // S_hat
  double D_df = 0.0;           // nu + n
};

NaturalParams natural_param_estimate(const Model& model, std::span<const int> raw_batch,
                                     const GlobalState& global, const LocalState& locals,
                                     Execution exec = Execution::Parallel,
                                     bool deterministic = true);

/// One stochastic natural-gradient step: convex combination of the current
/// natural parameters with the mini-batch estimates, executed block by block
/// in the order of Algorithm 2 (beta first, then the scale of q(D) at the
/// refreshed beta parameters).
GlobalState stochastic_global_update(const Model& model, std::span<const int> raw_batch,
                                     double a_t, const GlobalState& global,
                                     const LocalState& locals,
                                     Execution exec = Execution::Parallel,
                                     bool deterministic = true);

struct Checkpoint {
  int version = 1;
  std::uint64_t config_hash = 0;
  int sweep = 0;
  int batch_in_sweep = 0;  // checkpoints are written at sweep boundaries
  std::string rng_state;
  GlobalState global;
  LocalState locals;
  std::vector<TraceRow> trace;
  int lb_decreases = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_config_hash);

/// Hash of the parts of the configuration that determine a run.
std::uint64_t config_hash(const Model& model, const FitConfig& config);

/// Algorithm 2 with the switch-to-Algorithm-1 strategy. When resume is given,
/// continues from the checkpointed sweep. checkpoint_path, when nonempty,
/// receives a checkpoint at every sweep boundary of the stochastic phase.
FitResult fit_svi(const Model& model, const FitConfig& config,
                  const std::string& checkpoint_path = {}, const Checkpoint* resume = nullptr);

}  // namespace sviglmm

#endif
