// Benchmark of the OpenMP per-cluster kernels against the serial reference:
// local-update sweeps, global accumulations, and the lower bound.
#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>
#include <vector>

#include "sviglmm/mathutil.hpp"
#include "sviglmm/ncvmp.hpp"
#include "sviglmm/parallel.hpp"

using namespace sviglmm;

namespace {

Dataset synth_logistic(int n, int ni, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds;
  ds.x_names = {"(Intercept)", "x1", "x2", "x3"};
  for (int i = 0; i < n; ++i) {
    ClusterData c;
    c.id = std::to_string(i);
    c.X.resize(ni, 4);
    c.Z.resize(ni, 1);
    c.y.resize(ni);
    const double u = 0.7 * gauss(rng);
    for (int j = 0; j < ni; ++j) {
      c.X(j, 0) = 1.0;
      for (int k = 1; k < 4; ++k) c.X(j, k) = gauss(rng);
      c.Z(j, 0) = 1.0;
      const double eta = -0.5 + 0.6 * c.X(j, 1) - 0.4 * c.X(j, 2) + 0.2 * c.X(j, 3) + u;
      std::bernoulli_distribution bern(1.0 / (1.0 + std::exp(-eta)));
      c.y[j] = bern(rng) ? 1.0 : 0.0;
    }
    ds.clusters.push_back(std::move(c));
  }
  return ds;
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e300;
  for (int k = 0; k < reps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (dt < best) best = dt;
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 20000;
  const int ni = argc > 2 ? std::atoi(argv[2]) : 7;
  const int reps = 3;

  FitConfig config;
  Model model = prepare_model(synth_logistic(n, ni, 42), Family::Bernoulli, config);
  GlobalState global;
  LocalState locals;
  initialize_state(model, global, locals);

  std::vector<int> all(model.n());
  std::iota(all.begin(), all.end(), 0);

  std::printf("n = %d clusters, %d obs each, %d worker thread(s)\n", n, ni, worker_threads());
  std::printf("%-24s %12s %12s %8s\n", "kernel", "serial (s)", "parallel (s)", "speedup");

  auto report = [&](const char* name, double ts, double tp) {
    std::printf("%-24s %12.4f %12.4f %7.2fx\n", name, ts, tp, ts / tp);
  };

  {
    LocalState ls = locals, lp = locals;
    const double ts = time_best_of(reps, [&] {
      optimize_locals(model, all, global, ls, 1e300, 1, Execution::Serial);
    });
    const double tp = time_best_of(reps, [&] {
      optimize_locals(model, all, global, lp, 1e300, 1, Execution::Parallel);
    });
    report("local sweep", ts, tp);
  }
  {
    const Matrix P_D = global.nu_D * spd_inverse(global.S_D, "S_D");
    const double ts = time_best_of(reps, [&] {
      accumulate_beta(model, all, global, locals, P_D, Execution::Serial, true);
    });
    const double tp = time_best_of(reps, [&] {
      accumulate_beta(model, all, global, locals, P_D, Execution::Parallel, true);
    });
    report("beta accumulation", ts, tp);
  }
  {
    const double ts = time_best_of(reps, [&] {
      accumulate_scale(model, all, global.mu_beta, global.Sigma_beta, locals,
                       Execution::Serial, true);
    });
    const double tp = time_best_of(reps, [&] {
      accumulate_scale(model, all, global.mu_beta, global.Sigma_beta, locals,
                       Execution::Parallel, true);
    });
    report("scale accumulation", ts, tp);
  }
  {
    const double ts = time_best_of(reps, [&] {
      lower_bound(model, global, locals, Execution::Serial);
    });
    const double tp = time_best_of(reps, [&] {
      lower_bound(model, global, locals, Execution::Parallel);
    });
    report("lower bound", ts, tp);
  }
  return 0;
}
