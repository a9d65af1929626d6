#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sviglmm/model_config.hpp"
#include "sviglmm/run.hpp"

using namespace sviglmm;

namespace {

CsvTable table_from_string(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in, "test");
}

ModelConfig toy_config(Family family = Family::Poisson) {
  ModelConfig c;
  c.response = "y";
  c.cluster = "id";
  c.fixed = {"x"};
  c.family = family;
  return c;
}

}  // namespace

TEST_CASE("toy ingestion groups rows by first appearance") {
  const auto table = table_from_string(
      "id,y,x\n"
      "a,1,0.5\n"
      "a,2,1.5\n"
      "b,0,2.0\n");
  const Dataset ds = ingest_csv(table, toy_config());
  REQUIRE(ds.n_clusters() == 2);
  CHECK(ds.clusters[0].id == "a");
  CHECK(ds.clusters[0].n_obs() == 2);
  CHECK(ds.clusters[1].n_obs() == 1);
  CHECK(ds.p() == 2);  // intercept + x
  CHECK(ds.r() == 1);  // intercept only
  CHECK(ds.clusters[0].X(1, 1) == 1.5);
  CHECK(ds.x_names[0] == "(Intercept)");
}

TEST_CASE("ingestion errors") {
  SUBCASE("offset requested for Bernoulli") {
    auto config = toy_config(Family::Bernoulli);
    config.offset = "e";
    const auto table = table_from_string("id,y,x,e\na,1,0.5,2\n");
    CHECK_THROWS_AS(ingest_csv(table, config), ConfigError);
  }
  SUBCASE("missing column") {
    const auto table = table_from_string("id,y\na,1\n");
    CHECK_THROWS_AS(ingest_csv(table, toy_config()), DataError);
  }
  SUBCASE("non-numeric cell") {
    const auto table = table_from_string("id,y,x\na,1,oops\n");
    CHECK_THROWS_AS(ingest_csv(table, toy_config()), DataError);
  }
  SUBCASE("random column missing from fixed") {
    auto config = toy_config();
    config.random = {"z"};
    const auto table = table_from_string("id,y,x,z\na,1,0.5,1\n");
    CHECK_THROWS_AS(ingest_csv(table, config), ConfigError);
  }
  SUBCASE("ragged row") {
    CHECK_THROWS_AS(table_from_string("id,y,x\na,1\n"), DataError);
  }
}

TEST_CASE("standardization yields mean zero and unit variance") {
  auto config = toy_config();
  config.standardize = {"x"};
  const auto table = table_from_string(
      "id,y,x\n"
      "a,1,1\n"
      "a,2,2\n"
      "b,0,3\n"
      "b,1,6\n");
  const Dataset ds = ingest_csv(table, config);
  double sum = 0.0, sumsq = 0.0;
  Index n = 0;
  for (const auto& c : ds.clusters)
    for (Index j = 0; j < c.n_obs(); ++j) {
      sum += c.X(j, 1);
      sumsq += c.X(j, 1) * c.X(j, 1);
      ++n;
    }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("export then ingest reproduces the dataset exactly") {
  auto config = toy_config();
  config.offset = "e";
  const auto table = table_from_string(
      "id,y,x,e\n"
      "a,1,0.524212398471239874,2.25\n"
      "a,2,-1.5e-7,0.5\n"
      "b,0,3.25,1.125\n");
  const Dataset ds = ingest_csv(table, config);
  const CsvTable exported = export_dataset(ds, config);
  const Dataset back = ingest_csv(exported, config);
  REQUIRE(back.n_clusters() == ds.n_clusters());
  for (Index i = 0; i < ds.n_clusters(); ++i) {
    CHECK(back.clusters[i].id == ds.clusters[i].id);
    CHECK(back.clusters[i].y == ds.clusters[i].y);
    CHECK(back.clusters[i].X == ds.clusters[i].X);
    CHECK(back.clusters[i].Z == ds.clusters[i].Z);
    CHECK(back.clusters[i].E == ds.clusters[i].E);
  }
}

TEST_CASE("epilepsy ingestion matches a hand-built design for patient 1") {
  // Raw values for patient 104 (the first placebo patient): baseline 11,
  // age 31, counts (5,3,3,3); Base = log(baseline/4), Age = log(age) centered
  // at the mean of log(age) over all 59 patients.
  const int ages[59] = {31, 30, 25, 36, 22, 29, 31, 42, 37, 28, 36, 24, 23, 36, 26,
                        26, 28, 31, 32, 21, 29, 21, 32, 25, 30, 40, 19, 22, 18, 32,
                        20, 30, 18, 24, 30, 35, 27, 20, 22, 28, 23, 40, 33, 21, 35,
                        25, 26, 25, 22, 32, 25, 35, 21, 41, 32, 26, 21, 36, 37};
  double mean_log_age = 0.0;
  for (int a : ages) mean_log_age += std::log(a);
  mean_log_age /= 59.0;

  ModelConfig config;
  config.response = "y";
  config.cluster = "patient";
  config.family = Family::Poisson;
  config.fixed = {"base", "trt", "base_trt", "age", "visit"};
  config.random = {"visit"};
  const Dataset ds = ingest_csv(std::string(SVIGLMM_DATA_DIR) + "/epilepsy.csv", config);
  REQUIRE(ds.n_clusters() == 59);
  const auto& p1 = ds.clusters[0];
  REQUIRE(p1.n_obs() == 4);

  const double base = std::log(11.0 / 4.0);
  const double age = std::log(31.0) - mean_log_age;
  const double visits[4] = {-0.3, -0.1, 0.1, 0.3};
  const double counts[4] = {5, 3, 3, 3};
  for (Index j = 0; j < 4; ++j) {
    CHECK(p1.y[j] == counts[j]);
    CHECK(p1.X(j, 0) == 1.0);
    CHECK(p1.X(j, 1) == doctest::Approx(base).epsilon(1e-12));
    CHECK(p1.X(j, 2) == 0.0);                     // placebo
    CHECK(p1.X(j, 3) == 0.0);                     // base x trt
    CHECK(p1.X(j, 4) == doctest::Approx(age).epsilon(1e-12));
    CHECK(p1.X(j, 5) == visits[j]);
    CHECK(p1.Z(j, 0) == 1.0);
    CHECK(p1.Z(j, 1) == visits[j]);
  }
}

TEST_CASE("simulate_from_fit replicates designs and matches marginal moments") {
  // Single-cluster Poisson intercept model with a known fitted state.
  std::string csv = "id,y\n";
  for (int j = 0; j < 6; ++j) csv += "a," + std::to_string(2 + (j % 3)) + "\n";
  ModelConfig config;
  config.response = "y";
  config.cluster = "id";
  config.family = Family::Poisson;
  const Dataset ds = ingest_csv(table_from_string(csv), config);
  RunOutput out = run_fit(ds, config);

  const Model model = rebuild_model(ds, out);
  SUBCASE("m = 1 reuses the designs with fresh responses") {
    const Dataset sim = simulate_from_fit(model, out, 1, 7);
    REQUIRE(sim.n_clusters() == 1);
    CHECK(sim.clusters[0].id == "a");
    CHECK(sim.clusters[0].X == ds.clusters[0].X);
    CHECK(sim.clusters[0].Z == ds.clusters[0].Z);
    const Dataset sim2 = simulate_from_fit(model, out, 1, 7);
    CHECK(sim.clusters[0].y == sim2.clusters[0].y);  // fixed seed
  }
  SUBCASE("replication count and marginal mean") {
    const int m = 4000;
    const Dataset sim = simulate_from_fit(model, out, m, 11);
    REQUIRE(sim.n_clusters() == m);
    // E[y] = exp(beta) E[exp(u)] = exp(beta + D/2) for the log link.
    const double beta = out.beta_mean_original()[0];
    const double D = out.d_mean()(0, 0);
    const double expected = std::exp(beta + 0.5 * D);
    double acc = 0.0;
    for (const auto& c : sim.clusters) acc += c.y.mean();
    const double got = acc / m;
    // Crude bound: per-cluster means have variance << 1 here.
    CHECK(std::abs(got - expected) < 0.1 * expected);
  }
}

TEST_CASE("run_fit posterior summaries map back to original column order") {
  const auto table = table_from_string(
      "id,y,x\n"
      "a,1,0.5\na,2,1.5\na,1,0.25\n"
      "b,0,2.0\nb,1,0.75\nb,2,1.0\n"
      "c,3,0.1\nc,1,0.9\nc,0,2.2\n");
  auto config = toy_config();
  RunOutput out = run_fit(ingest_csv(table, config), config);
  CHECK(out.x_names == std::vector<std::string>{"(Intercept)", "x"});
  CHECK(out.beta_mean_original().size() == 2);
  CHECK(out.u_mean.size() == 3);
  CHECK(out.d_mean_defined());

  // Round-trip through JSON.
  const auto j = run_output_to_json(out);
  const RunOutput back = run_output_from_json(j);
  CHECK(back.global.mu_beta == out.global.mu_beta);
  CHECK(back.global.S_D == out.global.S_D);
  CHECK(back.locals.mu[0] == out.locals.mu[0]);
  CHECK(back.W[0] == out.W[0]);
  CHECK(back.converged == out.converged);
}
