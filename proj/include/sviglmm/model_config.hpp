#ifndef SVIGLMM_MODEL_CONFIG_HPP
#define SVIGLMM_MODEL_CONFIG_HPP

#include <json.hpp>
#include <string>
#include <vector>

#include "sviglmm/csv.hpp"
#include "sviglmm/data.hpp"
#include "sviglmm/diagnostics.hpp"
#include "sviglmm/state.hpp"

namespace sviglmm {

/// Declarative run configuration: one JSON file plus CLI flag overrides.
struct ModelConfig {
  std::string response;
  std::string cluster;
  std::vector<std::string> fixed;   // covariate columns; intercept is implicit
  std::vector<std::string> random;  // subset of fixed; intercept is implicit
  std::string offset;               // Poisson only; empty = none
  Family family = Family::Poisson;
  std::vector<std::string> standardize;
  ColumnClassOverrides column_classes;
  FitConfig fit;
  double diag_level = 0.05;
  PValueSide diag_side = PValueSide::TwoSided;
  std::string checkpoint_path;

  void validate() const;
};

ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig read_model_config(const std::string& path);

/// Build the clustered dataset from a CSV table: clusters in first-appearance
/// order, intercept column prepended to X and Z, optional standardization.
Dataset ingest_csv(const CsvTable& table, const ModelConfig& config);
Dataset ingest_csv(const std::string& path, const ModelConfig& config);

/// Dataset back to a CSV table in the ingestion schema (intercept dropped).
CsvTable export_dataset(const Dataset& data, const ModelConfig& config);

}  // namespace sviglmm

#endif
