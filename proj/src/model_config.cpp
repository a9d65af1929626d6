#include "sviglmm/model_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace sviglmm {

using nlohmann::json;

void ModelConfig::validate() const {
  if (response.empty()) throw ConfigError("config: 'response' column is required");
  if (cluster.empty()) throw ConfigError("config: 'cluster' column is required");
  for (const auto& rc : random)
    if (std::find(fixed.begin(), fixed.end(), rc) == fixed.end())
      throw ConfigError("random column '" + rc + "' is not among the fixed columns");
  if (!offset.empty() && family != Family::Poisson)
    throw ConfigError("offset column is only valid for the Poisson family");
  if (diag_level <= 0.0 || diag_level >= 1.0)
    throw ConfigError("diagnostic level must be in (0, 1)");
  fit.validate();
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.response = j.value("response", "");
  c.cluster = j.value("cluster", "");
  c.fixed = j.value("fixed", std::vector<std::string>{});
  c.random = j.value("random", std::vector<std::string>{});
  c.offset = j.value("offset", "");
  if (j.contains("family")) c.family = family_from_name(j.at("family").get<std::string>());
  c.standardize = j.value("standardize", std::vector<std::string>{});
  if (j.contains("column_classes"))
    for (const auto& [k, v] : j.at("column_classes").items())
      c.column_classes[k] = v.get<std::string>();

  if (j.contains("parametrization"))
    c.fit.kind = parametrization_from_name(j.at("parametrization").get<std::string>());
  const json f = j.value("fit", json::object());
  c.fit.quadrature_order = f.value("quadrature_order", c.fit.quadrature_order);
  c.fit.local_tol = f.value("local_tol", c.fit.local_tol);
  c.fit.stop_tol = f.value("stop_tol", c.fit.stop_tol);
  c.fit.switch_tol = f.value("switch_tol", c.fit.switch_tol);
  c.fit.max_sweeps = f.value("max_sweeps", c.fit.max_sweeps);
  c.fit.damping = f.value("damping", c.fit.damping);
  c.fit.seed = f.value("seed", c.fit.seed);
  c.fit.deterministic = f.value("deterministic", c.fit.deterministic);
  c.fit.sigma_beta_scale = f.value("sigma_beta_scale", c.fit.sigma_beta_scale);
  c.fit.prior_c = f.value("prior_c", c.fit.prior_c);
  c.fit.refine_tuning = f.value("refine_tuning", c.fit.refine_tuning);
  if (f.contains("prior_nu")) c.fit.prior_nu = f.at("prior_nu").get<double>();

  const json s = j.value("stochastic", json::object());
  c.fit.stochastic = s.value("enabled", c.fit.stochastic);
  c.fit.batch_size = s.value("batch_size", c.fit.batch_size);
  c.fit.step_a = s.value("step_a", c.fit.step_a);
  c.fit.step_A = s.value("step_A", c.fit.step_A);
  c.fit.step_alpha = s.value("step_alpha", c.fit.step_alpha);

  const json d = j.value("diagnostics", json::object());
  c.diag_level = d.value("level", c.diag_level);
  if (d.contains("side")) c.diag_side = pvalue_side_from_name(d.at("side").get<std::string>());
  c.checkpoint_path = j.value("checkpoint", "");
  return c;
}

json model_config_to_json(const ModelConfig& c) {
  json j;
  j["response"] = c.response;
  j["cluster"] = c.cluster;
  j["fixed"] = c.fixed;
  j["random"] = c.random;
  if (!c.offset.empty()) j["offset"] = c.offset;
  j["family"] = family_name(c.family);
  if (!c.standardize.empty()) j["standardize"] = c.standardize;
  if (!c.column_classes.empty()) {
    json cc = json::object();
    for (const auto& [k, v] : c.column_classes) cc[k] = v;
    j["column_classes"] = cc;
  }
  j["parametrization"] = parametrization_name(c.fit.kind);
  j["fit"] = {{"quadrature_order", c.fit.quadrature_order},
              {"local_tol", c.fit.local_tol},
              {"stop_tol", c.fit.stop_tol},
              {"switch_tol", c.fit.switch_tol},
              {"max_sweeps", c.fit.max_sweeps},
              {"damping", c.fit.damping},
              {"seed", c.fit.seed},
              {"deterministic", c.fit.deterministic},
              {"sigma_beta_scale", c.fit.sigma_beta_scale},
              {"prior_c", c.fit.prior_c},
              {"refine_tuning", c.fit.refine_tuning}};
  if (c.fit.prior_nu) j["fit"]["prior_nu"] = *c.fit.prior_nu;
  j["stochastic"] = {{"enabled", c.fit.stochastic},
                     {"batch_size", c.fit.batch_size},
                     {"step_a", c.fit.step_a},
                     {"step_A", c.fit.step_A},
                     {"step_alpha", c.fit.step_alpha}};
  j["diagnostics"] = {{"level", c.diag_level},
                      {"side", c.diag_side == PValueSide::Lower   ? "lower"
                               : c.diag_side == PValueSide::Upper ? "upper"
                                                                  : "two_sided"}};
  if (!c.checkpoint_path.empty()) j["checkpoint"] = c.checkpoint_path;
  return j;
}

ModelConfig read_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return model_config_from_json(j);
}

Dataset ingest_csv(const CsvTable& table, const ModelConfig& config) {
  config.validate();
  if (table.rows.empty()) throw DataError("no data rows");

  const int cluster_col = table.require_column(config.cluster);
  const int y_col = table.require_column(config.response);
  std::vector<int> fixed_cols;
  for (const auto& name : config.fixed) fixed_cols.push_back(table.require_column(name));
  const int offset_col = config.offset.empty() ? -1 : table.require_column(config.offset);

  // Optional standardization (mean 0, variance 1) across all observations.
  std::map<int, std::pair<double, double>> scaling;  // col -> (mean, sd)
  for (const auto& name : config.standardize) {
    const int col = table.require_column(name);
    double mean = 0.0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) mean += table.numeric(i, col);
    mean /= static_cast<double>(table.rows.size());
    double var = 0.0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const double d = table.numeric(i, col) - mean;
      var += d * d;
    }
    var /= static_cast<double>(table.rows.size());
    if (var <= 0.0) throw DataError("cannot standardize constant column '" + name + "'");
    scaling[col] = {mean, std::sqrt(var)};
  }
  auto cell = [&](std::size_t row, int col) {
    double v = table.numeric(row, col);
    if (auto it = scaling.find(col); it != scaling.end())
      v = (v - it->second.first) / it->second.second;
    return v;
  };

  // Group rows by cluster id in first-appearance order.
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> id_index;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string& id = table.rows[i][static_cast<std::size_t>(cluster_col)];
    auto [it, inserted] = id_index.try_emplace(id, ids.size());
    if (inserted) {
      ids.push_back(id);
      members.emplace_back();
    }
    members[it->second].push_back(i);
  }

  const Index p = static_cast<Index>(fixed_cols.size()) + 1;
  std::vector<int> random_pos{0};  // intercept
  for (const auto& rc : config.random) {
    const auto it = std::find(config.fixed.begin(), config.fixed.end(), rc);
    random_pos.push_back(static_cast<int>(it - config.fixed.begin()) + 1);
  }

  Dataset ds;
  ds.x_names.push_back("(Intercept)");
  for (const auto& name : config.fixed) ds.x_names.push_back(name);

  for (std::size_t ci = 0; ci < ids.size(); ++ci) {
    ClusterData c;
    c.id = ids[ci];
    const auto& rows = members[ci];
    const Index ni = static_cast<Index>(rows.size());
    c.y.resize(ni);
    c.X.resize(ni, p);
    c.Z.resize(ni, static_cast<Index>(random_pos.size()));
    if (offset_col >= 0) c.E.resize(ni);
    for (Index jj = 0; jj < ni; ++jj) {
      const std::size_t row = rows[static_cast<std::size_t>(jj)];
      c.y[jj] = table.numeric(row, y_col);
      c.X(jj, 0) = 1.0;
      for (std::size_t k = 0; k < fixed_cols.size(); ++k)
        c.X(jj, static_cast<Index>(k) + 1) = cell(row, fixed_cols[k]);
      for (std::size_t k = 0; k < random_pos.size(); ++k)
        c.Z(jj, static_cast<Index>(k)) = c.X(jj, random_pos[k]);
      if (offset_col >= 0) c.E[jj] = table.numeric(row, offset_col);
    }
    ds.clusters.push_back(std::move(c));
  }
  return validate_dataset(std::move(ds), config.family);
}

Dataset ingest_csv(const std::string& path, const ModelConfig& config) {
  return ingest_csv(read_csv(path), config);
}

CsvTable export_dataset(const Dataset& data, const ModelConfig& config) {
  CsvTable table;
  table.header.push_back(config.cluster);
  table.header.push_back(config.response);
  for (const auto& name : config.fixed) table.header.push_back(name);
  const bool has_offset = !config.offset.empty();
  if (has_offset) table.header.push_back(config.offset);

  for (const auto& c : data.clusters) {
    for (Index j = 0; j < c.n_obs(); ++j) {
      std::vector<std::string> row;
      row.push_back(c.id);
      row.push_back(format_double(c.y[j]));
      for (std::size_t k = 0; k < config.fixed.size(); ++k)
        row.push_back(format_double(c.X(j, static_cast<Index>(k) + 1)));
      if (has_offset) row.push_back(format_double(c.E.size() ? c.E[j] : 1.0));
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace sviglmm
