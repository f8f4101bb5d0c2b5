// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/dataset.hpp"
#include "nert/models.hpp"

namespace nert {

/// MSE per scored role; absent when the role has no cells.
struct RoleMetrics {
  std::optional<double> train;
  std::optional<double> validation;
  std::optional<double> interp;
  std::optional<double> extrap;

  std::optional<double>& operator[](Role role);
  const std::optional<double>& operator[](Role role) const;
  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::vector<std::size_t> horizons = {96, 192, 336, 720};
  bool raw_units = false;  // undo target normalization before computing MSE
};

void to_json(nlohmann::json& j, const EvalOptions& o);
void from_json(const nlohmann::json& j, EvalOptions& o);

struct EvalResult {
  RoleMetrics overall;
  std::vector<RoleMetrics> per_feature;
  /// Extrapolation MSE over the first n extrap-test rows (absent when fewer rows exist).
  std::map<std::size_t, std::optional<double>> horizons;

  nlohmann::json to_json(const std::vector<std::string>& feature_names) const;
  /// Flat "role" / "feature.role" / "horizon.n" -> value map of present metrics.
  std::map<std::string, double> flatten(const std::vector<std::string>& feature_names) const;
};

/// Metrics of a prediction over every cell (row-major N*M values).
EvalResult evaluate_predictions(const SignalDataset& data, std::span<const double> prediction,
                                const EvalOptions& options = {});
/// Single forward pass over all coordinates, then evaluate_predictions.
EvalResult evaluate(const Model& model, const SignalDataset& data, const EvalOptions& options = {});

/// Writes <dir>/<feature>.csv with columns t,target,pred,period,scale,role and
/// <dir>/manifest.json holding `manifest` plus the metrics. Factor columns are
/// empty for models without factors; unobserved targets are empty.
void export_traces(const Model& model, const SignalDataset& data, const std::filesystem::path& dir,
                   const nlohmann::json& manifest = nlohmann::json::object(), const EvalOptions& options = {});

/// Reads a trace CSV back as (target, pred, role) triples for recomputation.
struct TraceRow {
  std::optional<double> target;
  double pred = 0.0;
  std::optional<double> period;
  std::optional<double> scale;
  Role role = Role::excluded;
};
std::vector<TraceRow> read_trace(const std::filesystem::path& csv);

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // n - 1 estimator; 0 for a single run
  std::size_t count = 0;
  bool single_run = false;
};

struct RunSummary {
  std::string config_hash;
  std::map<std::string, MetricSummary> metrics;
  nlohmann::json to_json() const;
  /// metric,mean,std,n rows.
  std::string to_csv() const;
};

/// Throws ConfigError when the runs do not share one config hash.
RunSummary aggregate_runs(const std::vector<RunRecord>& runs);

/// Stable hex digest (FNV-1a 64) of a JSON document's canonical dump.
std::string config_hash(const nlohmann::json& config);

}  // namespace nert
