// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/dataset.hpp"
#include "nert/evaluation.hpp"
#include "nert/models.hpp"
#include "nert/modulation.hpp"
#include "nert/synthetic.hpp"
#include "nert/training.hpp"

namespace nert {

/// Where a dataset comes from and how its cells are masked.
struct DataSpec {
  std::string source = "sine50";  // benchmark name, "periodic", or a CSV path
  BenchmarkConfig benchmark;
  PeriodicSeriesParams periodic;
  CoordinateConfig coords;
  std::size_t coord_columns = 1;                  // CSV input only
  std::optional<std::string> roles;               // CSV role file; defaults to <values>.roles.csv if present
  std::optional<std::size_t> blocks;              // block protocol with this many active test blocks
  std::size_t block_length = 500;
  std::size_t sample = 0;                          // block-protocol sample index
  std::optional<double> drop_ratio;                // random cell masking
  double validation_fraction = 0.1;                // drop-ratio validation share
  bool normalize = false;                          // train-cell z-score per feature
  std::optional<std::uint64_t> seed;               // data randomness; derived from the run seed when absent
};

void to_json(nlohmann::json& j, const DataSpec& d);
void from_json(const nlohmann::json& j, DataSpec& d);

/// Everything needed to reproduce a run.
struct RunConfig {
  std::string name;
  ModelConfig model;
  TrainConfig train;
  DataSpec data;
  EvalOptions eval;
  ModulationSpec modulation;
  bool match_params = true;       // baselines sized to the NeRT parameter count
  bool share_frequencies = true;  // FFN sigma follows the NeRT omega_init
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Seed of an independent stream derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Hash of the run config with the seed removed; runs differing only by seed share it.
std::string run_config_hash(const RunConfig& config);
/// Hash of the data spec with the seed removed.
std::string data_hash(const RunConfig& config);

/// Benchmark presets applied to flags the user left unset.
struct Overrides {
  std::optional<double> penalty_weight;
  std::optional<std::size_t> epochs;
};
void apply_presets(RunConfig& config, const Overrides& explicit_flags);

/// True if `source` names a generated dataset rather than a file.
bool is_generated_source(std::string_view source);

/// Builds the masked dataset described by `spec`; randomness derives from `seed`.
SignalDataset load_data(const DataSpec& spec, std::uint64_t seed);

/// Raw series of a "periodic" or CSV source, before masking.
RawSeries load_series(const DataSpec& spec, std::uint64_t seed);
/// Applies the masking part of `spec` to a raw series.
SignalDataset mask_series(const RawSeries& series, const DataSpec& spec, std::uint64_t seed);

/// Fills model input sizes from the dataset, derives model seeds, and sizes baselines.
ModelConfig resolve_model(const RunConfig& config, const SignalDataset& data);

struct RunResult {
  std::filesystem::path dir;
  std::size_t parameter_count = 0;
  EvalResult metrics;
  TrainReport report;
};

/// Trains and writes manifest.json, report.json, loss.csv, summary.csv,
/// checkpoint.json and traces/ under `dir`.
RunResult run_train(const RunConfig& config, const std::filesystem::path& dir,
                    const std::function<void(const EpochLog&)>& on_epoch = {});

RunConfig read_manifest(const std::filesystem::path& run_dir);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Reloads a run's checkpoint and dataset and scores it again.
EvalResult evaluate_run(const std::filesystem::path& run_dir, const EvalOptions& options);

/// Predictions at raw coordinates (N x D_raw) for a trained run. Rows of the
/// result are coordinates; per feature the value, period and scale columns.
struct PredictionTable {
  std::vector<std::string> coord_names;
  std::vector<std::string> feature_names;
  bool iso_timestamps = false;
  bool has_factors = false;
  Tensor coords;                 // N x D_raw
  std::vector<double> value;     // N*M row-major
  std::vector<double> period;    // N*M, NeRT only
  std::vector<double> scale;     // N*M, NeRT only
  std::string to_csv() const;
};
PredictionTable predict_run(const std::filesystem::path& run_dir, const Tensor& raw_coords, bool raw_units);

/// Side-by-side table over run directories grouped by (dataset, blocks, model).
struct ComparisonRow {
  std::string dataset;
  std::optional<std::size_t> blocks;
  std::string model;
  std::string config_hash;
  RunSummary summary;
};
std::vector<ComparisonRow> compare_runs(const std::vector<std::filesystem::path>& run_dirs);
std::string comparison_markdown(const std::vector<ComparisonRow>& rows);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

/// Meta-training samples: the "periodic" source with per-sample amplitudes.
std::vector<SignalDataset> load_family(const RunConfig& config, std::size_t count);

struct MetaRunResult {
  MetaTrainReport report;
  std::size_t samples = 0;
};
MetaRunResult run_meta_train(const RunConfig& config, std::size_t samples, const std::filesystem::path& dir,
                             const std::function<void(std::size_t, double, double)>& on_epoch = {});

struct AdaptRunResult {
  std::vector<std::string> sample_names;
  std::vector<std::string> feature_names;
  std::vector<AdaptResult> results;
  nlohmann::json to_json() const;
};
/// Adapts a meta-trained run to `unseen` family members that follow its training samples.
AdaptRunResult run_adapt(const std::filesystem::path& run_dir, std::size_t unseen, std::optional<std::size_t> steps);

}  // namespace nert
