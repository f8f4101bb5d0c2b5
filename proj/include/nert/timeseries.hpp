// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nert/dataset.hpp"

namespace nert {

/// Time-indexed multivariate values as read from CSV. Missing values are NaN.
struct RawSeries {
  std::vector<std::string> coord_names;  // usually {"timestamp"}
  std::vector<std::string> feature_names;
  bool iso_timestamps = false;  // column 0 held ISO-8601 text, stored as epoch seconds
  Tensor coords;                // N x C
  Tensor values;                // N x M

  std::size_t length() const { return values.shape()[0]; }
  std::size_t features() const { return values.shape()[1]; }
  /// Rows [begin, begin + count).
  RawSeries rows(std::size_t begin, std::size_t count) const;
};

struct CsvOptions {
  std::size_t coord_columns = 1;
};

/// Throws ParseError (with the 1-based line) on malformed input and
/// OrderError when coordinate rows are not strictly increasing.
RawSeries parse_csv(std::istream& in, const CsvOptions& options = {});
RawSeries load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

enum class BlockRole { train, interp, extrap, validation };

struct BlockLayout {
  std::size_t block_length = 500;
  std::vector<BlockRole> blocks;

  /// 12 blocks: interp at 3, 5, 7; validation at 8; extrap at 9, 10, 11.
  static BlockLayout standard(std::size_t block_length = 500);
  std::size_t span() const { return block_length * blocks.size(); }
  std::size_t count(BlockRole role) const;
  /// Throws ConfigError unless there is exactly one validation block and the
  /// extrapolation blocks form a suffix.
  void check() const;
};

/// Roles per layout, on sample `sample` (rows [sample*span, (sample+1)*span)).
/// The first `active_blocks` interp and extrap blocks are scored; remaining
/// interp blocks become train and remaining extrap blocks are excluded.
SignalDataset apply_block_protocol(const RawSeries& series, const BlockLayout& layout, std::size_t active_blocks,
                                   const CoordinateConfig& coords = {}, std::size_t sample = 0,
                                   std::optional<bool> use_onehot = {});

/// Moves round(ratio * observed) random observed cells to interp-test, then
/// round(validation_fraction * rest) of the remainder to validation.
SignalDataset apply_drop_ratio(const RawSeries& series, double ratio, std::uint64_t seed,
                               const CoordinateConfig& coords = {}, double validation_fraction = 0.1,
                               std::optional<bool> use_onehot = {});

/// Every observed cell becomes train.
SignalDataset to_dataset(const RawSeries& series, const CoordinateConfig& coords = {},
                         std::optional<bool> use_onehot = {});

/// Per-feature z-score with statistics from observed train cells (sample
/// standard deviation). Stores the statistics on the dataset and returns them.
NormalizationStats normalize(SignalDataset& data);
double denormalize(double value, const NormalizationStats& stats, std::size_t feature);
/// Restores raw targets; no-op when the dataset is not normalized.
void denormalize(SignalDataset& data);

/// Coordinate columns followed by one column per feature; unobserved cells
/// are empty.
void write_dataset_csv(const SignalDataset& data, std::ostream& out);
/// Same layout with role codes 0..4 in the feature columns.
void write_roles_csv(const SignalDataset& data, std::ostream& out);
void save_dataset(const SignalDataset& data, const std::filesystem::path& values_csv,
                  const std::filesystem::path& roles_csv);
/// Inverse of save_dataset. Without a roles file every observed cell is train.
SignalDataset load_dataset(const std::filesystem::path& values_csv, const std::optional<std::filesystem::path>& roles_csv,
                           const CoordinateConfig& coords = {}, const CsvOptions& options = {},
                           std::optional<bool> use_onehot = {});

/// Path of the companion role file of `values_csv` ("x.csv" -> "x.roles.csv").
std::filesystem::path roles_path_for(const std::filesystem::path& values_csv);

std::string format_number(double v);

}  // namespace nert
