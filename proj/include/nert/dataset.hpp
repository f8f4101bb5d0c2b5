// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nert/coordinates.hpp"
#include "nert/tensor.hpp"

namespace nert {

/// Role of one (time, feature) cell. The numeric values are the codes used in
/// exported role-mask files.
enum class Role : std::uint8_t { train = 0, validation = 1, interp_test = 2, extrap_test = 3, excluded = 4 };

inline constexpr std::array<Role, 4> kScoredRoles = {Role::train, Role::validation, Role::interp_test,
                                                     Role::extrap_test};

std::string_view to_string(Role role);
Role role_from_code(int code);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Coordinates + targets + per-cell role and observation masks. Cells are
/// stored row-major: cell (i, j) lives at index i * M + j.
struct SignalDataset {
  std::string name;
  std::vector<std::string> coord_names;    // raw coordinate column names
  std::vector<std::string> feature_names;  // M names
  bool iso_timestamps = false;             // raw column 0 holds epoch seconds
  Tensor raw_coords;                       // N x D_raw
  CoordinateSet coords;
  Tensor targets;                      // N x M
  std::vector<Role> roles;             // N*M
  std::vector<std::uint8_t> observed;  // N*M
  std::optional<NormalizationStats> normalization;

  std::size_t points() const { return targets.shape()[0]; }
  std::size_t features() const { return targets.shape()[1]; }
  std::size_t cells() const { return targets.size(); }
  std::size_t count(Role role) const;
  /// Cell indices holding `role` (observed cells only), ascending.
  std::vector<std::size_t> cells_with(Role role) const;
  /// Rows where at least one observed cell is train.
  std::vector<std::uint8_t> train_rows() const;

  /// Checks shape consistency and that unobserved cells are excluded.
  void validate() const;
};

/// Model inputs for a subset of cells.
struct CellBatch {
  std::vector<std::size_t> cells;
  Tensor temporal;  // K x D (scaled)
  Tensor onehot;    // K x M, or K x 0 when the dataset has no feature coordinates
  Tensor target;    // K x 1
};

CellBatch make_batch(const SignalDataset& data, std::vector<std::size_t> cells);
/// All cells of the dataset, including excluded ones (targets of unobserved
/// cells are reported as 0).
CellBatch make_full_batch(const SignalDataset& data);

/// Rebuilds coordinates with scaling fitted on the current train rows.
void refit_coordinates(SignalDataset& data, const CoordinateConfig& config);

/// Fills coords from raw_coords (fitted on train rows) and validates. Roles,
/// observed and targets must already be set; `use_onehot` defaults to M > 1.
void finalize_dataset(SignalDataset& data, const CoordinateConfig& config, std::optional<bool> use_onehot = {});

}  // namespace nert
