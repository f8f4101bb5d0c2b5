// SPDX-License-Identifier: Apache-2.0
#include "nert/dataset.hpp"

#include <cmath>

#include "nert/error.hpp"

namespace nert {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::train:
      return "train";
    case Role::validation:
      return "validation";
    case Role::interp_test:
      return "interp";
    case Role::extrap_test:
      return "extrap";
    case Role::excluded:
      return "excluded";
  }
  return "unknown";
}

Role role_from_code(int code) {
  if (code < 0 || code > 4) throw ParseError("role code " + std::to_string(code) + " outside {0..4}");
  return static_cast<Role>(code);
}

std::size_t SignalDataset::count(Role role) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < roles.size(); ++c) {
    if (roles[c] == role && (role == Role::excluded || observed[c])) ++n;
  }
  return n;
}

std::vector<std::size_t> SignalDataset::cells_with(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < roles.size(); ++c) {
    if (roles[c] == role && observed[c]) out.push_back(c);
  }
  return out;
}

std::vector<std::uint8_t> SignalDataset::train_rows() const {
  const std::size_t m = features();
  std::vector<std::uint8_t> rows(points(), 0);
  for (std::size_t c = 0; c < roles.size(); ++c) {
    if (roles[c] == Role::train && observed[c]) rows[c / m] = 1;
  }
  return rows;
}

void SignalDataset::validate() const {
  if (targets.rank() != 2) throw DimensionError("targets must be N x M");
  const std::size_t n = points();
  if (raw_coords.rank() != 2 || raw_coords.shape()[0] != n) throw DimensionError("raw coordinates must have N rows");
  if (coords.temporal.rank() != 2 || coords.points() != n) throw DimensionError("coordinates must have N rows");
  if (coords.feature_count != features()) throw DimensionError("coordinate feature count does not match targets");
  if (roles.size() != cells() || observed.size() != cells()) throw DimensionError("mask sizes must equal N*M");
  if (feature_names.size() != features()) throw DimensionError("feature names must have M entries");
  for (std::size_t c = 0; c < cells(); ++c) {
    if (!observed[c] && roles[c] != Role::excluded) throw ContractError("unobserved cell carries a scored role");
    if (observed[c] && !std::isfinite(targets[c])) throw NumericError("observed cell holds a non-finite target");
  }
}

CellBatch make_batch(const SignalDataset& data, std::vector<std::size_t> cells) {
  const std::size_t m = data.features();
  const std::size_t d = data.coords.temporal_dim();
  const std::size_t k = cells.size();
  const std::size_t onehot_width = data.coords.use_onehot ? m : 0;
  CellBatch batch;
  batch.temporal = Tensor({k, d});
  batch.onehot = Tensor({k, onehot_width});
  batch.target = Tensor({k, 1});
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t c = cells[r];
    if (c >= data.cells()) throw IndexError("cell index out of range");
    const std::size_t i = c / m;
    const std::size_t j = c % m;
    for (std::size_t q = 0; q < d; ++q) batch.temporal.at(r, q) = data.coords.temporal.at(i, q);
    if (onehot_width) batch.onehot.at(r, j) = 1.0;
    batch.target.at(r, 0) = data.observed[c] ? data.targets[c] : 0.0;
  }
  batch.cells = std::move(cells);
  return batch;
}

CellBatch make_full_batch(const SignalDataset& data) {
  std::vector<std::size_t> all(data.cells());
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
  return make_batch(data, std::move(all));
}

void refit_coordinates(SignalDataset& data, const CoordinateConfig& config) {
  const auto rows = data.train_rows();
  data.coords = build_coords(data.raw_coords, data.features(), data.coords.use_onehot, config, rows);
}

void finalize_dataset(SignalDataset& data, const CoordinateConfig& config, std::optional<bool> use_onehot) {
  if (data.targets.rank() != 2) throw DimensionError("targets must be N x M");
  const bool onehot_enabled = use_onehot.value_or(data.features() > 1);
  data.coords = build_coords(data.raw_coords, data.features(), onehot_enabled, config, data.train_rows());
  data.validate();
}

}  // namespace nert
