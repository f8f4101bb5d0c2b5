// SPDX-License-Identifier: Apache-2.0
#include "nert/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "nert/error.hpp"
#include "nert/rng.hpp"

namespace nert {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool is_missing(std::string_view s) { return s.empty() || s == "nan" || s == "NaN" || s == "NA" || s == "null"; }

bool lex_less(const Tensor& coords, std::size_t a, std::size_t b) {
  const std::size_t c = coords.shape()[1];
  for (std::size_t k = 0; k < c; ++k) {
    const double x = coords.at(a, k);
    const double y = coords.at(b, k);
    if (x < y) return true;
    if (x > y) return false;
  }
  return false;
}

SignalDataset dataset_shell(const RawSeries& series) {
  SignalDataset d;
  d.coord_names = series.coord_names;
  d.feature_names = series.feature_names;
  d.iso_timestamps = series.iso_timestamps;
  d.raw_coords = series.coords;
  d.targets = series.values;
  const std::size_t cells = series.values.size();
  d.roles.assign(cells, Role::train);
  d.observed.assign(cells, 1);
  for (std::size_t c = 0; c < cells; ++c) {
    if (!std::isfinite(series.values[c])) {
      d.observed[c] = 0;
      d.roles[c] = Role::excluded;
      d.targets[c] = 0.0;
    }
  }
  return d;
}

void check_coordinate_mode(const RawSeries& series, const CoordinateConfig& coords) {
  if (coords.mode == CoordinateMode::calendar && !series.iso_timestamps) {
    throw ConfigError("calendar coordinates need ISO-8601 timestamps");
  }
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

RawSeries RawSeries::rows(std::size_t begin, std::size_t count) const {
  if (begin + count > length()) throw IndexError("row range exceeds the series length");
  RawSeries out;
  out.coord_names = coord_names;
  out.feature_names = feature_names;
  out.iso_timestamps = iso_timestamps;
  const std::size_t c = coords.shape()[1];
  const std::size_t m = features();
  out.coords = Tensor({count, c});
  out.values = Tensor({count, m});
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < c; ++k) out.coords.at(i, k) = coords.at(begin + i, k);
    for (std::size_t j = 0; j < m; ++j) out.values.at(i, j) = values.at(begin + i, j);
  }
  return out;
}

RawSeries parse_csv(std::istream& in, const CsvOptions& options) {
  const std::size_t nc = options.coord_columns;
  if (nc == 0) throw ConfigError("at least one coordinate column is required");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header_line = line;
      if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) header_line.erase(0, 3);
      header = split_fields(header_line);
      break;
    }
  }
  if (header.empty()) throw ParseError("missing header row", static_cast<long>(line_no));
  if (header.size() <= nc) throw ParseError("header needs coordinate columns and at least one feature", line_no);

  RawSeries series;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k].empty()) throw ParseError("empty column name", line_no);
    (k < nc ? series.coord_names : series.feature_names).emplace_back(header[k]);
  }
  const std::size_t m = series.feature_names.size();
  std::vector<double> coords;
  std::vector<double> values;
  std::optional<bool> iso;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t k = 0; k < nc; ++k) {
      std::optional<double> v;
      if (k == 0) {
        if (!iso) iso = !parse_number(fields[0]).has_value();
        if (*iso) {
          try {
            v = parse_iso8601(fields[0]);
          } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
          }
        } else {
          v = parse_number(fields[0]);
        }
      } else {
        v = parse_number(fields[k]);
      }
      if (!v || !std::isfinite(*v)) {
        throw ParseError("invalid coordinate '" + std::string(fields[k]) + "'", line_no);
      }
      coords.push_back(*v);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const std::string_view f = fields[nc + j];
      if (is_missing(f)) {
        values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto v = parse_number(f);
      if (!v) throw ParseError("invalid value '" + std::string(f) + "'", line_no);
      values.push_back(std::isfinite(*v) ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", line_no);
  series.iso_timestamps = iso.value_or(false);
  series.coords = Tensor({rows, nc}, std::move(coords));
  series.values = Tensor({rows, m}, std::move(values));
  for (std::size_t i = 1; i < rows; ++i) {
    if (!lex_less(series.coords, i - 1, i)) {
      throw OrderError("coordinates must be strictly increasing (data row " + std::to_string(i + 1) + ")");
    }
  }
  return series;
}

RawSeries load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return parse_csv(in, options);
}

BlockLayout BlockLayout::standard(std::size_t block_length) {
  BlockLayout layout;
  layout.block_length = block_length;
  layout.blocks.assign(12, BlockRole::train);
  for (std::size_t b : {3, 5, 7}) layout.blocks[b] = BlockRole::interp;
  layout.blocks[8] = BlockRole::validation;
  for (std::size_t b : {9, 10, 11}) layout.blocks[b] = BlockRole::extrap;
  return layout;
}

std::size_t BlockLayout::count(BlockRole role) const {
  return static_cast<std::size_t>(std::count(blocks.begin(), blocks.end(), role));
}

void BlockLayout::check() const {
  if (block_length == 0) throw ConfigError("block length must be >= 1");
  if (count(BlockRole::validation) != 1) throw ConfigError("layout needs exactly one validation block");
  bool seen_extrap = false;
  for (BlockRole r : blocks) {
    if (r == BlockRole::extrap) {
      seen_extrap = true;
    } else if (seen_extrap) {
      throw ConfigError("extrapolation blocks must occupy the suffix of the layout");
    }
  }
}

SignalDataset apply_block_protocol(const RawSeries& series, const BlockLayout& layout, std::size_t active_blocks,
                                   const CoordinateConfig& coords, std::size_t sample,
                                   std::optional<bool> use_onehot) {
  layout.check();
  check_coordinate_mode(series, coords);
  if (active_blocks == 0) throw ConfigError("number of test blocks must be >= 1");
  if (active_blocks > layout.count(BlockRole::interp) && active_blocks > layout.count(BlockRole::extrap)) {
    throw ConfigError("layout has fewer test blocks than requested");
  }
  const std::size_t span = layout.span();
  if (series.length() < (sample + 1) * span) {
    throw ConfigError("series has " + std::to_string(series.length()) + " rows; the layout needs " +
                      std::to_string((sample + 1) * span));
  }
  SignalDataset d = dataset_shell(series.rows(sample * span, span));
  const std::size_t m = d.features();
  std::size_t interp_seen = 0;
  std::size_t extrap_seen = 0;
  for (std::size_t b = 0; b < layout.blocks.size(); ++b) {
    Role role = Role::train;
    switch (layout.blocks[b]) {
      case BlockRole::train:
        role = Role::train;
        break;
      case BlockRole::validation:
        role = Role::validation;
        break;
      case BlockRole::interp:
        role = interp_seen++ < active_blocks ? Role::interp_test : Role::train;
        break;
      case BlockRole::extrap:
        role = extrap_seen++ < active_blocks ? Role::extrap_test : Role::excluded;
        break;
    }
    for (std::size_t i = b * layout.block_length; i < (b + 1) * layout.block_length; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t c = i * m + j;
        if (d.observed[c]) d.roles[c] = role;
      }
    }
  }
  d.name = "blocks-" + std::to_string(active_blocks);
  finalize_dataset(d, coords, use_onehot);
  return d;
}

SignalDataset apply_drop_ratio(const RawSeries& series, double ratio, std::uint64_t seed,
                               const CoordinateConfig& coords, double validation_fraction,
                               std::optional<bool> use_onehot) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("drop ratio must lie in (0, 1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  check_coordinate_mode(series, coords);
  SignalDataset d = dataset_shell(series);
  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < d.cells(); ++c) {
    if (d.observed[c]) cells.push_back(c);
  }
  Rng rng = Rng(seed).split("drop-ratio");
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  const auto n_test = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(cells.size())));
  const std::size_t rest = cells.size() - n_test;
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(rest)));
  if (rest == n_val) throw ConfigError("drop ratio leaves no train cells");
  for (std::size_t k = 0; k < cells.size(); ++k) {
    d.roles[cells[k]] = k < n_test ? Role::interp_test : (k < n_test + n_val ? Role::validation : Role::train);
  }
  std::ostringstream name;
  name << "drop-" << format_number(ratio);
  d.name = name.str();
  finalize_dataset(d, coords, use_onehot);
  return d;
}

SignalDataset to_dataset(const RawSeries& series, const CoordinateConfig& coords, std::optional<bool> use_onehot) {
  check_coordinate_mode(series, coords);
  SignalDataset d = dataset_shell(series);
  d.name = "series";
  finalize_dataset(d, coords, use_onehot);
  return d;
}

NormalizationStats normalize(SignalDataset& data) {
  if (data.normalization) throw ContractError("dataset is already normalized");
  const std::size_t m = data.features();
  NormalizationStats stats;
  stats.mean.assign(m, 0.0);
  stats.stddev.assign(m, 0.0);
  std::vector<std::size_t> counts(m, 0);
  for (std::size_t c = 0; c < data.cells(); ++c) {
    if (data.observed[c] && data.roles[c] == Role::train) {
      stats.mean[c % m] += data.targets[c];
      ++counts[c % m];
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (counts[j] < 2) {
      throw DegenerateInputError("feature '" + data.feature_names[j] + "' has fewer than two train values");
    }
    stats.mean[j] /= static_cast<double>(counts[j]);
  }
  for (std::size_t c = 0; c < data.cells(); ++c) {
    if (data.observed[c] && data.roles[c] == Role::train) {
      const double diff = data.targets[c] - stats.mean[c % m];
      stats.stddev[c % m] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    stats.stddev[j] = std::sqrt(stats.stddev[j] / static_cast<double>(counts[j] - 1));
    if (!(stats.stddev[j] > 0.0)) {
      throw DegenerateInputError("feature '" + data.feature_names[j] + "' has zero variance on train cells");
    }
  }
  for (std::size_t c = 0; c < data.cells(); ++c) {
    if (data.observed[c]) data.targets[c] = (data.targets[c] - stats.mean[c % m]) / stats.stddev[c % m];
  }
  data.normalization = stats;
  return stats;
}

double denormalize(double value, const NormalizationStats& stats, std::size_t feature) {
  return value * stats.stddev.at(feature) + stats.mean.at(feature);
}

void denormalize(SignalDataset& data) {
  if (!data.normalization) return;
  const std::size_t m = data.features();
  for (std::size_t c = 0; c < data.cells(); ++c) {
    if (data.observed[c]) data.targets[c] = denormalize(data.targets[c], *data.normalization, c % m);
  }
  data.normalization.reset();
}

namespace {

void write_header(const SignalDataset& data, std::ostream& out) {
  bool first = true;
  for (const auto& n : data.coord_names) {
    out << (first ? "" : ",") << n;
    first = false;
  }
  for (const auto& n : data.feature_names) out << ',' << n;
  out << '\n';
}

void write_coords(const SignalDataset& data, std::size_t i, std::ostream& out) {
  const std::size_t c = data.raw_coords.shape()[1];
  for (std::size_t k = 0; k < c; ++k) {
    if (k) out << ',';
    const double v = data.raw_coords.at(i, k);
    out << (k == 0 && data.iso_timestamps ? format_iso8601(v) : format_number(v));
  }
}

}  // namespace

void write_dataset_csv(const SignalDataset& data, std::ostream& out) {
  write_header(data, out);
  const std::size_t m = data.features();
  for (std::size_t i = 0; i < data.points(); ++i) {
    write_coords(data, i, out);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t c = i * m + j;
      out << ',';
      if (!data.observed[c]) continue;
      const double v = data.normalization ? denormalize(data.targets[c], *data.normalization, j) : data.targets[c];
      out << format_number(v);
    }
    out << '\n';
  }
}

void write_roles_csv(const SignalDataset& data, std::ostream& out) {
  write_header(data, out);
  const std::size_t m = data.features();
  for (std::size_t i = 0; i < data.points(); ++i) {
    write_coords(data, i, out);
    for (std::size_t j = 0; j < m; ++j) out << ',' << static_cast<int>(data.roles[i * m + j]);
    out << '\n';
  }
}

std::filesystem::path roles_path_for(const std::filesystem::path& values_csv) {
  std::filesystem::path p = values_csv;
  p.replace_extension();
  p += ".roles.csv";
  return p;
}

void save_dataset(const SignalDataset& data, const std::filesystem::path& values_csv,
                  const std::filesystem::path& roles_csv) {
  for (const auto& [path, writer] :
       {std::pair{values_csv, &write_dataset_csv}, std::pair{roles_csv, &write_roles_csv}}) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    writer(data, out);
    if (!out) throw IoError("failed writing '" + path.string() + "'");
  }
}

SignalDataset load_dataset(const std::filesystem::path& values_csv, const std::optional<std::filesystem::path>& roles_csv,
                           const CoordinateConfig& coords, const CsvOptions& options,
                           std::optional<bool> use_onehot) {
  const RawSeries series = load_csv(values_csv, options);
  check_coordinate_mode(series, coords);
  SignalDataset d = dataset_shell(series);
  d.name = values_csv.stem().string();
  if (roles_csv) {
    const RawSeries roles = load_csv(*roles_csv, options);
    if (roles.values.shape() != series.values.shape() || roles.coords.storage() != series.coords.storage()) {
      throw DimensionError("role file does not match the value file");
    }
    for (std::size_t c = 0; c < d.cells(); ++c) {
      const double code = roles.values[c];
      if (!std::isfinite(code) || code != std::floor(code)) throw ParseError("role codes must be integers 0..4");
      const Role role = role_from_code(static_cast<int>(code));
      if (d.observed[c]) {
        d.roles[c] = role;
      } else if (role != Role::excluded) {
        throw ContractError("missing value carries a scored role");
      }
    }
  }
  finalize_dataset(d, coords, use_onehot);
  return d;
}

}  // namespace nert
