// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/tensor.hpp"

namespace nert {

enum class CoordinateMode { scalar, calendar };

enum class CalendarField { year, month, day, weekday, hour, minute, day_of_year, week_of_year, year_fraction };

std::string_view to_string(CoordinateMode mode);
CoordinateMode coordinate_mode_from_string(std::string_view name);
std::string_view to_string(CalendarField field);
CalendarField calendar_field_from_string(std::string_view name);

struct FeatureCoord {
  std::vector<double> onehot;
  std::size_t index = 0;
};

/// Min-max scaling parameters of one temporal component.
struct ComponentScaling {
  double vmin = 0.0;
  double vmax = 1.0;
};

struct CoordinateConfig {
  CoordinateMode mode = CoordinateMode::scalar;
  std::vector<CalendarField> fields;  // calendar mode only; empty selects defaults
  double smin = 0.0;
  double smax = 1.0;
};

void to_json(nlohmann::json& j, const CoordinateConfig& c);
void from_json(const nlohmann::json& j, CoordinateConfig& c);

/// Scaled temporal coordinates plus the feature-index part of the coordinate
/// system. In scalar mode each raw column is one temporal component; in
/// calendar mode the single raw column holds epoch seconds and each calendar
/// field becomes a component.
struct CoordinateSet {
  Tensor temporal;  // N x D
  std::size_t feature_count = 1;
  bool use_onehot = false;
  CoordinateConfig config;
  std::vector<ComponentScaling> scaling;  // one per temporal component

  std::size_t points() const { return temporal.shape()[0]; }
  std::size_t temporal_dim() const { return temporal.shape()[1]; }
  /// Scales a raw coordinate row (same layout as build input) with the stored
  /// metadata; works for rows outside the fitted range.
  std::vector<double> map(std::span<const double> raw) const;
};

FeatureCoord onehot(std::size_t index, std::size_t feature_count);

double minmax_scale(double v, double vmin, double vmax, double smin, double smax);
double minmax_unscale(double s, double vmin, double vmax, double smin, double smax);

/// Broken-down civil time of an epoch-seconds timestamp (naive, UTC-like).
struct CivilTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  double second = 0.0;
  int weekday = 0;      // Monday = 0
  int day_of_year = 1;  // 1..366
};

CivilTime civil_from_epoch(double epoch_seconds);
double epoch_from_civil(int year, int month, int day, int hour = 0, int minute = 0, double second = 0.0);
/// Parses "YYYY-MM-DD", optionally followed by 'T' or ' ' and "HH:MM[:SS]"
/// and a trailing 'Z'. Throws ParseError.
double parse_iso8601(std::string_view text);
std::string format_iso8601(double epoch_seconds);

/// Raw (unscaled) value of one calendar field.
double calendar_value(double epoch_seconds, CalendarField field);

/// Calendar fields of `timestamp`, each min-max scaled with its fitted range.
std::vector<double> calendar_coord(double epoch_seconds, std::span<const CalendarField> fields,
                                   std::span<const ComponentScaling> ranges, double smin, double smax);

std::vector<CalendarField> default_calendar_fields(double median_step_seconds);

/// Builds the coordinate set. `raw` is N x D_raw (row-major). Scaling ranges
/// are fitted on rows where `fit_rows` is true (all rows when empty).
CoordinateSet build_coords(const Tensor& raw, std::size_t feature_count, bool use_onehot,
                           const CoordinateConfig& config, std::span<const std::uint8_t> fit_rows = {});

}  // namespace nert
