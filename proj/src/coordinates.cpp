// SPDX-License-Identifier: Apache-2.0
#include "nert/coordinates.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "nert/error.hpp"

namespace nert {
namespace {

constexpr double kSecondsPerDay = 86400.0;

// Howard Hinnant's civil calendar algorithms.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y = static_cast<int>(yy + (m <= 2));
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int parse_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
  if (pos + len > text.size()) throw ParseError("truncated timestamp '" + std::string(whole) + "'");
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
  if (ec != std::errc() || ptr != text.data() + pos + len) {
    throw ParseError("malformed timestamp '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(CoordinateMode mode) { return mode == CoordinateMode::scalar ? "scalar" : "calendar"; }

CoordinateMode coordinate_mode_from_string(std::string_view name) {
  if (name == "scalar") return CoordinateMode::scalar;
  if (name == "calendar") return CoordinateMode::calendar;
  throw ConfigError("unknown coordinate mode '" + std::string(name) + "'");
}

namespace {
constexpr std::pair<CalendarField, std::string_view> kFieldNames[] = {
    {CalendarField::year, "year"},
    {CalendarField::month, "month"},
    {CalendarField::day, "day"},
    {CalendarField::weekday, "weekday"},
    {CalendarField::hour, "hour"},
    {CalendarField::minute, "minute"},
    {CalendarField::day_of_year, "day_of_year"},
    {CalendarField::week_of_year, "week_of_year"},
    {CalendarField::year_fraction, "year_fraction"},
};
}  // namespace

std::string_view to_string(CalendarField field) {
  for (auto [f, name] : kFieldNames) {
    if (f == field) return name;
  }
  return "unknown";
}

CalendarField calendar_field_from_string(std::string_view name) {
  for (auto [f, n] : kFieldNames) {
    if (n == name) return f;
  }
  throw ConfigError("unknown calendar field '" + std::string(name) + "'");
}

FeatureCoord onehot(std::size_t index, std::size_t feature_count) {
  if (index >= feature_count) {
    throw IndexError("feature index " + std::to_string(index) + " out of range for " + std::to_string(feature_count) +
                     " features");
  }
  FeatureCoord coord;
  coord.onehot.assign(feature_count, 0.0);
  coord.onehot[index] = 1.0;
  coord.index = index;
  return coord;
}

double minmax_scale(double v, double vmin, double vmax, double smin, double smax) {
  if (!(vmax > vmin)) throw DegenerateInputError("min-max scaling over a degenerate range");
  return smin + (v - vmin) / (vmax - vmin) * (smax - smin);
}

double minmax_unscale(double s, double vmin, double vmax, double smin, double smax) {
  if (!(vmax > vmin) || smax == smin) throw DegenerateInputError("min-max scaling over a degenerate range");
  return vmin + (s - smin) / (smax - smin) * (vmax - vmin);
}

CivilTime civil_from_epoch(double epoch_seconds) {
  CivilTime ct;
  const double days_f = std::floor(epoch_seconds / kSecondsPerDay);
  const auto days = static_cast<std::int64_t>(days_f);
  double rem = epoch_seconds - days_f * kSecondsPerDay;
  civil_from_days(days, ct.year, ct.month, ct.day);
  ct.hour = static_cast<int>(rem / 3600.0);
  rem -= ct.hour * 3600.0;
  ct.minute = static_cast<int>(rem / 60.0);
  ct.second = rem - ct.minute * 60.0;
  ct.weekday = static_cast<int>(((days % 7) + 7 + 3) % 7);  // 1970-01-01 was a Thursday
  ct.day_of_year = static_cast<int>(days - days_from_civil(ct.year, 1, 1)) + 1;
  return ct;
}

double epoch_from_civil(int year, int month, int day, int hour, int minute, double second) {
  return static_cast<double>(days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day))) *
             kSecondsPerDay +
         hour * 3600.0 + minute * 60.0 + second;
}

double parse_iso8601(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && (s.back() == 'Z' || s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') throw ParseError("malformed timestamp '" + std::string(text) + "'");
  const int year = parse_int(s, 0, 4, text);
  const int month = parse_int(s, 5, 2, text);
  const int day = parse_int(s, 8, 2, text);
  int hour = 0;
  int minute = 0;
  int second = 0;
  if (s.size() > 10) {
    if (s[10] != 'T' && s[10] != ' ') throw ParseError("malformed timestamp '" + std::string(text) + "'");
    hour = parse_int(s, 11, 2, text);
    if (s.size() < 16 || s[13] != ':') throw ParseError("malformed timestamp '" + std::string(text) + "'");
    minute = parse_int(s, 14, 2, text);
    if (s.size() > 16) {
      if (s[16] != ':') throw ParseError("malformed timestamp '" + std::string(text) + "'");
      second = parse_int(s, 17, 2, text);
      if (s.size() != 19) throw ParseError("malformed timestamp '" + std::string(text) + "'");
    }
  }
  const int mdays[] = {31, is_leap(year) ? 29 : 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month < 1 || month > 12 || day < 1 || day > mdays[month - 1] || hour > 23 || minute > 59 || second > 60) {
    throw ParseError("timestamp out of range '" + std::string(text) + "'");
  }
  return epoch_from_civil(year, month, day, hour, minute, second);
}

std::string format_iso8601(double epoch_seconds) {
  const CivilTime ct = civil_from_epoch(epoch_seconds);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d", ct.year, ct.month, ct.day, ct.hour, ct.minute,
                static_cast<int>(ct.second));
  return buf;
}

double calendar_value(double epoch_seconds, CalendarField field) {
  const CivilTime ct = civil_from_epoch(epoch_seconds);
  switch (field) {
    case CalendarField::year:
      return ct.year;
    case CalendarField::month:
      return ct.month;
    case CalendarField::day:
      return ct.day;
    case CalendarField::weekday:
      return ct.weekday;
    case CalendarField::hour:
      return ct.hour;
    case CalendarField::minute:
      return ct.minute;
    case CalendarField::day_of_year:
      return ct.day_of_year;
    case CalendarField::week_of_year:
      return (ct.day_of_year - 1) / 7 + 1;
    case CalendarField::year_fraction: {
      const double start = epoch_from_civil(ct.year, 1, 1);
      const double len = (is_leap(ct.year) ? 366.0 : 365.0) * kSecondsPerDay;
      return ct.year + (epoch_seconds - start) / len;
    }
  }
  throw ConfigError("unhandled calendar field");
}

std::vector<double> calendar_coord(double epoch_seconds, std::span<const CalendarField> fields,
                                   std::span<const ComponentScaling> ranges, double smin, double smax) {
  if (fields.size() != ranges.size()) throw DimensionError("calendar fields and ranges differ in length");
  std::vector<double> out(fields.size());
  for (std::size_t k = 0; k < fields.size(); ++k) {
    out[k] = minmax_scale(calendar_value(epoch_seconds, fields[k]), ranges[k].vmin, ranges[k].vmax, smin, smax);
  }
  return out;
}

void to_json(nlohmann::json& j, const CoordinateConfig& c) {
  nlohmann::json fields = nlohmann::json::array();
  for (CalendarField f : c.fields) fields.push_back(std::string(to_string(f)));
  j = {{"mode", std::string(to_string(c.mode))}, {"fields", fields}, {"smin", c.smin}, {"smax", c.smax}};
}

void from_json(const nlohmann::json& j, CoordinateConfig& c) {
  const CoordinateConfig d;
  c.mode = j.contains("mode") ? coordinate_mode_from_string(j.at("mode").get<std::string>()) : d.mode;
  c.fields.clear();
  if (j.contains("fields")) {
    for (const auto& f : j.at("fields")) c.fields.push_back(calendar_field_from_string(f.get<std::string>()));
  }
  c.smin = j.value("smin", d.smin);
  c.smax = j.value("smax", d.smax);
}

std::vector<CalendarField> default_calendar_fields(double median_step_seconds) {
  if (median_step_seconds >= 7 * kSecondsPerDay * 0.9) {
    return {CalendarField::year_fraction, CalendarField::week_of_year};
  }
  return {CalendarField::month, CalendarField::day, CalendarField::weekday, CalendarField::hour};
}

std::vector<double> CoordinateSet::map(std::span<const double> raw) const {
  std::vector<double> out(scaling.size());
  if (config.mode == CoordinateMode::calendar) {
    if (raw.size() != 1) throw DimensionError("calendar coordinates take a single epoch-seconds column");
    for (std::size_t k = 0; k < scaling.size(); ++k) {
      out[k] = minmax_scale(calendar_value(raw[0], config.fields[k]), scaling[k].vmin, scaling[k].vmax, config.smin,
                            config.smax);
    }
    return out;
  }
  if (raw.size() != scaling.size()) throw DimensionError("raw coordinate width does not match scaling metadata");
  for (std::size_t k = 0; k < scaling.size(); ++k) {
    out[k] = minmax_scale(raw[k], scaling[k].vmin, scaling[k].vmax, config.smin, config.smax);
  }
  return out;
}

CoordinateSet build_coords(const Tensor& raw, std::size_t feature_count, bool use_onehot,
                           const CoordinateConfig& config, std::span<const std::uint8_t> fit_rows) {
  if (raw.rank() != 2 || raw.shape()[0] == 0 || raw.shape()[1] == 0) {
    throw DegenerateInputError("build_coords needs at least one raw coordinate row");
  }
  if (feature_count == 0) throw DegenerateInputError("build_coords needs at least one feature");
  const std::size_t n = raw.shape()[0];
  const std::size_t d_raw = raw.shape()[1];
  if (!fit_rows.empty() && fit_rows.size() != n) throw DimensionError("fit_rows length does not match raw rows");
  for (std::size_t i = 1; i < n; ++i) {
    if (raw.at(i, 0) < raw.at(i - 1, 0)) throw OrderError("timestamps must be non-decreasing");
  }

  CoordinateSet set;
  set.feature_count = feature_count;
  set.use_onehot = use_onehot;
  set.config = config;

  // Component values before scaling, N x D.
  std::vector<std::vector<double>> components;
  if (config.mode == CoordinateMode::calendar) {
    if (d_raw != 1) throw DimensionError("calendar coordinates take a single epoch-seconds column");
    if (set.config.fields.empty()) {
      std::vector<double> steps;
      for (std::size_t i = 1; i < n; ++i) steps.push_back(raw.at(i, 0) - raw.at(i - 1, 0));
      std::sort(steps.begin(), steps.end());
      set.config.fields = default_calendar_fields(steps.empty() ? 3600.0 : steps[steps.size() / 2]);
    }
    for (CalendarField f : set.config.fields) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = calendar_value(raw.at(i, 0), f);
      components.push_back(std::move(col));
    }
  } else {
    for (std::size_t k = 0; k < d_raw; ++k) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = raw.at(i, k);
      components.push_back(std::move(col));
    }
  }

  const std::size_t d = components.size();
  set.temporal = Tensor({n, d});
  for (std::size_t k = 0; k < d; ++k) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!fit_rows.empty() && !fit_rows[i]) continue;
      lo = std::min(lo, components[k][i]);
      hi = std::max(hi, components[k][i]);
    }
    if (!(hi > lo)) {
      throw DegenerateInputError("temporal component " + std::to_string(k) + " has a degenerate fitted range");
    }
    set.scaling.push_back({lo, hi});
    for (std::size_t i = 0; i < n; ++i) {
      set.temporal.at(i, k) = minmax_scale(components[k][i], lo, hi, config.smin, config.smax);
    }
  }
  return set;
}

}  // namespace nert
