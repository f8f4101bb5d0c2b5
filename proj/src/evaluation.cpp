// SPDX-License-Identifier: Apache-2.0
#include "nert/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nert/error.hpp"
#include "nert/rng.hpp"
#include "nert/timeseries.hpp"

namespace nert {

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

struct Acc {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double diff) {
    sum += diff * diff;
    ++n;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

std::string trace_file_name(const std::string& feature) {
  std::string out;
  for (char ch : feature) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    out.push_back(ok ? ch : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "feature";
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const EvalOptions& o) { j = {{"horizons", o.horizons}, {"raw_units", o.raw_units}}; }

void from_json(const nlohmann::json& j, EvalOptions& o) {
  const EvalOptions d;
  o.horizons = j.value("horizons", d.horizons);
  o.raw_units = j.value("raw_units", d.raw_units);
}

std::optional<double>& RoleMetrics::operator[](Role role) {
  switch (role) {
    case Role::train:
      return train;
    case Role::validation:
      return validation;
    case Role::interp_test:
      return interp;
    case Role::extrap_test:
      return extrap;
    case Role::excluded:
      break;
  }
  throw IndexError("excluded cells carry no metric");
}

const std::optional<double>& RoleMetrics::operator[](Role role) const {
  return const_cast<RoleMetrics&>(*this)[role];
}

nlohmann::json RoleMetrics::to_json() const {
  return {{"train", opt_json(train)},
          {"validation", opt_json(validation)},
          {"interp", opt_json(interp)},
          {"extrap", opt_json(extrap)}};
}

nlohmann::json EvalResult::to_json(const std::vector<std::string>& feature_names) const {
  nlohmann::json j;
  j["mse"] = overall.to_json();
  nlohmann::json features = nlohmann::json::object();
  for (std::size_t f = 0; f < per_feature.size(); ++f) {
    features[f < feature_names.size() ? feature_names[f] : std::to_string(f)] = per_feature[f].to_json();
  }
  j["per_feature"] = features;
  nlohmann::json h = nlohmann::json::object();
  for (const auto& [n, v] : horizons) h[std::to_string(n)] = opt_json(v);
  j["horizons"] = h;
  return j;
}

std::map<std::string, double> EvalResult::flatten(const std::vector<std::string>& feature_names) const {
  std::map<std::string, double> out;
  for (Role r : kScoredRoles) {
    if (overall[r]) out[std::string(to_string(r))] = *overall[r];
  }
  for (std::size_t f = 0; f < per_feature.size(); ++f) {
    const std::string name = f < feature_names.size() ? feature_names[f] : std::to_string(f);
    for (Role r : kScoredRoles) {
      if (per_feature[f][r]) out[name + "." + std::string(to_string(r))] = *per_feature[f][r];
    }
  }
  for (const auto& [n, v] : horizons) {
    if (v) out["horizon." + std::to_string(n)] = *v;
  }
  return out;
}

EvalResult evaluate_predictions(const SignalDataset& data, std::span<const double> prediction,
                                const EvalOptions& options) {
  if (prediction.size() != data.cells()) throw DimensionError("prediction must cover every cell");
  const std::size_t m = data.features();
  const bool denorm = options.raw_units && data.normalization.has_value();
  auto value = [&](double v, std::size_t j) { return denorm ? denormalize(v, *data.normalization, j) : v; };

  std::map<Role, Acc> overall;
  std::vector<std::map<Role, Acc>> features(m);
  std::vector<std::size_t> extrap_rows;
  for (std::size_t c = 0; c < data.cells(); ++c) {
    if (!data.observed[c] || data.roles[c] == Role::excluded) continue;
    const std::size_t j = c % m;
    const double diff = value(prediction[c], j) - value(data.targets[c], j);
    overall[data.roles[c]].add(diff);
    features[j][data.roles[c]].add(diff);
    if (data.roles[c] == Role::extrap_test && (extrap_rows.empty() || extrap_rows.back() != c / m)) {
      extrap_rows.push_back(c / m);
    }
  }

  EvalResult result;
  result.per_feature.resize(m);
  for (Role r : kScoredRoles) {
    result.overall[r] = overall[r].mean();
    for (std::size_t j = 0; j < m; ++j) result.per_feature[j][r] = features[j][r].mean();
  }
  for (std::size_t n : options.horizons) {
    if (n == 0 || extrap_rows.size() < n) {
      result.horizons[n] = std::nullopt;
      continue;
    }
    Acc acc;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = extrap_rows[k];
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t c = i * m + j;
        if (data.observed[c] && data.roles[c] == Role::extrap_test) {
          acc.add(value(prediction[c], j) - value(data.targets[c], j));
        }
      }
    }
    result.horizons[n] = acc.mean();
  }
  return result;
}

EvalResult evaluate(const Model& model, const SignalDataset& data, const EvalOptions& options) {
  const auto pred = model.predict(make_full_batch(data));
  return evaluate_predictions(data, pred.value, options);
}

void export_traces(const Model& model, const SignalDataset& data, const std::filesystem::path& dir,
                   const nlohmann::json& manifest, const EvalOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const auto pred = model.predict(make_full_batch(data));
  const std::size_t m = data.features();
  const std::size_t d_raw = data.raw_coords.shape()[1];
  const bool denorm = options.raw_units && data.normalization.has_value();
  const bool factors = !pred.period.empty();

  nlohmann::json files = nlohmann::json::array();
  for (std::size_t j = 0; j < m; ++j) {
    const std::string file = trace_file_name(data.feature_names[j]) + ".csv";
    const auto path = dir / file;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    if (d_raw == 1) {
      out << "t";
    } else {
      for (std::size_t k = 0; k < d_raw; ++k) out << (k ? "," : "") << data.coord_names[k];
    }
    out << ",target,pred,period,scale,role\n";
    for (std::size_t i = 0; i < data.points(); ++i) {
      const std::size_t c = i * m + j;
      for (std::size_t k = 0; k < d_raw; ++k) {
        const double v = data.raw_coords.at(i, k);
        out << (k ? "," : "") << (k == 0 && data.iso_timestamps ? format_iso8601(v) : format_number(v));
      }
      auto u = [&](double v) { return denorm ? denormalize(v, *data.normalization, j) : v; };
      out << ',';
      if (data.observed[c]) out << format_number(u(data.targets[c]));
      out << ',' << format_number(u(pred.value[c])) << ',';
      if (factors) out << format_number(pred.period[c]) << ',' << format_number(pred.scale[c]);
      else out << ',';
      out << ',' << static_cast<int>(data.roles[c]) << '\n';
    }
    if (!out) throw IoError("failed writing '" + path.string() + "'");
    files.push_back(file);
  }

  nlohmann::json doc = manifest.is_object() ? manifest : nlohmann::json::object();
  doc["files"] = files;
  doc["units"] = denorm ? "raw" : "normalized";
  doc["metrics"] = evaluate_predictions(data, pred.value, options).to_json(data.feature_names);
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<TraceRow> read_trace(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open '" + csv.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trace file", 1);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("trace is missing column '" + name + "'", 1);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ct = col("target"), cp = col("pred"), cper = col("period"), cs = col("scale"), cr = col("role");
  std::vector<TraceRow> rows;
  long line_no = 1;
  auto num = [&](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw ParseError("invalid number '" + s + "'", line_no);
      return v;
    } catch (const std::logic_error&) {
      throw ParseError("invalid number '" + s + "'", line_no);
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      f.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (f.size() != header.size()) throw ParseError("wrong number of fields", line_no);
    TraceRow r;
    r.target = num(f[ct]);
    const auto p = num(f[cp]);
    if (!p) throw ParseError("missing prediction", line_no);
    r.pred = *p;
    r.period = num(f[cper]);
    r.scale = num(f[cs]);
    const auto code = num(f[cr]);
    if (!code) throw ParseError("missing role", line_no);
    r.role = role_from_code(static_cast<int>(*code));
    rows.push_back(r);
  }
  return rows;
}

nlohmann::json RunSummary::to_json() const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["std_estimator"] = "n-1";
  nlohmann::json ms = nlohmann::json::object();
  for (const auto& [name, s] : metrics) {
    ms[name] = {{"mean", s.mean}, {"std", s.stddev}, {"n", s.count}, {"single_run", s.single_run}};
  }
  j["metrics"] = ms;
  return j;
}

std::string RunSummary::to_csv() const {
  std::ostringstream out;
  out << "metric,mean,std,n\n";
  for (const auto& [name, s] : metrics) {
    out << name << ',' << format_number(s.mean) << ',' << format_number(s.stddev) << ',' << s.count << '\n';
  }
  return out.str();
}

RunSummary aggregate_runs(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw ConfigError("aggregate_runs needs at least one run");
  RunSummary summary;
  summary.config_hash = runs.front().config_hash;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : runs) {
    if (r.config_hash != summary.config_hash) throw ConfigError("runs have different config hashes");
    for (const auto& [name, v] : r.metrics) values[name].push_back(v);
  }
  for (const auto& [name, vs] : values) {
    MetricSummary s;
    s.count = vs.size();
    for (double v : vs) s.mean += v;
    s.mean /= static_cast<double>(vs.size());
    if (vs.size() > 1) {
      double ss = 0.0;
      for (double v : vs) ss += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(vs.size() - 1));
    } else {
      s.single_run = true;
    }
    summary.metrics[name] = s;
  }
  return summary;
}

std::string config_hash(const nlohmann::json& config) {
  const std::uint64_t h = Rng::hash(config.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace nert
