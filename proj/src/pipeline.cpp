// SPDX-License-Identifier: Apache-2.0
#include "nert/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

#include "nert/error.hpp"
#include "nert/rng.hpp"
#include "nert/timeseries.hpp"

namespace nert {

namespace {

constexpr const char* kRunFormat = "nert-run";
constexpr const char* kMetaRunFormat = "nert-meta-run";

bool is_benchmark(std::string_view source) {
  const auto& names = benchmark_names();
  return std::find(names.begin(), names.end(), source) != names.end();
}

std::string dataset_label(const DataSpec& spec) {
  if (is_generated_source(spec.source)) return spec.source;
  return std::filesystem::path(spec.source).stem().string();
}

std::string loss_csv(const TrainReport& r) {
  std::ostringstream out;
  out << "epoch,train_loss,train_mse,val_mse\n";
  for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
    out << e << ',' << format_number(r.train_loss[e]) << ',' << format_number(r.train_mse[e]) << ',';
    if (e < r.val_mse.size()) out << format_number(r.val_mse[e]);
    out << '\n';
  }
  return out.str();
}

std::string metric_cell(const RunSummary& s, const std::string& key) {
  const auto it = s.metrics.find(key);
  if (it == s.metrics.end()) return "-";
  std::ostringstream out;
  out.precision(4);
  out << it->second.mean;
  if (it->second.count > 1) out << " ± " << it->second.stddev;
  return out.str();
}

}  // namespace

void to_json(nlohmann::json& j, const DataSpec& d) {
  j = {{"source", d.source},
       {"benchmark", d.benchmark},
       {"periodic", d.periodic},
       {"coords", d.coords},
       {"coord_columns", d.coord_columns},
       {"roles", d.roles ? nlohmann::json(*d.roles) : nlohmann::json(nullptr)},
       {"blocks", d.blocks ? nlohmann::json(*d.blocks) : nlohmann::json(nullptr)},
       {"block_length", d.block_length},
       {"sample", d.sample},
       {"drop_ratio", d.drop_ratio ? nlohmann::json(*d.drop_ratio) : nlohmann::json(nullptr)},
       {"validation_fraction", d.validation_fraction},
       {"normalize", d.normalize},
       {"seed", d.seed ? nlohmann::json(*d.seed) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, DataSpec& d) {
  const DataSpec def;
  d.source = j.value("source", def.source);
  d.benchmark = j.contains("benchmark") ? j.at("benchmark").get<BenchmarkConfig>() : def.benchmark;
  d.periodic = j.contains("periodic") ? j.at("periodic").get<PeriodicSeriesParams>() : def.periodic;
  d.coords = j.contains("coords") ? j.at("coords").get<CoordinateConfig>() : def.coords;
  d.coord_columns = j.value("coord_columns", def.coord_columns);
  auto opt = [&](const char* key) { return j.contains(key) && !j.at(key).is_null(); };
  d.roles = opt("roles") ? std::optional<std::string>(j.at("roles").get<std::string>()) : std::nullopt;
  d.blocks = opt("blocks") ? std::optional<std::size_t>(j.at("blocks").get<std::size_t>()) : std::nullopt;
  d.block_length = j.value("block_length", def.block_length);
  d.sample = j.value("sample", def.sample);
  d.drop_ratio = opt("drop_ratio") ? std::optional<double>(j.at("drop_ratio").get<double>()) : std::nullopt;
  d.validation_fraction = j.value("validation_fraction", def.validation_fraction);
  d.normalize = j.value("normalize", def.normalize);
  d.seed = opt("seed") ? std::optional<std::uint64_t>(j.at("seed").get<std::uint64_t>()) : std::nullopt;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"name", c.name},
       {"model", c.model},
       {"train", c.train},
       {"data", c.data},
       {"eval", c.eval},
       {"modulation", c.modulation},
       {"match_params", c.match_params},
       {"share_frequencies", c.share_frequencies},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  const RunConfig d;
  c.name = j.value("name", d.name);
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
  c.data = j.contains("data") ? j.at("data").get<DataSpec>() : d.data;
  c.eval = j.contains("eval") ? j.at("eval").get<EvalOptions>() : d.eval;
  c.modulation = j.contains("modulation") ? j.at("modulation").get<ModulationSpec>() : d.modulation;
  c.match_params = j.value("match_params", d.match_params);
  c.share_frequencies = j.value("share_frequencies", d.share_frequencies);
  c.seed = j.value("seed", d.seed);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) { return Rng(seed).split(stream).key(); }

std::string run_config_hash(const RunConfig& config) {
  nlohmann::json j = config;
  j.erase("seed");
  j.erase("name");
  return config_hash(j);
}

std::string data_hash(const RunConfig& config) {
  nlohmann::json j = config.data;
  if (!config.data.seed) j.erase("seed");
  return config_hash(j);
}

void apply_presets(RunConfig& config, const Overrides& flags) {
  const std::string& s = config.data.source;
  if (s.rfind("oscillator", 0) == 0 && config.model.kind == ModelKind::nert && !flags.penalty_weight) {
    config.train.penalty_weight = 1e-4;
  }
  if (s == "helmholtz2d" && !flags.epochs) config.train.epochs = 1000;
  if (flags.penalty_weight) config.train.penalty_weight = *flags.penalty_weight;
  if (flags.epochs) config.train.epochs = *flags.epochs;
}

bool is_generated_source(std::string_view source) { return is_benchmark(source) || source == "periodic"; }

RawSeries load_series(const DataSpec& spec, std::uint64_t seed) {
  if (spec.source == "periodic") return periodic_series(spec.periodic, seed);
  if (is_benchmark(spec.source)) throw ConfigError("'" + spec.source + "' is a benchmark, not a raw series");
  CsvOptions options;
  options.coord_columns = spec.coord_columns;
  return load_csv(spec.source, options);
}

SignalDataset mask_series(const RawSeries& series, const DataSpec& spec, std::uint64_t seed) {
  if (spec.blocks && spec.drop_ratio) throw ConfigError("--blocks and --drop-ratio are mutually exclusive");
  if (spec.blocks) {
    return apply_block_protocol(series, BlockLayout::standard(spec.block_length), *spec.blocks, spec.coords,
                                spec.sample);
  }
  if (spec.drop_ratio) {
    return apply_drop_ratio(series, *spec.drop_ratio, seed, spec.coords, spec.validation_fraction);
  }
  return to_dataset(series, spec.coords);
}

SignalDataset load_data(const DataSpec& spec, std::uint64_t seed) {
  const std::uint64_t dseed = spec.seed.value_or(derive_seed(seed, "data"));
  SignalDataset d;
  if (is_benchmark(spec.source)) {
    if (spec.blocks || spec.drop_ratio) throw ConfigError("masking options apply to series sources only");
    BenchmarkConfig bc = spec.benchmark;
    bc.seed = dseed;
    bc.coords = spec.coords;
    d = make_benchmark(spec.source, bc);
  } else if (spec.source != "periodic" && !spec.blocks && !spec.drop_ratio) {
    const std::filesystem::path values(spec.source);
    std::optional<std::filesystem::path> roles;
    if (spec.roles) {
      roles = *spec.roles;
    } else if (std::filesystem::exists(roles_path_for(values))) {
      roles = roles_path_for(values);
    }
    CsvOptions options;
    options.coord_columns = spec.coord_columns;
    d = roles ? load_dataset(values, roles, spec.coords, options) : mask_series(load_series(spec, dseed), spec, dseed);
  } else {
    d = mask_series(load_series(spec, dseed), spec, dseed);
  }
  d.name = dataset_label(spec);
  if (spec.normalize) normalize(d);
  return d;
}

ModelConfig resolve_model(const RunConfig& config, const SignalDataset& data) {
  ModelConfig nert = config.model;
  nert.kind = ModelKind::nert;
  nert.nert.temporal_dim = data.coords.temporal_dim();
  nert.nert.feature_count = data.features();
  nert.nert.use_onehot = data.coords.use_onehot;
  nert.nert.seed = derive_seed(config.seed, "model");
  if (config.model.kind == ModelKind::nert) return nert;

  ModelConfig out = config.model;
  const std::size_t input = data.coords.temporal_dim() + (data.coords.use_onehot ? data.features() : 0);
  out.siren.input_dim = input;
  out.ffn.input_dim = input;
  out.siren.seed = nert.nert.seed;
  out.ffn.seed = nert.nert.seed;
  if (config.share_frequencies) out.ffn.sigma = config.model.nert.omega_init / (2.0 * std::numbers::pi);
  if (config.match_params) out = match_parameter_count(out, parameter_count(nert));
  return out;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

RunResult run_train(const RunConfig& config, const std::filesystem::path& dir,
                    const std::function<void(const EpochLog&)>& on_epoch) {
  const SignalDataset data = load_data(config.data, config.seed);
  const ModelConfig resolved = resolve_model(config, data);
  auto model = make_model(resolved);
  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, "train");

  RunResult result;
  result.dir = dir;
  result.parameter_count = model->parameter_count();
  result.report = train(*model, data, tc, on_epoch);
  result.metrics = evaluate(*model, data, config.eval);

  const std::string hash = run_config_hash(config);
  nlohmann::json manifest = config;
  manifest["format"] = kRunFormat;
  manifest["version"] = 1;
  manifest["config_hash"] = hash;
  manifest["data_hash"] = data_hash(config);
  manifest["resolved_model"] = resolved;
  manifest["std_estimator"] = "n-1";
  write_json(dir / "manifest.json", manifest);

  const auto flat = result.metrics.flatten(data.feature_names);
  nlohmann::json report;
  report["name"] = config.name;
  report["dataset"] = data.name;
  report["feature_names"] = data.feature_names;
  report["blocks"] = config.data.blocks ? nlohmann::json(*config.data.blocks) : nlohmann::json(nullptr);
  report["model"] = std::string(to_string(resolved.kind));
  report["seed"] = config.seed;
  report["config_hash"] = hash;
  report["data_hash"] = manifest["data_hash"];
  report["parameter_count"] = result.parameter_count;
  report["metrics"] = result.metrics.to_json(data.feature_names);
  report["flat_metrics"] = flat;
  report["training"] = report_to_json(result.report);
  write_json(dir / "report.json", report);
  write_text(dir / "loss.csv", loss_csv(result.report));
  write_text(dir / "summary.csv", aggregate_runs({RunRecord{hash, config.seed, flat}}).to_csv());
  write_json(dir / "checkpoint.json", model->checkpoint());
  export_traces(*model, data, dir / "traces", {{"config_hash", hash}, {"seed", config.seed}}, config.eval);
  return result;
}

RunConfig read_manifest(const std::filesystem::path& run_dir) {
  const nlohmann::json j = read_json(run_dir / "manifest.json");
  const std::string format = j.value("format", std::string());
  if (format != kRunFormat && format != kMetaRunFormat) {
    throw ParseError("'" + (run_dir / "manifest.json").string() + "' is not a run manifest");
  }
  return j.get<RunConfig>();
}

EvalResult evaluate_run(const std::filesystem::path& run_dir, const EvalOptions& options) {
  const RunConfig config = read_manifest(run_dir);
  const SignalDataset data = load_data(config.data, config.seed);
  const auto model = load_checkpoint(read_json(run_dir / "checkpoint.json"));
  return evaluate(*model, data, options);
}

std::string PredictionTable::to_csv() const {
  std::ostringstream out;
  const std::size_t n = coords.shape()[0];
  const std::size_t d = coords.shape()[1];
  const std::size_t m = feature_names.size();
  for (std::size_t k = 0; k < d; ++k) out << (k ? "," : "") << coord_names[k];
  for (const auto& f : feature_names) {
    out << ',' << f;
    if (has_factors) out << ',' << f << ".period," << f << ".scale";
  }
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double v = coords.at(i, k);
      out << (k ? "," : "") << (k == 0 && iso_timestamps ? format_iso8601(v) : format_number(v));
    }
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t c = i * m + j;
      out << ',' << format_number(value[c]);
      if (has_factors) out << ',' << format_number(period[c]) << ',' << format_number(scale[c]);
    }
    out << '\n';
  }
  return out.str();
}

PredictionTable predict_run(const std::filesystem::path& run_dir, const Tensor& raw_coords, bool raw_units) {
  const RunConfig config = read_manifest(run_dir);
  const SignalDataset data = load_data(config.data, config.seed);
  const auto model = load_checkpoint(read_json(run_dir / "checkpoint.json"));
  if (raw_coords.rank() != 2 || raw_coords.shape()[1] != data.raw_coords.shape()[1]) {
    throw DimensionError("prediction coordinates need " + std::to_string(data.raw_coords.shape()[1]) + " columns");
  }
  const std::size_t n = raw_coords.shape()[0];
  const std::size_t m = data.features();
  const std::size_t dim = data.coords.temporal_dim();
  const std::size_t width = data.coords.use_onehot ? m : 0;
  CellBatch batch;
  batch.temporal = Tensor({n * m, dim});
  batch.onehot = Tensor({n * m, width});
  batch.target = Tensor({n * m, 1});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(raw_coords.shape()[1]);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = raw_coords.at(i, k);
    const auto mapped = data.coords.map(row);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t r = i * m + j;
      for (std::size_t q = 0; q < dim; ++q) batch.temporal.at(r, q) = mapped[q];
      if (width) batch.onehot.at(r, j) = 1.0;
      batch.cells.push_back(r);
    }
  }
  auto pred = model->predict(batch);
  PredictionTable t;
  t.coord_names = data.coord_names;
  t.feature_names = data.feature_names;
  t.iso_timestamps = data.iso_timestamps;
  t.has_factors = !pred.period.empty();
  t.coords = raw_coords;
  if (raw_units && data.normalization) {
    for (std::size_t c = 0; c < pred.value.size(); ++c) {
      pred.value[c] = denormalize(pred.value[c], *data.normalization, c % m);
    }
  }
  t.value = std::move(pred.value);
  t.period = std::move(pred.period);
  t.scale = std::move(pred.scale);
  return t;
}

std::vector<ComparisonRow> compare_runs(const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  using Key = std::tuple<std::string, std::size_t, std::string>;
  std::map<Key, std::vector<RunRecord>> groups;
  std::map<std::pair<std::string, std::size_t>, std::string> data_hashes;
  for (const auto& dir : run_dirs) {
    const nlohmann::json report = read_json(dir / "report.json");
    const std::string dataset = report.at("dataset").get<std::string>();
    const std::size_t blocks = report.at("blocks").is_null() ? 0 : report.at("blocks").get<std::size_t>();
    const std::string dhash = report.at("data_hash").get<std::string>();
    auto [it, inserted] = data_hashes.emplace(std::make_pair(dataset, blocks), dhash);
    if (!inserted && it->second != dhash) {
      throw ConfigError("runs on dataset '" + dataset + "' use incompatible data settings");
    }
    RunRecord rec;
    rec.config_hash = report.at("config_hash").get<std::string>();
    rec.seed = report.at("seed").get<std::uint64_t>();
    rec.metrics = report.at("flat_metrics").get<std::map<std::string, double>>();
    groups[{dataset, blocks, report.at("model").get<std::string>()}].push_back(std::move(rec));
  }
  std::vector<ComparisonRow> rows;
  for (const auto& [key, records] : groups) {
    ComparisonRow row;
    row.dataset = std::get<0>(key);
    if (std::get<1>(key) > 0) row.blocks = std::get<1>(key);
    row.model = std::get<2>(key);
    row.summary = aggregate_runs(records);
    row.config_hash = row.summary.config_hash;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string comparison_markdown(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "| dataset | # blocks | model | runs | interp MSE | extrap MSE |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const std::size_t n = r.summary.metrics.empty() ? 0 : r.summary.metrics.begin()->second.count;
    out << "| " << r.dataset << " | " << (r.blocks ? std::to_string(*r.blocks) : "-") << " | " << r.model << " | " << n
        << " | " << metric_cell(r.summary, "interp") << " | " << metric_cell(r.summary, "extrap") << " |\n";
  }
  return out.str();
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "dataset,blocks,model,metric,mean,std,n\n";
  for (const auto& r : rows) {
    for (const auto& [name, s] : r.summary.metrics) {
      out << r.dataset << ',' << (r.blocks ? std::to_string(*r.blocks) : "") << ',' << r.model << ',' << name << ','
          << format_number(s.mean) << ',' << format_number(s.stddev) << ',' << s.count << '\n';
    }
  }
  return out.str();
}

std::vector<SignalDataset> load_family(const RunConfig& config, std::size_t count) {
  if (config.data.source != "periodic") throw ConfigError("meta-training samples come from the 'periodic' source");
  if (config.data.normalize) throw ConfigError("per-sample normalization would remove the amplitude differences");
  const std::uint64_t dseed = config.data.seed.value_or(derive_seed(config.seed, "data"));
  std::vector<SignalDataset> out;
  std::size_t k = 0;
  for (const RawSeries& s : amplitude_family(config.data.periodic, dseed, count)) {
    SignalDataset d = mask_series(s, config.data, derive_seed(dseed, "sample-" + std::to_string(k)));
    d.name = "sample-" + std::to_string(k++);
    out.push_back(std::move(d));
  }
  return out;
}

MetaRunResult run_meta_train(const RunConfig& config, std::size_t samples, const std::filesystem::path& dir,
                             const std::function<void(std::size_t, double, double)>& on_epoch) {
  const std::vector<SignalDataset> family = load_family(config, samples);
  ModulationSpec spec = config.modulation;
  spec.seed = derive_seed(config.seed, "modulation");
  ModulatedModel model(make_model(resolve_model(config, family.front())), spec);
  MetaRunResult result;
  result.samples = samples;
  result.report = meta_train(model, family, on_epoch);

  nlohmann::json manifest = config;
  manifest["format"] = kMetaRunFormat;
  manifest["version"] = 1;
  manifest["samples"] = samples;
  manifest["config_hash"] = run_config_hash(config);
  write_json(dir / "manifest.json", manifest);
  write_json(dir / "checkpoint.json", model.checkpoint());
  std::ostringstream loss;
  loss << "epoch,pre_adapt_mse,post_adapt_mse\n";
  for (std::size_t e = 0; e < result.report.pre_loss.size(); ++e) {
    loss << e << ',' << format_number(result.report.pre_loss[e]) << ',' << format_number(result.report.post_loss[e])
         << '\n';
  }
  write_text(dir / "loss.csv", loss.str());
  write_json(dir / "report.json", {{"samples", samples},
                                   {"final_pre_adapt_mse", result.report.pre_loss.back()},
                                   {"final_post_adapt_mse", result.report.post_loss.back()},
                                   {"wall_seconds", result.report.wall_seconds}});
  return result;
}

nlohmann::json AdaptRunResult::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t k = 0; k < results.size(); ++k) {
    const AdaptResult& r = results[k];
    out.push_back({{"sample", sample_names[k]},
                   {"zero_train_mse", r.zero_train_mse},
                   {"adapted_train_mse", r.adapted_train_mse},
                   {"trajectory", r.trajectory},
                   {"zero", r.zero.to_json(feature_names)},
                   {"adapted", r.adapted.to_json(feature_names)}});
  }
  return out;
}

AdaptRunResult run_adapt(const std::filesystem::path& run_dir, std::size_t unseen, std::optional<std::size_t> steps) {
  const nlohmann::json manifest = read_json(run_dir / "manifest.json");
  if (manifest.value("format", std::string()) != kMetaRunFormat) {
    throw ConfigError("'" + run_dir.string() + "' is not a meta-training run");
  }
  const RunConfig config = manifest.get<RunConfig>();
  const std::size_t seen = manifest.at("samples").get<std::size_t>();
  const ModulatedModel model = ModulatedModel::load(read_json(run_dir / "checkpoint.json"));
  const std::vector<SignalDataset> family = load_family(config, seen + unseen);
  AdaptRunResult out;
  out.feature_names = family.front().feature_names;
  for (std::size_t k = seen; k < family.size(); ++k) {
    out.sample_names.push_back(family[k].name);
    out.results.push_back(adapt(model, family[k], steps, config.eval));
  }
  return out;
}

}  // namespace nert
