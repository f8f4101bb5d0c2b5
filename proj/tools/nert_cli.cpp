// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "nert/error.hpp"
#include "nert/pipeline.hpp"
#include "nert/timeseries.hpp"

namespace fs = std::filesystem;
using namespace nert;

namespace {

std::mutex g_log_mutex;

fs::path lab_home() {
  if (const char* home = std::getenv("NERT_LAB_HOME"); home && *home) return home;
  return fs::current_path();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_coordinate(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  return parse_iso8601(text);
}

Tensor parse_rows(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) throw ConfigError("no prediction coordinates given");
  const std::size_t d = rows.front().size();
  Tensor t({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw ParseError("coordinate rows have different widths", static_cast<long>(i + 1));
    for (std::size_t k = 0; k < d; ++k) t.at(i, k) = parse_coordinate(rows[i][k]);
  }
  return t;
}

Tensor read_coordinate_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    rows.push_back(split(line, ','));
  }
  return parse_rows(rows);
}

struct TrainFlags {
  std::string config;
  std::string model;
  std::string data;
  std::string task;
  std::string name;
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 1;
  std::optional<std::size_t> blocks;
  std::optional<std::size_t> block_length;
  std::optional<double> drop_ratio;
  std::optional<double> penalty;
  std::optional<double> omega0;
  std::optional<double> omega_init;
  std::optional<double> omega_inner;
  std::string coords;
  bool learn_frequencies = false;
  bool normalize = false;
  bool raw_units = false;
  std::size_t jobs = 1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "JSON run config or a run manifest");
  cmd->add_option("--data", f.data, "benchmark name, 'periodic', or a CSV path");
  cmd->add_option("--task", f.task, "oscillator task: interp, extrap or mixed");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--blocks", f.blocks, "active test blocks of the block protocol")->check(CLI::Range(1, 3));
  cmd->add_option("--block-length", f.block_length, "points per block");
  cmd->add_option("--drop-ratio", f.drop_ratio, "fraction of cells masked for imputation")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--omega-init", f.omega_init, "NeRT frequency bound");
  cmd->add_option("--omega-inner", f.omega_inner, "NeRT periodic decoder sine frequency");
  cmd->add_option("--coords", f.coords, "coordinate mode: scalar or calendar");
  cmd->add_flag("--learn-frequencies", f.learn_frequencies, "train the Fourier frequencies");
  cmd->add_flag("--normalize", f.normalize, "z-score targets with train-cell statistics");
  cmd->add_option("--name", f.name, "run name");
  cmd->add_option("--out", f.out, "run directory");
  cmd->add_flag("--quiet", f.quiet, "suppress progress output");
}

RunConfig build_config(const TrainFlags& f) {
  RunConfig c;
  if (!f.config.empty()) c = read_json(f.config).get<RunConfig>();
  if (!f.data.empty()) {
    c.data.source = f.data;
    if (!is_generated_source(f.data)) c.data.source = fs::absolute(f.data).string();
  }
  if (!f.task.empty()) c.data.benchmark.task = oscillator_task_from_string(f.task);
  if (f.lr) {
    c.train.learning_rate = *f.lr;
    c.modulation.outer_lr = *f.lr;
  }
  if (f.seed) c.seed = *f.seed;
  if (f.blocks) c.data.blocks = f.blocks;
  if (f.block_length) {
    c.data.block_length = *f.block_length;
    c.data.periodic.length = 12 * *f.block_length;
  }
  if (f.drop_ratio) c.data.drop_ratio = f.drop_ratio;
  if (f.omega0) c.model.siren.omega0 = *f.omega0;
  if (f.omega_init) c.model.nert.omega_init = *f.omega_init;
  if (f.omega_inner) c.model.nert.omega_inner = *f.omega_inner;
  if (!f.coords.empty()) c.data.coords.mode = coordinate_mode_from_string(f.coords);
  if (c.data.source == "periodic" && c.data.coords.mode == CoordinateMode::calendar &&
      !(c.data.periodic.step_seconds > 0.0)) {
    c.data.periodic.step_seconds = 3600.0;
  }
  if (f.learn_frequencies) c.model.nert.learn_frequencies = true;
  if (f.normalize) c.data.normalize = true;
  if (f.raw_units) c.eval.raw_units = true;
  return c;
}

std::string default_name(const RunConfig& c) {
  std::string label = is_generated_source(c.data.source) ? c.data.source : fs::path(c.data.source).stem().string();
  if (c.data.source.rfind("oscillator", 0) == 0) label += "-" + std::string(to_string(c.data.benchmark.task));
  std::string name = label + "-" + std::string(to_string(c.model.kind));
  if (c.data.blocks) name += "-b" + std::to_string(*c.data.blocks);
  return name + "-s" + std::to_string(c.seed);
}

void log_line(const std::string& text) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << text << '\n';
}

int cmd_train(const TrainFlags& f) {
  const RunConfig base = build_config(f);
  std::vector<ModelKind> kinds;
  if (f.model.empty()) {
    kinds.push_back(base.model.kind);
  } else {
    for (const auto& m : split(f.model, ',')) kinds.push_back(model_kind_from_string(m));
  }
  if (f.seeds == 0) throw ConfigError("--seeds must be >= 1");
  std::vector<RunConfig> runs;
  for (ModelKind kind : kinds) {
    for (std::size_t s = 0; s < f.seeds; ++s) {
      RunConfig c = base;
      c.model.kind = kind;
      c.seed = base.seed + s;
      if (f.config.empty()) {
        apply_presets(c, {f.penalty, f.epochs});
      } else {
        if (f.penalty) c.train.penalty_weight = *f.penalty;
        if (f.epochs) c.train.epochs = *f.epochs;
      }
      runs.push_back(c);
    }
  }
  const bool single = runs.size() == 1;
  const fs::path root = f.out.empty() ? lab_home() / "runs" : fs::path(f.out);
  std::vector<fs::path> dirs;
  for (auto& c : runs) {
    if (single) {
      if (c.name.empty() || !f.name.empty()) c.name = f.name.empty() ? default_name(c) : f.name;
      dirs.push_back(f.out.empty() ? root / c.name : root);
    } else {
      const std::string group = f.name.empty() ? "batch" : f.name;
      c.name = default_name(c);
      dirs.push_back((f.out.empty() ? root / group : root) / c.name);
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t k = next++;
      if (k >= runs.size()) return;
      try {
        const std::size_t every = std::max<std::size_t>(1, runs[k].train.epochs / 10);
        auto on_epoch = [&](const EpochLog& e) {
          if (f.quiet || (e.epoch + 1) % every != 0) return;
          std::ostringstream msg;
          msg << runs[k].name << " epoch " << e.epoch + 1 << " loss " << e.train_loss;
          if (e.val_mse) msg << " val " << *e.val_mse;
          log_line(msg.str());
        };
        const RunResult r = run_train(runs[k], dirs[k], on_epoch);
        std::ostringstream msg;
        msg << dirs[k].string() << ": params " << r.parameter_count;
        for (Role role : kScoredRoles) {
          if (r.metrics.overall[role]) msg << ' ' << to_string(role) << ' ' << *r.metrics.overall[role];
        }
        std::lock_guard<std::mutex> lock(g_log_mutex);
        std::cout << msg.str() << std::endl;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = runs.size();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(f.jobs, runs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  if (!single) {
    const auto rows = compare_runs(dirs);
    const fs::path group = dirs.front().parent_path();
    write_text(group / "comparison.md", comparison_markdown(rows));
    write_text(group / "summary.csv", comparison_csv(rows));
    std::cout << comparison_markdown(rows);
  }
  return 0;
}

int cmd_generate(const std::string& name, const TrainFlags& f, std::size_t points, const std::string& out) {
  RunConfig c = build_config(f);
  c.data.source = name;
  if (!is_generated_source(name)) throw ConfigError("unknown benchmark '" + name + "'");
  if (points) {
    c.data.benchmark.points = points;
    c.data.periodic.length = points;
  }
  const SignalDataset data = load_data(c.data, c.seed);
  fs::path values = out.empty() ? lab_home() / "data" / (data.name + ".csv") : fs::path(out);
  if (values.has_parent_path()) fs::create_directories(values.parent_path());
  save_dataset(data, values, roles_path_for(values));
  std::cout << values.string() << " (" << data.points() << " rows, " << data.features() << " features)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural representations for time series: train, evaluate and compare coordinate networks"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train one or more runs");
  add_common(train, train_flags);
  train->add_option("--model", train_flags.model, "nert, siren or ffn (comma-separated for several)");
  train->add_option("--penalty-lambda", train_flags.penalty, "weight of the scale derivative penalty");
  train->add_option("--omega0", train_flags.omega0, "SIREN first-layer frequency");
  train->add_option("--seeds", train_flags.seeds, "number of consecutive seeds starting at --seed");
  train->add_option("--jobs", train_flags.jobs, "parallel runs")->check(CLI::PositiveNumber);
  train->add_flag("--raw-units", train_flags.raw_units, "report MSE in raw target units");

  TrainFlags gen_flags;
  std::string gen_name;
  std::size_t gen_points = 0;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset as values and roles CSV");
  generate->add_option("benchmark", gen_name, "sine50, oscillator-damped, oscillator-undamped, helmholtz2d, "
                                              "coupled-spring, lorenz or periodic")
      ->required();
  generate->add_option("--task", gen_flags.task, "oscillator task: interp, extrap or mixed");
  generate->add_option("--seed", gen_flags.seed, "data seed");
  generate->add_option("--points", gen_points, "sample count (grid side for helmholtz2d)");
  generate->add_option("--blocks", gen_flags.blocks, "block protocol for 'periodic'")->check(CLI::Range(1, 3));
  generate->add_option("--block-length", gen_flags.block_length, "points per block for 'periodic'");
  generate->add_option("--drop-ratio", gen_flags.drop_ratio, "random masking for 'periodic'");
  generate->add_option("--out", gen_flags.out, "values CSV path");

  std::string eval_dir, eval_traces;
  bool eval_raw = false;
  auto* evaluate = app.add_subcommand("evaluate", "score a trained run again");
  evaluate->add_option("run", eval_dir, "run directory")->required();
  evaluate->add_flag("--raw-units", eval_raw, "report MSE in raw target units");
  evaluate->add_option("--traces", eval_traces, "also export traces to this directory");

  std::string pred_dir, pred_at, pred_file, pred_out;
  bool pred_raw = false;
  auto* predict = app.add_subcommand("predict", "predict at new coordinates");
  predict->add_option("run", pred_dir, "run directory")->required();
  predict->add_option("--at", pred_at, "coordinates: rows separated by ';', values by ','");
  predict->add_option("--coords", pred_file, "CSV of coordinates with a header row");
  predict->add_option("--out", pred_out, "output CSV (stdout if absent)");
  predict->add_flag("--raw-units", pred_raw, "undo target normalization");

  TrainFlags meta_flags;
  std::size_t meta_samples = 8;
  std::string meta_target;
  std::optional<std::size_t> meta_latent, meta_steps;
  std::optional<double> meta_inner_lr;
  auto* meta = app.add_subcommand("meta-train", "meta-learn shared weights and latent modulation maps");
  add_common(meta, meta_flags);
  meta->add_option("--model", meta_flags.model, "nert, siren or ffn");
  meta->add_option("--samples", meta_samples, "training samples")->check(CLI::Range(2, 100000));
  meta->add_option("--target", meta_target, "modulated layers: scale, scale-and-period or hidden");
  meta->add_option("--latent-dim", meta_latent, "latent size");
  meta->add_option("--inner-steps", meta_steps, "inner-loop steps");
  meta->add_option("--inner-lr", meta_inner_lr, "inner-loop learning rate");

  std::string adapt_dir;
  std::size_t adapt_unseen = 2;
  std::optional<std::size_t> adapt_steps;
  auto* adapt_cmd = app.add_subcommand("adapt", "fit latents of unseen samples and score them");
  adapt_cmd->add_option("run", adapt_dir, "meta-training run directory")->required();
  adapt_cmd->add_option("--unseen", adapt_unseen, "unseen samples following the training ones");
  adapt_cmd->add_option("--steps", adapt_steps, "inner-loop steps");

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  bool compare_csv = false;
  auto* compare = app.add_subcommand("compare", "side-by-side mean and std table of runs");
  compare->add_option("runs", compare_dirs, "run directories")->required();
  compare->add_flag("--csv", compare_csv, "CSV instead of markdown");
  compare->add_option("--out", compare_out, "output file (stdout if absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*generate) return cmd_generate(gen_name, gen_flags, gen_points, gen_flags.out);
    if (*evaluate) {
      EvalOptions options = read_manifest(eval_dir).eval;
      if (eval_raw) options.raw_units = true;
      const EvalResult r = evaluate_run(eval_dir, options);
      if (!eval_traces.empty()) {
        const RunConfig c = read_manifest(eval_dir);
        const SignalDataset data = load_data(c.data, c.seed);
        const auto model = load_checkpoint(read_json(fs::path(eval_dir) / "checkpoint.json"));
        export_traces(*model, data, eval_traces, {{"config_hash", run_config_hash(c)}, {"seed", c.seed}}, options);
      }
      const RunConfig c = read_manifest(eval_dir);
      std::cout << r.to_json(load_data(c.data, c.seed).feature_names).dump(2) << '\n';
      return 0;
    }
    if (*predict) {
      if (pred_at.empty() == pred_file.empty()) throw ConfigError("give exactly one of --at and --coords");
      Tensor coords;
      if (!pred_at.empty()) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& row : split(pred_at, ';')) rows.push_back(split(row, ','));
        coords = parse_rows(rows);
      } else {
        coords = read_coordinate_file(pred_file);
      }
      const std::string csv = predict_run(pred_dir, coords, pred_raw).to_csv();
      if (pred_out.empty()) {
        std::cout << csv;
      } else {
        write_text(pred_out, csv);
      }
      return 0;
    }
    if (*meta) {
      if (meta_flags.data.empty()) meta_flags.data = "periodic";
      RunConfig c = build_config(meta_flags);
      if (!meta_flags.model.empty()) c.model.kind = model_kind_from_string(meta_flags.model);
      if (meta_flags.epochs) c.modulation.epochs = *meta_flags.epochs;
      if (!meta_target.empty()) c.modulation.target = modulation_target_from_string(meta_target);
      if (meta_latent) c.modulation.latent_dim = *meta_latent;
      if (meta_steps) c.modulation.inner_steps = *meta_steps;
      if (meta_inner_lr) c.modulation.inner_lr = *meta_inner_lr;
      if (!meta_flags.name.empty()) c.name = meta_flags.name;
      if (c.name.empty()) c.name = "meta-" + std::string(to_string(c.model.kind)) + "-s" + std::to_string(c.seed);
      const fs::path dir = meta_flags.out.empty() ? lab_home() / "runs" / c.name : fs::path(meta_flags.out);
      const std::size_t every = std::max<std::size_t>(1, c.modulation.epochs / 10);
      const auto r = run_meta_train(c, meta_samples, dir, [&](std::size_t e, double pre, double post) {
        if (!meta_flags.quiet && (e + 1) % every == 0) {
          log_line("epoch " + std::to_string(e + 1) + " pre " + format_number(pre) + " post " + format_number(post));
        }
      });
      std::cout << dir.string() << ": post-adaptation mse " << r.report.post_loss.back() << '\n';
      return 0;
    }
    if (*adapt_cmd) {
      std::cout << run_adapt(adapt_dir, adapt_unseen, adapt_steps).to_json().dump(2) << '\n';
      return 0;
    }
    if (*compare) {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      const auto rows = compare_runs(dirs);
      const std::string text = compare_csv ? comparison_csv(rows) : comparison_markdown(rows);
      if (compare_out.empty()) {
        std::cout << text;
      } else {
        write_text(compare_out, text);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
