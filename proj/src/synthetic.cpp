// SPDX-License-Identifier: Apache-2.0
#include "nert/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "nert/error.hpp"
#include "nert/rng.hpp"

namespace nert {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEdge = 1e-12;

SignalDataset univariate(std::string name, std::string coord, const std::vector<double>& xs,
                         const std::vector<double>& ys, const std::vector<Role>& roles) {
  SignalDataset d;
  d.name = std::move(name);
  d.coord_names = {std::move(coord)};
  d.feature_names = {"y"};
  d.raw_coords = Tensor::column(xs);
  d.targets = Tensor::column(ys);
  d.roles = roles;
  d.observed.assign(xs.size(), 1);
  return d;
}

}  // namespace

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> out(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

double sine_target(double x) { return std::sin(50.0 * x); }

double oscillator(double t, const OscillatorParams& p) {
  return p.amplitude * std::exp(-p.damping / (2.0 * p.mass) * t) * std::cos(p.omega * t + p.phase);
}

double helmholtz_solution(double x, double y, const HelmholtzParams& p) {
  return std::sin(p.a1 * kPi * x) * std::sin(p.a2 * kPi * y);
}

double helmholtz_source(double x, double y, const HelmholtzParams& p) {
  const double a = p.a1 * kPi;
  const double b = p.a2 * kPi;
  return (-a * a - b * b + p.k * p.k) * std::sin(a * x) * std::sin(b * y);
}

std::vector<State> rk4_trajectory(const Derivative& f, const State& h0, double dt, std::size_t steps) {
  if (!(dt > 0.0)) throw ConfigError("rk4 step must be positive");
  if (steps == 0) throw ConfigError("rk4 needs at least one step");
  const std::size_t n = h0.size();
  auto checked = [&](const State& s) {
    State d = f(s);
    if (d.size() != n) throw DimensionError("derivative has the wrong dimension");
    for (double v : d) {
      if (!std::isfinite(v)) throw NumericError("non-finite derivative during integration");
    }
    return d;
  };
  auto axpy = [n](const State& x, double a, const State& y) {
    State out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + a * y[i];
    return out;
  };
  std::vector<State> traj;
  traj.reserve(steps + 1);
  traj.push_back(h0);
  for (std::size_t s = 0; s < steps; ++s) {
    const State& h = traj.back();
    const State k1 = checked(h);
    const State k2 = checked(axpy(h, dt / 2.0, k1));
    const State k3 = checked(axpy(h, dt / 2.0, k2));
    const State k4 = checked(axpy(h, dt, k3));
    State next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = h[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    traj.push_back(std::move(next));
  }
  return traj;
}

Derivative coupled_spring_derivative(const CoupledSpringParams& p) {
  if (!(p.m1 > 0.0 && p.m2 > 0.0)) throw ConfigError("masses must be positive");
  if (!(p.k1 > 0.0 && p.k3 > 0.0 && p.k2 >= 0.0)) throw ConfigError("spring constants must be positive");
  if (p.c1 < 0.0 || p.c2 < 0.0) throw ConfigError("damping must be non-negative");
  return [p](const State& s) {
    const double x1 = s[0], x2 = s[1], v1 = s[2], v2 = s[3];
    const double a1 = (-p.k1 * x1 - p.k2 * (x1 - x2) - p.c1 * v1) / p.m1;
    const double a2 = (-p.k2 * (x2 - x1) - p.k3 * x2 - p.c2 * v2) / p.m2;
    return State{v1, v2, a1, a2};
  };
}

double coupled_spring_energy(const State& s, const CoupledSpringParams& p) {
  const double x1 = s[0], x2 = s[1], v1 = s[2], v2 = s[3];
  return 0.5 * (p.m1 * v1 * v1 + p.m2 * v2 * v2 + p.k1 * x1 * x1 + p.k2 * (x1 - x2) * (x1 - x2) + p.k3 * x2 * x2);
}

Derivative lorenz_derivative(const LorenzParams& p) {
  return [p](const State& h) {
    return State{p.sigma * (h[1] - h[0]), h[0] * (p.rho - h[2]) - h[1], h[0] * h[1] - p.beta * h[2]};
  };
}

SignalDataset coupled_spring_dataset(const CoupledSpringParams& p, const std::vector<double>& t_grid, double t_train,
                                     std::size_t substeps, const CoordinateConfig& coords) {
  if (t_grid.size() < 2) throw ConfigError("time grid needs at least two points");
  if (substeps == 0) throw ConfigError("substeps must be >= 1");
  const double step = t_grid[1] - t_grid[0];
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (std::abs((t_grid[i] - t_grid[i - 1]) - step) > 1e-9 * std::max(1.0, std::abs(step))) {
      throw ConfigError("time grid must be uniform");
    }
  }
  const auto traj = rk4_trajectory(coupled_spring_derivative(p), {p.x1, p.x2, p.v1, p.v2},
                                   step / static_cast<double>(substeps), (t_grid.size() - 1) * substeps);
  const std::size_t n = t_grid.size();
  SignalDataset d;
  d.name = "coupled-spring";
  d.coord_names = {"t"};
  d.feature_names = {"x1", "x2"};
  d.raw_coords = Tensor::column(t_grid);
  d.targets = Tensor({n, 2});
  d.roles.resize(2 * n);
  d.observed.assign(2 * n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const State& s = traj[i * substeps];
    d.targets.at(i, 0) = s[0];
    d.targets.at(i, 1) = s[1];
    const Role r = t_grid[i] <= t_train + kEdge ? Role::train : Role::extrap_test;
    d.roles[2 * i] = r;
    d.roles[2 * i + 1] = r;
  }
  finalize_dataset(d, coords);
  return d;
}

SignalDataset lorenz_dataset(const LorenzParams& p, std::uint64_t seed, const CoordinateConfig& coords) {
  if (!(p.dt > 0.0)) throw ConfigError("lorenz dt must be positive");
  if (!(p.t_end > p.t_split && p.t_split > 0.0)) throw ConfigError("lorenz needs 0 < t_split < t_end");
  std::array<double, 3> h0;
  if (p.h0) {
    h0 = *p.h0;
  } else {
    Rng rng = Rng(seed).split("lorenz-h0");
    h0 = {rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0), rng.uniform(0.0, 50.0)};
  }
  const auto steps = static_cast<std::size_t>(std::llround(p.t_end / p.dt));
  const auto traj = rk4_trajectory(lorenz_derivative(p), {h0[0], h0[1], h0[2]}, p.dt, steps);
  const std::size_t n = traj.size();
  SignalDataset d;
  d.name = "lorenz";
  d.coord_names = {"t"};
  d.feature_names = {"h1", "h2", "h3"};
  std::vector<double> ts(n);
  d.targets = Tensor({n, 3});
  d.roles.resize(3 * n);
  d.observed.assign(3 * n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = p.dt * static_cast<double>(i);
    const Role r = ts[i] <= p.t_split + kEdge ? Role::train : Role::extrap_test;
    for (std::size_t j = 0; j < 3; ++j) {
      d.targets.at(i, j) = traj[i][j];
      d.roles[3 * i + j] = r;
    }
  }
  d.raw_coords = Tensor::column(ts);
  finalize_dataset(d, coords);
  return d;
}

std::string_view to_string(OscillatorTask task) {
  switch (task) {
    case OscillatorTask::interp:
      return "interp";
    case OscillatorTask::extrap:
      return "extrap";
    case OscillatorTask::mixed:
      return "mixed";
  }
  return "unknown";
}

OscillatorTask oscillator_task_from_string(std::string_view name) {
  if (name == "interp") return OscillatorTask::interp;
  if (name == "extrap") return OscillatorTask::extrap;
  if (name == "mixed") return OscillatorTask::mixed;
  throw ConfigError("unknown oscillator task '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const BenchmarkConfig& c) {
  j = nlohmann::json{
      {"points", c.points},
      {"seed", c.seed},
      {"task", std::string(to_string(c.task))},
      {"oscillator",
       {{"mass", c.oscillator.mass}, {"omega", c.oscillator.omega}, {"amplitude", c.oscillator.amplitude},
        {"phase", c.oscillator.phase}}},
      {"helmholtz", {{"a1", c.helmholtz.a1}, {"a2", c.helmholtz.a2}, {"k", c.helmholtz.k}}},
      {"spring",
       {{"m1", c.spring.m1}, {"m2", c.spring.m2}, {"k1", c.spring.k1}, {"k2", c.spring.k2}, {"k3", c.spring.k3},
        {"c1", c.spring.c1}, {"c2", c.spring.c2}, {"x1", c.spring.x1}, {"x2", c.spring.x2}, {"v1", c.spring.v1},
        {"v2", c.spring.v2}}},
      {"lorenz",
       {{"sigma", c.lorenz.sigma}, {"rho", c.lorenz.rho}, {"beta", c.lorenz.beta}, {"dt", c.lorenz.dt},
        {"t_end", c.lorenz.t_end}, {"t_split", c.lorenz.t_split}}},
      {"coords", c.coords},
  };
  if (c.lorenz.h0) j["lorenz"]["h0"] = *c.lorenz.h0;
}

void from_json(const nlohmann::json& j, BenchmarkConfig& c) {
  c = BenchmarkConfig{};
  c.points = j.value("points", c.points);
  c.seed = j.value("seed", c.seed);
  if (j.contains("task")) c.task = oscillator_task_from_string(j.at("task").get<std::string>());
  if (auto it = j.find("oscillator"); it != j.end()) {
    auto& o = c.oscillator;
    o.mass = it->value("mass", o.mass);
    o.omega = it->value("omega", o.omega);
    o.amplitude = it->value("amplitude", o.amplitude);
    o.phase = it->value("phase", o.phase);
  }
  if (auto it = j.find("helmholtz"); it != j.end()) {
    auto& h = c.helmholtz;
    h.a1 = it->value("a1", h.a1);
    h.a2 = it->value("a2", h.a2);
    h.k = it->value("k", h.k);
  }
  if (auto it = j.find("spring"); it != j.end()) {
    auto& s = c.spring;
    s.m1 = it->value("m1", s.m1);
    s.m2 = it->value("m2", s.m2);
    s.k1 = it->value("k1", s.k1);
    s.k2 = it->value("k2", s.k2);
    s.k3 = it->value("k3", s.k3);
    s.c1 = it->value("c1", s.c1);
    s.c2 = it->value("c2", s.c2);
    s.x1 = it->value("x1", s.x1);
    s.x2 = it->value("x2", s.x2);
    s.v1 = it->value("v1", s.v1);
    s.v2 = it->value("v2", s.v2);
  }
  if (auto it = j.find("lorenz"); it != j.end()) {
    auto& l = c.lorenz;
    l.sigma = it->value("sigma", l.sigma);
    l.rho = it->value("rho", l.rho);
    l.beta = it->value("beta", l.beta);
    l.dt = it->value("dt", l.dt);
    l.t_end = it->value("t_end", l.t_end);
    l.t_split = it->value("t_split", l.t_split);
    if (it->contains("h0")) l.h0 = it->at("h0").get<std::array<double, 3>>();
  }
  if (j.contains("coords")) c.coords = j.at("coords").get<CoordinateConfig>();
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {"sine50",      "oscillator-damped", "oscillator-undamped",
                                                 "helmholtz2d", "coupled-spring",    "lorenz"};
  return names;
}

SignalDataset make_benchmark(std::string_view name, const BenchmarkConfig& config) {
  if (name == "sine50") {
    const auto xs = linspace(0.0, 3.0, config.points ? config.points : 400);
    std::vector<double> ys(xs.size());
    std::vector<Role> roles(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ys[i] = sine_target(xs[i]);
      roles[i] = xs[i] <= 2.2 + kEdge ? Role::train : Role::extrap_test;
    }
    SignalDataset d = univariate("sine50", "x", xs, ys, roles);
    finalize_dataset(d, config.coords);
    return d;
  }
  if (name == "oscillator-damped" || name == "oscillator-undamped") {
    OscillatorParams p = config.oscillator;
    p.damping = name == "oscillator-damped" ? 4.0 : 0.0;
    if (!(p.mass > 0.0)) throw ConfigError("oscillator mass must be positive");
    const auto ts = linspace(1.0, 2.0, config.points ? config.points : 1000);
    std::vector<double> ys(ts.size());
    std::vector<Role> roles(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double t = ts[i];
      ys[i] = oscillator(t, p);
      switch (config.task) {
        case OscillatorTask::interp:
          roles[i] = (t <= 1.2 + kEdge || t >= 1.8 - kEdge) ? Role::train : Role::interp_test;
          break;
        case OscillatorTask::extrap:
          roles[i] = t <= 1.4 + kEdge ? Role::train : Role::extrap_test;
          break;
        case OscillatorTask::mixed:
          if (t <= 1.2 + kEdge || (t >= 1.5 - kEdge && t <= 1.8 + kEdge)) {
            roles[i] = Role::train;
          } else {
            roles[i] = t < 1.5 ? Role::interp_test : Role::extrap_test;
          }
          break;
      }
    }
    SignalDataset d = univariate(std::string(name) + "-" + std::string(to_string(config.task)), "t", ts, ys, roles);
    finalize_dataset(d, config.coords);
    return d;
  }
  if (name == "helmholtz2d") {
    const HelmholtzParams& p = config.helmholtz;
    if (p.a1 == 0.0 || p.a2 == 0.0) throw ConfigError("helmholtz mode numbers must be nonzero");
    const auto axis = linspace(1.0, 2.0, config.points ? config.points : 100);
    const std::size_t g = axis.size();
    SignalDataset d;
    d.name = "helmholtz2d";
    d.coord_names = {"x", "y"};
    d.feature_names = {"u"};
    d.raw_coords = Tensor({g * g, 2});
    d.targets = Tensor({g * g, 1});
    d.roles.resize(g * g);
    d.observed.assign(g * g, 1);
    for (std::size_t a = 0; a < g; ++a) {
      for (std::size_t b = 0; b < g; ++b) {
        const std::size_t i = a * g + b;
        const double x = axis[a];
        const double y = axis[b];
        d.raw_coords.at(i, 0) = x;
        d.raw_coords.at(i, 1) = y;
        d.targets.at(i, 0) = helmholtz_solution(x, y, p);
        d.roles[i] = (x <= 1.5 + kEdge && y <= 1.5 + kEdge) ? Role::train : Role::extrap_test;
      }
    }
    finalize_dataset(d, config.coords);
    return d;
  }
  if (name == "coupled-spring") {
    return coupled_spring_dataset(config.spring, linspace(0.0, 10.0, config.points ? config.points : 1001), 3.0, 10,
                                  config.coords);
  }
  if (name == "lorenz") return lorenz_dataset(config.lorenz, config.seed, config.coords);
  throw ConfigError("unknown benchmark '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const PeriodicSeriesParams& p) {
  j = {{"length", p.length}, {"features", p.features}, {"periods", p.periods},
       {"amplitude", p.amplitude}, {"trend", p.trend}, {"noise", p.noise},
       {"step_seconds", p.step_seconds}, {"start_epoch", p.start_epoch}};
}

void from_json(const nlohmann::json& j, PeriodicSeriesParams& p) {
  const PeriodicSeriesParams d;
  p.length = j.value("length", d.length);
  p.features = j.value("features", d.features);
  p.periods = j.value("periods", d.periods);
  p.amplitude = j.value("amplitude", d.amplitude);
  p.trend = j.value("trend", d.trend);
  p.noise = j.value("noise", d.noise);
  p.step_seconds = j.value("step_seconds", d.step_seconds);
  p.start_epoch = j.value("start_epoch", d.start_epoch);
}

RawSeries periodic_series(const PeriodicSeriesParams& p, std::uint64_t seed) {
  if (p.length < 2) throw ConfigError("periodic series needs at least two steps");
  if (p.features == 0) throw ConfigError("periodic series needs at least one feature");
  if (p.periods.empty()) throw ConfigError("periodic series needs at least one period");
  for (double period : p.periods) {
    if (!(period > 0.0)) throw ConfigError("periods must be > 0");
  }
  if (p.noise < 0.0) throw ConfigError("noise must be >= 0");
  if (p.step_seconds < 0.0) throw ConfigError("step_seconds must be >= 0");
  const Rng root = Rng(seed).split("periodic-series");
  Rng noise = root.split("noise");
  RawSeries s;
  const bool timed = p.step_seconds > 0.0;
  s.coord_names = {timed ? "timestamp" : "t"};
  s.iso_timestamps = timed;
  s.coords = Tensor({p.length, 1});
  s.values = Tensor({p.length, p.features});
  for (std::size_t i = 0; i < p.length; ++i) {
    const double t = static_cast<double>(i);
    s.coords[i] = timed ? p.start_epoch + t * p.step_seconds : t;
  }
  for (std::size_t j = 0; j < p.features; ++j) {
    s.feature_names.push_back("f" + std::to_string(j));
    Rng shape = root.split(j);
    std::vector<double> weight, phase;
    for (std::size_t k = 0; k < p.periods.size(); ++k) {
      weight.push_back(shape.uniform(0.5, 1.5));
      phase.push_back(shape.uniform(0.0, 2.0 * std::numbers::pi));
    }
    const double drift = shape.uniform(-p.trend, p.trend);
    for (std::size_t i = 0; i < p.length; ++i) {
      const double t = static_cast<double>(i);
      double v = drift * t / static_cast<double>(p.length - 1);
      for (std::size_t k = 0; k < p.periods.size(); ++k) {
        v += p.amplitude * weight[k] * std::sin(2.0 * std::numbers::pi * t / p.periods[k] + phase[k]);
      }
      if (p.noise > 0.0) v += p.noise * noise.normal();
      s.values[i * p.features + j] = v;
    }
  }
  return s;
}

std::vector<RawSeries> amplitude_family(const PeriodicSeriesParams& p, std::uint64_t seed, std::size_t count,
                                        double amp_lo, double amp_hi) {
  if (amp_hi < amp_lo) throw ConfigError("amplitude range is empty");
  Rng amps = Rng(seed).split("amplitude-family");
  std::vector<RawSeries> out;
  for (std::size_t n = 0; n < count; ++n) {
    PeriodicSeriesParams q = p;
    q.amplitude = amps.uniform(amp_lo, amp_hi);
    out.push_back(periodic_series(q, seed));
  }
  return out;
}

}  // namespace nert
