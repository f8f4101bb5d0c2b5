// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/dataset.hpp"
#include "nert/timeseries.hpp"

namespace nert {

struct OscillatorParams {
  double mass = 1.0;
  double damping = 0.0;
  double omega = 50.0;
  double amplitude = 10.0;
  double phase = 0.0;
};

struct HelmholtzParams {
  double a1 = 1.0;
  double a2 = 4.0;
  double k = 1.0;
};

struct CoupledSpringParams {
  double m1 = 1.0, m2 = 1.0;
  double k1 = 10.0, k2 = 15.0, k3 = 10.0;
  double c1 = 0.5, c2 = 0.5;
  double x1 = 1.0, x2 = -1.0;
  double v1 = 0.0, v2 = 0.0;
};

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  std::optional<std::array<double, 3>> h0;  // sampled from U([-20,20]^2 x [0,50]) when absent
  double dt = 0.01;
  double t_end = 5.0;
  double t_split = 4.0;  // train on [0, t_split], test on (t_split, t_end]
};

double sine_target(double x);
double oscillator(double t, const OscillatorParams& p);
double helmholtz_solution(double x, double y, const HelmholtzParams& p);
/// Source term q(x, y) of the Helmholtz problem solved by helmholtz_solution.
double helmholtz_source(double x, double y, const HelmholtzParams& p);

using State = std::vector<double>;
using Derivative = std::function<State(const State&)>;

/// Classical RK4 for an autonomous system. Returns steps + 1 states.
std::vector<State> rk4_trajectory(const Derivative& f, const State& h0, double dt, std::size_t steps);

/// State layout (x1, x2, v1, v2).
Derivative coupled_spring_derivative(const CoupledSpringParams& p);
double coupled_spring_energy(const State& s, const CoupledSpringParams& p);
Derivative lorenz_derivative(const LorenzParams& p);

/// Trajectory resampled onto a uniform `t_grid` (integrated with `substeps`
/// RK4 steps per grid interval). Features x1, x2; train t <= t_train.
SignalDataset coupled_spring_dataset(const CoupledSpringParams& p, const std::vector<double>& t_grid,
                                     double t_train = 3.0, std::size_t substeps = 10,
                                     const CoordinateConfig& coords = {});

SignalDataset lorenz_dataset(const LorenzParams& p, std::uint64_t seed, const CoordinateConfig& coords = {});

enum class OscillatorTask { interp, extrap, mixed };
std::string_view to_string(OscillatorTask task);
OscillatorTask oscillator_task_from_string(std::string_view name);

struct BenchmarkConfig {
  std::size_t points = 0;  // 0 selects the benchmark default
  std::uint64_t seed = 0;
  OscillatorTask task = OscillatorTask::extrap;
  OscillatorParams oscillator;  // damping is set by the benchmark name
  HelmholtzParams helmholtz;
  CoupledSpringParams spring;
  LorenzParams lorenz;
  CoordinateConfig coords;
};

void to_json(nlohmann::json& j, const BenchmarkConfig& c);
void from_json(const nlohmann::json& j, BenchmarkConfig& c);

const std::vector<std::string>& benchmark_names();
/// Throws ConfigError on unknown names.
SignalDataset make_benchmark(std::string_view name, const BenchmarkConfig& config = {});

std::vector<double> linspace(double lo, double hi, std::size_t n);

/// Sum of sinusoids plus a linear trend, sampled at steps t = 0..length-1.
struct PeriodicSeriesParams {
  std::size_t length = 6000;
  std::size_t features = 2;
  std::vector<double> periods = {50.0, 200.0};  // in steps
  double amplitude = 1.0;                       // multiplies every sinusoid
  double trend = 1.0;                           // bound of the per-feature drift over the whole series
  double noise = 0.0;                           // Gaussian noise std
  double step_seconds = 0.0;                    // > 0 emits timestamps start_epoch + t * step_seconds
  double start_epoch = 1609459200.0;            // 2021-01-01T00:00:00Z
};

void to_json(nlohmann::json& j, const PeriodicSeriesParams& p);
void from_json(const nlohmann::json& j, PeriodicSeriesParams& p);

/// Phases, per-component weights and drifts come from `seed`; noise uses a separate stream.
RawSeries periodic_series(const PeriodicSeriesParams& p, std::uint64_t seed);

/// `count` series sharing one shape (seed) with amplitudes drawn from U[amp_lo, amp_hi].
std::vector<RawSeries> amplitude_family(const PeriodicSeriesParams& p, std::uint64_t seed, std::size_t count,
                                        double amp_lo = 0.5, double amp_hi = 2.0);

}  // namespace nert
