# SPDX-License-Identifier: Apache-2.0
"""Python interface to the nert core: datasets, training runs, evaluation and modulation."""

import json as _json

from . import _nert
from ._nert import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    IndexError,
    IoError,
    NertError,
    NumericError,
    OrderError,
    ParseError,
    benchmark_names,
    make_benchmark,
    minmax_scale,
    onehot,
    sine_target,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DegenerateInputError",
    "DimensionError",
    "IndexError",
    "IoError",
    "NertError",
    "NumericError",
    "OrderError",
    "ParseError",
    "adapt",
    "apply_presets",
    "benchmark_names",
    "compare",
    "default_config",
    "evaluate",
    "load_data",
    "make_benchmark",
    "meta_train",
    "minmax_scale",
    "onehot",
    "predict",
    "sine_target",
    "train",
]


def default_config():
    """Run configuration with every default filled in, as a dict."""
    return _json.loads(_nert.default_config())


def apply_presets(config, penalty_weight=None, epochs=None):
    return _json.loads(_nert.apply_presets(_json.dumps(config), penalty_weight, epochs))


def load_data(config):
    """Masked dataset described by config["data"], as a dict of flat lists."""
    return _nert.load_data(_json.dumps(config))


def train(config, run_dir):
    """Trains one run into run_dir and returns its report."""
    return _json.loads(_nert.train(_json.dumps(config), str(run_dir)))


def evaluate(run_dir, raw_units=False):
    return _json.loads(_nert.evaluate(str(run_dir), raw_units))


def predict(run_dir, coords, raw_units=False):
    """Predictions at raw coordinates (a list of rows)."""
    return _nert.predict(str(run_dir), [list(map(float, row)) for row in coords], raw_units)


def compare(run_dirs):
    """Markdown comparison table over run directories."""
    return _nert.compare([str(d) for d in run_dirs])


def meta_train(config, samples, run_dir):
    return _json.loads(_nert.meta_train(_json.dumps(config), samples, str(run_dir)))


def adapt(run_dir, unseen=2, steps=None):
    return _json.loads(_nert.adapt(str(run_dir), unseen, steps))
