"""Python bindings for the ccb probing and circuit-breaker library."""

import json

from . import _core
from ._core import (
    Breaker,
    CorruptionError,
    DegenerateInputError,
    Error,
    FormatError,
    IoError,
    TraceHeader,
    TraceSet,
    ValidationError,
    auroc,
    balance_classes,
    best_f1_threshold,
    bootstrap_ci,
    dissonance_delta,
    paired_bootstrap_pvalue,
    read_trace,
    semantic_confidence,
    stratified_split,
    write_trace,
)

__all__ = [
    "Breaker", "CorruptionError", "DegenerateInputError", "Error", "FormatError", "IoError", "TraceHeader",
    "TraceSet", "ValidationError", "analytic_layer_auroc", "auroc", "balance_classes", "best_f1_threshold",
    "bootstrap_ci", "cli", "dissonance_delta", "emergence_csv", "evaluate", "generate", "paired_bootstrap_pvalue",
    "read_trace", "run_sweep", "semantic_confidence", "stratified_split", "write_trace",
]


def generate(spec=None):
    """Synthetic trace from a SynthSpec dict; missing keys take their defaults."""
    return _core.generate(json.dumps(spec or {}))


def analytic_layer_auroc(spec, layer):
    return _core.analytic_layer_auroc(json.dumps(spec or {}), layer)


def run_sweep(train, folds=5, seed=42, lambda_=1.0):
    return json.loads(_core.run_sweep(train, folds, seed, lambda_))


def emergence_csv(sweep):
    return _core.emergence_csv(json.dumps(sweep))


def load_breaker(path):
    with open(path, encoding="utf-8") as f:
        return Breaker.from_json(f.read())


def evaluate(breaker, event):
    """Verdict record (dict) for one monitor event (dict)."""
    return json.loads(breaker.evaluate(json.dumps(event)))


def cli(*args, stdin=""):
    """Run a ccb subcommand in-process; returns (exit_code, stdout, stderr)."""
    return _core.cli([str(a) for a in args], stdin)
