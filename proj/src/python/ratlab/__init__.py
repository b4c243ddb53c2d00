"""Semi-supervised regularization with adversarial transformations.

Thin wrapper over the C++ core. Arrays are float64 numpy arrays with one
sample per row.
"""

from ratlab._ratlab import (
    Classifier,
    ConfigError,
    LinearSoftmax,
    Mlp,
    NumericError,
    ShapeError,
    Transform,
    compose,
    evaluate,
    gcn,
    lds_t,
    load_tensors,
    make_moons,
    normalized_config,
    rampup_value,
    random_params,
    sample_arcs,
    save_tensors,
    tadv_params,
    vadv_perturbation,
    zca_apply,
    zca_fit,
)
from ratlab._ratlab import run_experiment as _run_experiment


def run_experiment(config, *, path=False, out=None, threads=0, force=False):
    """Run every seed of a config given as text (or a file path with path=True)."""
    return _run_experiment(config, path, None if out is None else str(out), threads, force)


__all__ = [
    "Classifier",
    "ConfigError",
    "LinearSoftmax",
    "Mlp",
    "NumericError",
    "ShapeError",
    "Transform",
    "compose",
    "evaluate",
    "gcn",
    "lds_t",
    "load_tensors",
    "make_moons",
    "normalized_config",
    "rampup_value",
    "random_params",
    "run_experiment",
    "sample_arcs",
    "save_tensors",
    "tadv_params",
    "vadv_perturbation",
    "zca_apply",
    "zca_fit",
]
