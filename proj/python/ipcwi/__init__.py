"""IPCW estimators of causal effects under partial interference.

Thin wrappers over the compiled core: parameter dictionaries go in, plain
dictionaries and lists come out.
"""

import json

from . import _core
from ._core import (
    ConvergenceError,
    DomainError,
    InputError,
    ModelError,
    NumericalError,
    Study,
    log_policy_prob,
    parse_csv,
    policy_prob,
    read_csv,
)

__all__ = [
    "ConvergenceError",
    "DomainError",
    "InputError",
    "ModelError",
    "NumericalError",
    "Study",
    "compute_truth",
    "default_simulation",
    "estimate_effects",
    "estimate_mu",
    "fit",
    "log_policy_prob",
    "parse_csv",
    "policy_prob",
    "read_csv",
    "replicate",
    "run_cli",
    "simulate",
]


def _targets(targets):
    return [(float(t), None if a is None else int(a), float(alpha)) for t, a, alpha in targets]


def default_simulation():
    return json.loads(_core.default_simulation())


def simulate(**params):
    """Simulate a study; keyword arguments override the simulation defaults (m, n, seed, ...)."""
    return _core.simulate(json.dumps(params))


def fit(study, propensity_columns=("L1", "L2"), censoring_columns=("L1", "L2"), intercept=True,
        compliance=1.0, nodes=25, adaptive=False):
    """Fit both nuisance models. Returns {"propensity": ..., "censoring": ...};
    pass censoring_columns=None for data without censoring."""
    out = {
        "propensity": json.loads(_core.fit_propensity(study, list(propensity_columns), intercept, compliance,
                                                      nodes, adaptive)),
        "censoring": None,
    }
    if censoring_columns is not None:
        out["censoring"] = json.loads(_core.fit_censoring(study, list(censoring_columns)))
    return out


def _fits(fits):
    cens = fits.get("censoring")
    return json.dumps(fits["propensity"]), None if cens is None else json.dumps(cens)


def estimate_mu(study, fits, targets):
    """Point estimates of mu(t, a, alpha); a target is (t, a, alpha) with a None for the marginal risk."""
    prop, cens = _fits(fits)
    return json.loads(_core.estimate_mu(study, prop, cens, _targets(targets)))


def estimate_effects(study, fits, times=(100.0,), alphas=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
                     reference_alpha=0.5, level=0.95, t_intervals=False):
    prop, cens = _fits(fits)
    return json.loads(_core.estimate_effects(study, prop, cens, list(times), list(alphas), reference_alpha, level,
                                             t_intervals))


def compute_truth(targets, oracle_groups=1_000_000, seed=7, threads=0, **params):
    return _core.compute_truth(json.dumps(params), _targets(targets), oracle_groups, seed, threads)


def replicate(targets, reps=200, mode="fitted", truth=None, oracle_groups=1_000_000, truth_seed=7, threads=0,
              **params):
    return json.loads(_core.replicate(json.dumps(params), _targets(targets), reps, mode, truth, oracle_groups,
                                      truth_seed, threads))


def run_cli(*args):
    """Run the command-line interface in-process; returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
