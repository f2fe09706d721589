"""Porous medium flow experiments on model manifolds."""

import json as _json

from . import _pmelab
from ._pmelab import (
    ConfigError,
    DomainError,
    DomainTooSmall,
    MassMismatch,
    NewtonFailure,
    __version__,
    barenblatt,
    conservation_suite,
    evolve_near_dirac,
    exact_ot,
    experiment_names,
    frak_c_m,
    ollivier,
    stability_factor,
    w2_radial_quantile,
)


def default_config(experiment):
    return _json.loads(_pmelab.default_config(experiment))


def check_config(experiment, toml=""):
    """Parse TOML text over the defaults; raises ConfigError."""
    return _json.loads(_pmelab.check_config(experiment, toml))


def run_experiment(experiment, toml="", out=None):
    """Returns (report dict, all verdicts passed). Writes the output files when `out` is given."""
    text, ok = _pmelab.run_experiment(experiment, toml, None if out is None else str(out))
    return _json.loads(text), ok
