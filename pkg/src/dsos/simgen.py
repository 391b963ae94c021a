"""Two-component Gaussian mixture simulator with five shift families.

Baseline (no shift): both samples come from
``0.5 N(1_d, I_d) + 0.5 N(-1_d, I_d)``. Each shift family changes a single
parameter block of the test (or both) mixture and only along the first one
or two coordinates:

========== ============================================== ===================
shift      change                                         intensities
========== ============================================== ===================
label      train weight w, test weight 1 - w              w in .49, .47, .45
corrupted  train weight 1, test weight 1 - omega          omega in .01,.02,.04
mean       test mean of component 2 = [k/10, 1, ..., 1]   k in 11, 12, 14
noise      test cov of component 1, entry (1,1) = t/10    t in 11, 12, 14
dependency test cov of component 2, entries (1,2),(2,1)=g g in .1, .2, .4
========== ============================================== ===================

The mean-shift family fills the untouched coordinates with ``+1`` by
default; ``mean_shift_sign=-1`` fills them with ``-1`` (the baseline value
of component 2) instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from .errors import ConfigError

SHIFTS = ("none", "label", "corrupted", "mean", "noise", "dependency")
INTENSITIES = {
    "none": (0.0, 0.0, 0.0),
    "label": (0.49, 0.47, 0.45),
    "corrupted": (0.01, 0.02, 0.04),
    "mean": (11.0, 12.0, 14.0),
    "noise": (11.0, 12.0, 14.0),
    "dependency": (0.1, 0.2, 0.4),
}
SAMPLE_SIZES = (400, 800, 1600)
DIMENSIONS = (4, 8, 16)


@dataclass(frozen=True)
class GmmShiftSpec:
    n_per_side: int = 400
    d: int = 4
    shift: str = "none"
    intensity_index: int = 0
    seed: int = 0
    mean_shift_sign: int = 1
    unsafe: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.shift not in SHIFTS:
            raise ConfigError(f"unknown shift {self.shift!r}; choose from {SHIFTS}")
        if self.intensity_index not in (0, 1, 2):
            raise ConfigError("intensity_index must be 0, 1 or 2")
        if self.mean_shift_sign not in (1, -1):
            raise ConfigError("mean_shift_sign must be +1 or -1")
        if not self.unsafe:
            if self.n_per_side not in SAMPLE_SIZES:
                raise ConfigError(f"n_per_side must be one of {SAMPLE_SIZES} (or pass unsafe=True)")
            if self.d not in DIMENSIONS:
                raise ConfigError(f"d must be one of {DIMENSIONS} (or pass unsafe=True)")
        if self.n_per_side < 1 or self.d < 1:
            raise ConfigError("n_per_side and d must be positive")
        if self.shift == "dependency" and self.d < 2:
            raise ConfigError("dependency shift needs d >= 2")

    @property
    def intensity(self) -> float:
        return INTENSITIES[self.shift][self.intensity_index]

    def with_seed(self, seed: int) -> "GmmShiftSpec":
        return replace(self, seed=seed)


@dataclass
class MixtureParams:
    weight: float  # probability of component 1
    mu1: np.ndarray
    mu2: np.ndarray
    cov1: np.ndarray
    cov2: np.ndarray

    def as_tuple(self):
        return (self.weight, self.mu1, self.mu2, self.cov1, self.cov2)


def _baseline(d: int) -> MixtureParams:
    return MixtureParams(0.5, np.ones(d), -np.ones(d), np.eye(d), np.eye(d))


def mixture_params(spec: GmmShiftSpec) -> Tuple[MixtureParams, MixtureParams]:
    """Train and test mixture parameters for ``spec``."""
    d = spec.d
    tr, te = _baseline(d), _baseline(d)
    v = spec.intensity
    if spec.shift == "label":
        tr.weight, te.weight = v, 1.0 - v
    elif spec.shift == "corrupted":
        tr.weight, te.weight = 1.0, 1.0 - v
    elif spec.shift == "mean":
        te.mu2 = np.full(d, float(spec.mean_shift_sign))
        te.mu2[0] = v / 10.0
    elif spec.shift == "noise":
        te.cov1[0, 0] = v / 10.0
    elif spec.shift == "dependency":
        te.cov2[0, 1] = te.cov2[1, 0] = v
    return tr, te


def _sample(params: MixtureParams, n: int, rng: np.random.Generator):
    first = rng.random(n) < params.weight
    z = rng.standard_normal((n, params.mu1.size))
    L1 = np.linalg.cholesky(params.cov1)
    L2 = np.linalg.cholesky(params.cov2)
    return np.where(first[:, None], params.mu1 + z @ L1.T, params.mu2 + z @ L2.T), ~first


def generate(spec: GmmShiftSpec, return_components: bool = False):
    """Draw ``(train, test)``, each ``n_per_side x d``, deterministically from ``spec.seed``.

    Component membership is drawn per row (Bernoulli with the mixture
    weight), then the row is drawn from that component's Gaussian. With
    ``return_components`` the boolean "drawn from component 2" vectors of
    both sides are appended.
    """
    tr, te = mixture_params(spec)
    rng = np.random.default_rng(spec.seed)
    train, comp_tr = _sample(tr, spec.n_per_side, rng)
    test, comp_te = _sample(te, spec.n_per_side, rng)
    if return_components:
        return train, test, comp_tr, comp_te
    return train, test
