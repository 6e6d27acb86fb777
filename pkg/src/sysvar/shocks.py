"""Correlated heavy-tailed operating-cash-flow scenarios.

Each scenario is drawn from a Gaussian copula with equicorrelation rho across
all banks and mapped through the Lomax (Pareto type II) inverse CDF, with a
shared shape ``nu`` and one scale per group.  The Lomax support is [0, inf),
so every cash flow profile stays in the nonnegative orthant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtr

from .network import Grouping
from .util import ValidationError, as_array

# Philox counter stride per scenario; one scenario consumes d+1 normals,
# far below 2^64 counter steps.
_SCENARIO_STRIDE = 1 << 64


@dataclass(frozen=True)
class ShockParams:
    """Lomax marginals (shape nu, per-group scales) under an equicorrelated copula."""

    nu: float
    beta_by_group: np.ndarray
    rho: float
    n: int
    seed: int

    def validate(self) -> None:
        if not self.nu > 1:
            raise ValidationError("nu must exceed 1 (finite mean)")
        beta = np.asarray(self.beta_by_group, dtype=float)
        if beta.ndim != 1 or np.any(beta <= 0):
            raise ValidationError("beta_by_group must be a vector of positive scales")
        if not 0 <= self.rho < 1:
            raise ValidationError("rho must lie in [0, 1)")
        if self.n < 1:
            raise ValidationError("sample count must be positive")


@dataclass(frozen=True)
class ScenarioSet:
    """N x d matrix of nonnegative cash-flow scenarios; row n is scenario n."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def validate(self) -> None:
        v = as_array(self.values, "scenario values")
        if v.ndim != 2:
            raise ValidationError("scenario values must be an N x d matrix")
        if np.any(v < 0):
            raise ValidationError("scenario values must be nonnegative")

    def head(self, n: int) -> "ScenarioSet":
        """First n scenarios (prefix of the same stream)."""
        if n > self.n:
            raise ValidationError("cannot take more scenarios than available")
        return ScenarioSet(values=self.values[:n])


def lomax_ppf(u: np.ndarray, nu: float, beta: np.ndarray | float) -> np.ndarray:
    """Inverse CDF x = beta * ((1-u)^(-1/nu) - 1)."""
    return beta * (np.power(1.0 - u, -1.0 / nu) - 1.0)


def lomax_cdf(x: np.ndarray, nu: float, beta: np.ndarray | float) -> np.ndarray:
    """CDF 1 - (beta / (beta + x))^nu on x >= 0."""
    return 1.0 - np.power(beta / (beta + x), nu)


def lomax_mean(nu: float, beta: float) -> float:
    """beta / (nu - 1), finite for nu > 1."""
    return beta / (nu - 1.0)


def _scenario_normals(seed: int, index: int, count: int) -> np.ndarray:
    """Counter-based substream: scenario `index` owns its own Philox block,
    so scenario n is reproducible independent of the total sample count."""
    gen = Generator(Philox(key=seed, counter=index * _SCENARIO_STRIDE))
    return gen.standard_normal(count)

def sample_shocks(params: ShockParams, grouping: Grouping) -> ScenarioSet:
    """Draw N correlated Lomax scenarios for the banks of `grouping`.

    The latent Gaussian vector uses the one-factor representation
    z_i = sqrt(rho) * common + sqrt(1-rho) * own_i, which realizes an exact
    equicorrelation matrix.  z is pushed through the normal CDF and then the
    group's Lomax inverse CDF.
    """
    params.validate()
    grouping.validate()
    beta = np.asarray(params.beta_by_group, dtype=float)
    if beta.size != grouping.g:
        raise ValidationError("beta_by_group length must equal the group count")

    assignment = np.asarray(grouping.assignment, dtype=int)
    d = assignment.size
    beta_bank = beta[assignment]
    sq_common = np.sqrt(params.rho)
    sq_own = np.sqrt(1.0 - params.rho)

    values = np.empty((params.n, d))
    for n in range(params.n):
        normals = _scenario_normals(params.seed, n, d + 1)
        z = sq_common * normals[0] + sq_own * normals[1:]
        # 1 - Phi(z) computed as Phi(-z) for tail accuracy
        tail = ndtr(-z)
        values[n] = beta_bank * (np.power(tail, -1.0 / params.nu) - 1.0)

    out = ScenarioSet(values=values)
    out.validate()
    return out
