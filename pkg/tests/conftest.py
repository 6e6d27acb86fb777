"""Shared instance builders and independent oracles.

The oracles here deliberately avoid the library's solution paths: the 2-bank
ring has a closed-form clearing vector, batch clearing uses a plain capped
Picard iteration, the weighted-sum oracle enumerates scenario subsets, and
distances come from dense grid scans.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

import sysvar as sv
from sysvar.optim import LinearProgram, solve_lp
from sysvar.util import max_violations, required_hits


def random_network(rng: np.random.Generator, d: int, pbar_range=(0.5, 3.0)) -> sv.FinancialNetwork:
    pi = rng.uniform(0.1, 1.0, size=(d, d))
    np.fill_diagonal(pi, 0.0)
    pi /= pi.sum(axis=1, keepdims=True)
    pbar = rng.uniform(*pbar_range, size=d)
    net = sv.FinancialNetwork(d=d, pi=pi, pbar=pbar)
    net.validate()
    return net


def two_group_split(rng: np.random.Generator, d: int) -> sv.Grouping:
    assignment = np.sort(rng.integers(0, 2, size=d))
    if assignment.min() == assignment.max():
        assignment[0] = 0
        assignment[-1] = 1
    return sv.Grouping(g=2, assignment=assignment)


def ring2(pbar) -> sv.FinancialNetwork:
    return sv.FinancialNetwork(
        d=2, pi=np.array([[0.0, 1.0], [1.0, 0.0]]), pbar=np.asarray(pbar, dtype=float)
    )


def ring2_totals(pbar: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Closed-form maximal clearing total for the 2-bank ring (batched)."""
    p1 = np.minimum(pbar[0], pbar[1] + x[..., 0])
    p2 = np.minimum(pbar[1], pbar[0] + x[..., 1])
    return p1 + p2


def picard_totals(net: sv.FinancialNetwork, xs: np.ndarray, sweeps: int = 400) -> np.ndarray:
    """Batched capped Picard iteration from the obligation vector."""
    xs = np.asarray(xs, dtype=float)
    p = np.broadcast_to(net.pbar, xs.shape).copy()
    for _ in range(sweeps):
        nxt = np.minimum(xs + p @ net.pi, net.pbar)
        if np.abs(nxt - p).max() < 1e-13:
            p = nxt
            break
        p = nxt
    return p.sum(axis=-1)


def subset_oracle_weighted(net, grouping, scenarios, spec, weights, box) -> float:
    """Exhaustive scan over scenario subsets of the required size, each an LP."""
    n, d = scenarios.values.shape
    g = grouping.g
    k = required_hits(n, spec.lam)
    if k == 0:
        return float(np.asarray(weights) @ box.lo)
    flow = np.eye(d) - net.pi.T
    assignment = np.asarray(grouping.assignment)
    best = np.inf
    for subset in itertools.combinations(range(n), k):
        ncols = g + len(subset) * d
        c = np.zeros(ncols)
        c[:g] = weights
        rows, rhs = [], []
        for slot, scen_idx in enumerate(subset):
            a = np.zeros((d, ncols))
            a[:, g + slot * d: g + (slot + 1) * d] = flow
            a[np.arange(d), assignment] = -1.0
            rows.append(a)
            rhs.append(scenarios.values[scen_idx])
            agg = np.zeros(ncols)
            agg[g + slot * d: g + (slot + 1) * d] = -1.0
            rows.append(agg[None, :])
            rhs.append(np.array([-spec.alpha]))
        res = solve_lp(LinearProgram(
            c=c,
            a_ub=np.vstack(rows),
            b_ub=np.concatenate(rhs),
            lower=np.concatenate([box.lo, np.zeros(len(subset) * d)]),
            upper=np.concatenate([box.hi, np.tile(net.pbar, len(subset))]),
        ))
        if res.status == "optimal":
            best = min(best, res.objective)
    return best


def ring_membership_mask(net, grouping, scenarios, spec, z_points: np.ndarray) -> np.ndarray:
    """Vectorized membership over many capital vectors, 2-ring networks only."""
    assignment = np.asarray(grouping.assignment)
    shifted = scenarios.values[None, :, :] + z_points[:, None, assignment]
    selection = (shifted >= -1e-9).all(axis=(1, 2))
    totals = ring2_totals(net.pbar, np.maximum(shifted, 0.0))
    violations = (totals < spec.alpha - 1e-9).sum(axis=1)
    return selection & (violations <= max_violations(scenarios.n, spec.lam))


def ring_grid_distance(net, grouping, scenarios, spec, v, box, step=1e-3) -> float:
    """Dense z-grid scan of the distance to the sampled set (2-ring only)."""
    z1 = np.arange(box.lo[0], box.hi[0] + step, step)
    z2 = np.arange(box.lo[1], box.hi[1] + step, step)
    best = np.inf
    for start in range(0, len(z1), 400):
        part = z1[start:start + 400]
        zz = np.stack(np.meshgrid(part, z2, indexing="ij"), -1).reshape(-1, 2)
        ok = ring_membership_mask(net, grouping, scenarios, spec, zz)
        if ok.any():
            best = min(best, float(np.linalg.norm(zz[ok] - v, axis=1).min()))
    return best


def exhaustive_grid_generators(net, grouping, scenarios, spec, grid) -> np.ndarray:
    """Classify every grid point with the membership oracle, then extract
    the minimal acceptable points."""
    from sysvar.saa import _generators

    status = np.zeros(grid.shape, dtype=np.int8)
    for idx in itertools.product(*[range(s) for s in grid.shape]):
        ok = sv.membership(net, grouping, scenarios, spec, grid.value(idx)).accepted
        status[idx] = 1 if ok else 2
    return _generators(grid, status)


def exp_scenarios(rng: np.random.Generator, n: int, d: int, scale: float) -> sv.ScenarioSet:
    return sv.ScenarioSet(values=rng.exponential(scale, size=(n, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
