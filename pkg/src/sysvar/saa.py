"""Grid-search approximation of the sampled risk set, set metrics, convergence.

Two interchangeable algorithms classify a downward-anchored grid against the
sampled risk set: one queries the membership oracle point by point and
propagates labels along the componentwise order (acceptable points seed an
upper cone, rejected points a lower cone); the other solves a least-distance
scalarization per visited point, marking the nearest point's upper cone
acceptable and the open ball below the distance not acceptable.  Both return
the same acceptable set: the grid intersected with the risk set, represented
by its minimal elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .network import FinancialNetwork, Grouping
from .risk import CapitalBox, RiskSpec, membership, z_bounds
from .scalarize import ideal_point, norm_min
from .shocks import ScenarioSet, ShockParams, sample_shocks
from .util import (
    CapacityError,
    ValidationError,
    log_event,
    max_violations,
    parallel_map,
)

_GRID_POINT_CAP = 50_000_000
_IDEAL_MARGIN = 1e-5
_BALL_SHRINK = 1e-6


@dataclass(frozen=True)
class Grid:
    """Rectangular lattice anchored at the upper corner.

    Levels along axis j descend from hi_j in steps of epsilon/sqrt(g) and
    extend one step past lo_j if needed, so every v in [lo, hi] has a grid
    point z with v <= z <= v + step componentwise.
    """

    lo: np.ndarray
    hi: np.ndarray
    step: float
    levels: tuple[np.ndarray, ...]

    @staticmethod
    def build(lo: np.ndarray, hi: np.ndarray, epsilon: float) -> "Grid":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if np.any(lo > hi + 1e-12):
            raise ValidationError("grid corners are inverted")
        g = lo.size
        step = epsilon / math.sqrt(g)
        levels = []
        total = 1
        for j in range(g):
            count = int(math.ceil(max(hi[j] - lo[j], 0.0) / step - 1e-12))
            levels.append(hi[j] - step * np.arange(count + 1))
            total *= count + 1
            if total > _GRID_POINT_CAP:
                raise CapacityError(f"grid would exceed {_GRID_POINT_CAP} points")
        return Grid(lo=lo, hi=hi, step=step, levels=tuple(levels))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(lv.size for lv in self.levels)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def value(self, idx: tuple[int, ...]) -> np.ndarray:
        return np.array([lv[i] for lv, i in zip(self.levels, idx)])


@dataclass
class ApproxSet:
    """Upper set generated by the minimal acceptable grid points."""

    epsilon: float
    generators: np.ndarray
    box: CapitalBox
    ideal: np.ndarray
    feasible: bool = True

    def contains(self, z: np.ndarray, tol: float = 1e-12) -> bool:
        if self.generators.size == 0:
            return False
        z = np.asarray(z, dtype=float)
        return bool(np.any(np.all(self.generators <= z + tol, axis=1)))


def _empty_set(epsilon: float, box: CapitalBox, g: int) -> ApproxSet:
    return ApproxSet(
        epsilon=epsilon,
        generators=np.empty((0, g)),
        box=box,
        ideal=np.full(g, np.nan),
        feasible=False,
    )


def _traversal(grid: Grid, shuffle_seed: int | None) -> np.ndarray:
    """Indices ordered by decreasing coordinate sum (ties lexicographic)."""
    shape = grid.shape
    idx = np.indices(shape).reshape(len(shape), -1)
    if shuffle_seed is not None:
        perm = np.random.default_rng(shuffle_seed).permutation(idx.shape[1])
        return idx[:, perm].T
    total = idx.sum(axis=0)
    keys = [idx[j] for j in reversed(range(len(shape)))] + [total]
    return idx[:, np.lexsort(tuple(keys))].T


def _mark_upper(status: np.ndarray, idx: tuple[int, ...]) -> None:
    region = status[tuple(slice(0, i + 1) for i in idx)]
    region[region == 0] = 1


def _mark_lower(status: np.ndarray, idx: tuple[int, ...]) -> None:
    region = status[tuple(slice(i, None) for i in idx)]
    region[region == 0] = 2


def _generators(grid: Grid, status: np.ndarray) -> np.ndarray:
    """Minimal acceptable points: acceptable cells whose one-step-down
    neighbors are all rejected or off-grid, filtered to an antichain."""
    accepted = np.argwhere(status == 1)
    shape = grid.shape
    gens = []
    for idx in accepted:
        minimal = True
        for j in range(len(shape)):
            if idx[j] + 1 < shape[j]:
                nb = idx.copy()
                nb[j] += 1
                if status[tuple(nb)] == 1:
                    minimal = False
                    break
        if minimal:
            gens.append(grid.value(tuple(idx)))
    if not gens:
        return np.empty((0, len(shape)))
    arr = np.asarray(gens)
    drop = np.zeros(len(arr), dtype=bool)
    for i in range(len(arr)):
        below = np.all(arr <= arr[i] + 1e-15, axis=1) & np.any(arr < arr[i] - 1e-15, axis=1)
        if np.any(below):
            drop[i] = True
    arr = arr[~drop]
    order = np.lexsort(tuple(arr[:, j] for j in reversed(range(arr.shape[1]))))
    return arr[order]


def _prepare(net, grouping, scenarios, spec, epsilon, box, grid_lo, threads):
    spec.validate()
    box = z_bounds(net, grouping, scenarios) if box is None else box
    box.validate()
    if spec.alpha > net.total_obligations:
        return box, None
    if grid_lo is None:
        ideal = ideal_point(net, grouping, scenarios, spec, box=box,
                            method="bisection", threads=threads)
        grid_lo = ideal - _IDEAL_MARGIN
    grid = Grid.build(np.asarray(grid_lo, dtype=float),
                      np.asarray(box.hi, dtype=float), epsilon)
    return box, grid


def approximate_by_clearing(
    net: FinancialNetwork,
    grouping: Grouping,
    scenarios: ScenarioSet,
    spec: RiskSpec,
    epsilon: float,
    box: CapitalBox | None = None,
    grid_lo: np.ndarray | None = None,
    threads: int = 1,
    shuffle_seed: int | None = None,
) -> ApproxSet:
    """Inner approximation by per-point membership with cone propagation.

    Every grid point is classified exactly as the membership oracle would
    classify it; the cones only save evaluations.  The returned upper set is
    within epsilon Hausdorff distance of the sampled risk set.
    """
    box, grid = _prepare(net, grouping, scenarios, spec, epsilon, box, grid_lo, threads)
    if grid is None:
        return _empty_set(epsilon, box, grouping.g)
    status = np.zeros(grid.shape, dtype=np.int8)
    evals = 0
    for idx_arr in _traversal(grid, shuffle_seed):
        idx = tuple(int(i) for i in idx_arr)
        if status[idx] != 0:
            continue
        res = membership(net, grouping, scenarios, spec, grid.value(idx), threads=threads)
        evals += 1
        if res.accepted:
            _mark_upper(status, idx)
        else:
            _mark_lower(status, idx)
    log_event("grid_clearing_done", points=grid.size, evaluations=evals)
    return ApproxSet(
        epsilon=epsilon,
        generators=_generators(grid, status),
        box=box,
        ideal=grid.lo.copy(),
    )


def approximate_by_norm_min(
    net: FinancialNetwork,
    grouping: Grouping,
    scenarios: ScenarioSet,
    spec: RiskSpec,
    epsilon: float,
    box: CapitalBox | None = None,
    grid_lo: np.ndarray | None = None,
    threads: int = 1,
    shuffle_seed: int | None = None,
    node_budget: int = 100_000,
) -> ApproxSet:
    """Inner approximation driven by least-distance scalarizations.

    Each visited grid point z yields a nearest set point zbar at distance
    gamma: the grid above zbar is acceptable, and grid points strictly
    closer to z than gamma cannot belong to the set.  The exclusion radius
    is shrunk by 1e-6 to stay on the safe side of solver gaps; a point left
    unresolved falls back to direct membership, so the final classification
    matches the clearing-based algorithm.
    """
    box, grid = _prepare(net, grouping, scenarios, spec, epsilon, box, grid_lo, threads)
    if grid is None:
        return _empty_set(epsilon, box, grouping.g)
    status = np.zeros(grid.shape, dtype=np.int8)
    value_mesh = np.stack(
        np.meshgrid(*grid.levels, indexing="ij"), axis=-1
    )
    solves = 0
    fallbacks = 0
    cut_cache: dict = {}
    for idx_arr in _traversal(grid, shuffle_seed):
        idx = tuple(int(i) for i in idx_arr)
        if status[idx] != 0:
            continue
        z = grid.value(idx)
        res = norm_min(net, grouping, scenarios, spec, z, box=box,
                       node_budget=node_budget, cut_cache=cut_cache)
        solves += 1
        if res.status == "budget_exhausted":
            fallbacks += 1
            ok = membership(net, grouping, scenarios, spec, z, threads=threads).accepted
            if ok:
                _mark_upper(status, idx)
            else:
                _mark_lower(status, idx)
            continue
        zbar = np.asarray(res.z, dtype=float)
        cone = tuple(
            slice(0, int(np.sum(grid.levels[j] >= zbar[j] - 1e-12)))
            for j in range(grouping.g)
        )
        region = status[cone]
        region[region == 0] = 1
        radius = res.value - _BALL_SHRINK
        if radius > 0:
            unknown = status == 0
            if np.any(unknown):
                dist = np.sqrt(np.sum((value_mesh - z) ** 2, axis=-1))
                status[unknown & (dist < radius)] = 2
        if status[idx] == 0:
            # distance too small to exclude and the cone missed the point
            ok = membership(net, grouping, scenarios, spec, z, threads=threads).accepted
            status[idx] = 1 if ok else 2
            if ok:
                _mark_upper(status, idx)
            else:
                _mark_lower(status, idx)
    log_event("grid_norm_min_done", points=grid.size, solves=solves, fallbacks=fallbacks)
    return ApproxSet(
        epsilon=epsilon,
        generators=_generators(grid, status),
        box=box,
        ideal=grid.lo.copy(),
    )


def hausdorff_distance(set_a: ApproxSet, set_b: ApproxSet) -> float:
    """Hausdorff distance between two finitely generated upper sets.

    d(x, gen + orthant) = |(gen - x)^+|_2 in closed form, and the directed
    supremum over an upper set is attained at its generators, so the
    distance reduces to max-min over the two generator lists.
    """
    if set_a.generators.size == 0 or set_b.generators.size == 0:
        raise ValidationError("hausdorff distance of an empty set is undefined")
    return max(_directed(set_a.generators, set_b.generators),
               _directed(set_b.generators, set_a.generators))


def _directed(from_gens: np.ndarray, to_gens: np.ndarray) -> float:
    diff = np.clip(to_gens[None, :, :] - from_gens[:, None, :], 0.0, None)
    d = np.sqrt(np.sum(diff * diff, axis=2))
    return float(d.min(axis=1).max())


def distance_probe(v: np.ndarray, approx: ApproxSet) -> float:
    """Distance from v to the represented upper set; +inf for an empty set."""
    if approx.generators.size == 0:
        return float("inf")
    v = np.asarray(v, dtype=float)
    diff = np.clip(approx.generators - v[None, :], 0.0, None)
    return float(np.sqrt(np.sum(diff * diff, axis=1)).min())


def insensitive_saa(aggregates: np.ndarray, spec: RiskSpec) -> float:
    """Scalar capital added after aggregation: an order-statistic quantile.

    The least y with at most floor(N*lambda) scenarios below alpha - y is
    alpha minus the (floor(N*lambda)+1)-th smallest aggregate.
    """
    spec.validate()
    arr = np.sort(np.asarray(aggregates, dtype=float))
    if arr.size == 0:
        raise ValidationError("aggregate list is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("aggregates must be finite")
    k = max_violations(arr.size, spec.lam)
    return float(spec.alpha - arr[k])


def convergence_study(
    net: FinancialNetwork,
    grouping: Grouping,
    shock_params: ShockParams,
    spec: RiskSpec,
    n_list: list[int],
    seeds: list[int],
    epsilon: float,
    n_ref: int,
    probe_points: list[np.ndarray] | None = None,
    threads: int = 1,
) -> list[dict]:
    """Distance of sampled sets to a high-sample reference, per seed and size.

    For each seed the first n scenarios of one fixed stream feed each sampled
    set, and the full stream of length n_ref feeds the reference (itself an
    approximation, used as a proxy for the unobservable limit).  Reported per
    cell: Hausdorff distance to the reference and the distance probes; a
    final median row aggregates the seeds.
    """
    if n_ref < max(n_list):
        raise ValidationError("n_ref must be at least max(n_list)")
    if probe_points is None:
        hi = np.array([
            np.asarray(net.pbar)[np.asarray(grouping.assignment) == j].max()
            for j in range(grouping.g)
        ])
        probe_points = [0.25 * hi, 0.5 * hi]
    probe_points = [np.asarray(p, dtype=float) for p in probe_points]

    def run_seed(seed: int) -> list[dict]:
        params = replace(shock_params, n=n_ref, seed=seed)
        scen_full = sample_shocks(params, grouping)
        ref = approximate_by_clearing(net, grouping, scen_full, spec, epsilon)
        rows = []
        for n in n_list:
            approx = approximate_by_clearing(
                net, grouping, scen_full.head(n), spec, epsilon
            )
            if not (approx.feasible and ref.feasible):
                row = {"seed": seed, "N": n, "hausdorff_to_ref": float("nan")}
            else:
                row = {
                    "seed": seed,
                    "N": n,
                    "hausdorff_to_ref": hausdorff_distance(approx, ref),
                }
            for i, p in enumerate(probe_points, start=1):
                row[f"probe_{i}"] = distance_probe(p, approx)
            rows.append(row)
        return rows

    per_seed = parallel_map(run_seed, seeds, threads)
    rows = [row for chunk in per_seed for row in chunk]
    for n in n_list:
        cells = [r for r in rows if r["N"] == n and isinstance(r["seed"], int)]
        med = {"seed": "median", "N": n,
               "hausdorff_to_ref": float(np.median([c["hausdorff_to_ref"] for c in cells]))}
        for i in range(1, len(probe_points) + 1):
            med[f"probe_{i}"] = float(np.median([c[f"probe_{i}"] for c in cells]))
        rows.append(med)
    return rows
