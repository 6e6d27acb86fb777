"""Weighted-sum and least-distance scalarizations of the sampled risk set.

Both delegate to the branch-and-bound solver over the capital box; the box
restriction loses nothing because the risk set equals its boxed part plus
the nonnegative orthant.  A monotone bisection along one coordinate (with
all other coordinates pinned at the box top) provides an independent route
to unit-weight values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mip import MipSolution, ScenarioMip, branch_and_bound
from .network import FinancialNetwork, Grouping
from .risk import CapitalBox, RiskSpec, membership, z_bounds
from .shocks import ScenarioSet
from .util import ValidationError, log_event, parallel_map

_BISECT_TOL = 1e-6


@dataclass
class ScalarizationResult:
    status: str                 # optimal | infeasible | budget_exhausted
    value: float                # w.z for weighted-sum, distance for norm-min
    z: np.ndarray | None
    solution: MipSolution | None = None


def _box_or_default(net, grouping, scenarios, box: CapitalBox | None) -> CapitalBox:
    if box is None:
        return z_bounds(net, grouping, scenarios)
    box.validate()
    return box


def weighted_sum(
    net: FinancialNetwork,
    grouping: Grouping,
    scenarios: ScenarioSet,
    spec: RiskSpec,
    weights: np.ndarray,
    box: CapitalBox | None = None,
    node_budget: int = 100_000,
) -> ScalarizationResult:
    """Minimum of weights.z over the sampled risk set (boxed)."""
    spec.validate()
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValidationError("weights must be nonnegative and not all zero")
    if spec.alpha > net.total_obligations:
        return ScalarizationResult("infeasible", np.nan, None)
    box = _box_or_default(net, grouping, scenarios, box)
    model = ScenarioMip(
        net=net, grouping=grouping, scenarios=scenarios,
        alpha=spec.alpha, lam=spec.lam,
        z_lower=np.asarray(box.lo, dtype=float),
        z_upper=np.asarray(box.hi, dtype=float),
        weights=weights,
    )
    sol = branch_and_bound(model, node_budget=node_budget)
    if sol.status == "infeasible":
        return ScalarizationResult("infeasible", np.nan, None, sol)
    return ScalarizationResult(sol.status, float(sol.objective), sol.z, sol)


def norm_min(
    net: FinancialNetwork,
    grouping: Grouping,
    scenarios: ScenarioSet,
    spec: RiskSpec,
    point: np.ndarray,
    box: CapitalBox | None = None,
    node_budget: int = 100_000,
    cut_cache: dict | None = None,
) -> ScalarizationResult:
    """Distance from `point` to the boxed sampled risk set, with a nearest point.

    Membership of the reference point short-circuits to distance zero.  For
    reference points below the set the nearest point dominates the reference
    componentwise.
    """
    spec.validate()
    point = np.asarray(point, dtype=float)
    if spec.alpha > net.total_obligations:
        return ScalarizationResult("infeasible", np.nan, None)
    box = _box_or_default(net, grouping, scenarios, box)
    inside_box = bool(np.all(point <= np.asarray(box.hi) + 1e-12))
    if inside_box and membership(net, grouping, scenarios, spec, point).accepted:
        return ScalarizationResult("optimal", 0.0, point.copy())
    model = ScenarioMip(
        net=net, grouping=grouping, scenarios=scenarios,
        alpha=spec.alpha, lam=spec.lam,
        z_lower=np.asarray(box.lo, dtype=float),
        z_upper=np.asarray(box.hi, dtype=float),
        center=point,
    )
    sol = branch_and_bound(model, node_budget=node_budget, cut_cache=cut_cache)
    if sol.status == "infeasible":
        return ScalarizationResult("infeasible", np.nan, None, sol)
    return ScalarizationResult(sol.status, float(np.sqrt(max(sol.objective, 0.0))), sol.z, sol)


def bisection_unit(
    net: FinancialNetwork,
    grouping: Grouping,
    scenarios: ScenarioSet,
    spec: RiskSpec,
    j: int,
    box: CapitalBox | None = None,
    tol: float = _BISECT_TOL,
) -> float:
    """Unit-weight scalarization along coordinate j by monotone bisection.

    Pins every other coordinate at the box top; the membership indicator is
    then monotone in t, and the least acceptable t equals the weighted-sum
    value for the j-th unit weight by the upper-set property.
    """
    spec.validate()
    box = _box_or_default(net, grouping, scenarios, box)
    lo = np.asarray(box.lo, dtype=float)
    hi = np.asarray(box.hi, dtype=float)
    if not 0 <= j < grouping.g:
        raise ValidationError("group index out of range")

    def accepted(t: float) -> bool:
        z = hi.copy()
        z[j] = t
        return membership(net, grouping, scenarios, spec, z).accepted

    if not accepted(hi[j]):
        raise ValidationError("risk set is empty even at the box top")
    if accepted(lo[j]):
        return float(lo[j])
    left, right = float(lo[j]), float(hi[j])
    while right - left > tol:
        mid = 0.5 * (left + right)
        if accepted(mid):
            right = mid
        else:
            left = mid
    return right


def ideal_point(
    net: FinancialNetwork,
    grouping: Grouping,
    scenarios: ScenarioSet,
    spec: RiskSpec,
    box: CapitalBox | None = None,
    method: str = "milp",
    threads: int = 1,
) -> np.ndarray:
    """Componentwise minimum of the boxed risk set.

    Component j solves the unit-weight scalarization, exactly via the
    mixed-binary program (``milp``) or via the monotone bisection oracle
    (``bisection``); the two agree within the bisection tolerance.
    """
    spec.validate()
    box = _box_or_default(net, grouping, scenarios, box)

    def component(j: int) -> float:
        if method == "milp":
            w = np.zeros(grouping.g)
            w[j] = 1.0
            res = weighted_sum(net, grouping, scenarios, spec, w, box=box)
            if res.status == "infeasible":
                raise ValidationError("risk set is empty: alpha exceeds total obligations")
            return float(res.value)
        if method == "bisection":
            return bisection_unit(net, grouping, scenarios, spec, j, box=box)
        raise ValidationError(f"unknown ideal-point method {method!r}")

    values = parallel_map(component, range(grouping.g), threads)
    ideal = np.asarray(values, dtype=float)
    log_event("ideal_point", method=method, ideal=ideal)
    return ideal
