"""Self-contained solver kernels.

``solve_lp`` is a two-phase bounded-variable primal simplex on a dense
tableau (revised form with an explicit basis inverse).  Pricing is Dantzig's
rule, switching to Bland's rule after a run of degenerate steps to guarantee
termination.  ``min_norm_qp`` projects a point onto a small-dimension
polyhedron by enumerating active sets and checking KKT conditions, which is
exact for strictly convex least-distance problems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .util import CapacityError, SolverError, ValidationError, log_event

_FEAS_TOL = 1e-9
_COST_TOL = 1e-9
_PIVOT_TOL = 1e-10
_DEGENERATE_STEP = 1e-11
_BLAND_TRIGGER = 50
_REFACTOR_EVERY = 500
_MAX_ITER = 1_000_000


@dataclass
class LinearProgram:
    """min/max c.x subject to a_ub.x <= b_ub, a_eq.x = b_eq, lower <= x <= upper."""

    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: str = "min"

    def dims(self) -> tuple[int, int, int]:
        n = np.asarray(self.c).size
        m_ub = 0 if self.a_ub is None else np.asarray(self.a_ub).shape[0]
        m_eq = 0 if self.a_eq is None else np.asarray(self.a_eq).shape[0]
        return n, m_ub, m_eq


@dataclass
class LpResult:
    """Solution with duals in the user's sense: duals are d(objective)/d(rhs)."""

    status: str
    x: np.ndarray | None
    objective: float
    duals_ub: np.ndarray | None
    duals_eq: np.ndarray | None
    reduced_costs: np.ndarray | None
    iterations: int


def solve_lp(lp: LinearProgram) -> LpResult:
    """Solve a bounded-variable LP; status is optimal/infeasible/unbounded."""
    n, m_ub, m_eq = lp.dims()
    if lp.sense not in ("min", "max"):
        raise ValidationError("sense must be 'min' or 'max'")
    c = np.asarray(lp.c, dtype=float).copy()
    if lp.sense == "max":
        c = -c

    lower = np.full(n, -np.inf) if lp.lower is None else np.asarray(lp.lower, dtype=float).copy()
    upper = np.full(n, np.inf) if lp.upper is None else np.asarray(lp.upper, dtype=float).copy()
    if lower.shape != (n,) or upper.shape != (n,):
        raise ValidationError("bound vectors must match the variable count")
    if np.any(lower > upper + _FEAS_TOL):
        return LpResult("infeasible", None, np.nan, None, None, None, 0)

    rows = []
    rhs = []
    if m_ub:
        a_ub = np.asarray(lp.a_ub, dtype=float)
        if a_ub.shape != (m_ub, n):
            raise ValidationError("a_ub shape inconsistent with c")
        rows.append(a_ub)
        rhs.append(np.asarray(lp.b_ub, dtype=float))
    if m_eq:
        a_eq = np.asarray(lp.a_eq, dtype=float)
        if a_eq.shape != (m_eq, n):
            raise ValidationError("a_eq shape inconsistent with c")
        rows.append(a_eq)
        rhs.append(np.asarray(lp.b_eq, dtype=float))
    m = m_ub + m_eq

    if m == 0:
        # pure box problem
        x = np.where(c > 0, lower, np.where(c < 0, upper, np.where(np.isfinite(lower), lower, 0.0)))
        if not np.all(np.isfinite(x)):
            return LpResult("unbounded", None, -np.inf if lp.sense == "min" else np.inf,
                            None, None, None, 0)
        obj = float(c @ x)
        sign = 1.0 if lp.sense == "min" else -1.0
        return LpResult("optimal", x, sign * obj, np.zeros(0), np.zeros(0), sign * c, 0)

    a = np.vstack(rows)
    b = np.concatenate(rhs)

    state = _Simplex(a, b, c, lower, upper, m_ub)
    status = state.run()

    sign = 1.0 if lp.sense == "min" else -1.0
    if status == "infeasible":
        return LpResult("infeasible", None, np.nan, None, None, None, state.iterations)
    if status == "unbounded":
        return LpResult("unbounded", None, -sign * np.inf, None, None, None, state.iterations)

    x, y, red = state.solution()
    obj = float(c @ x)
    return LpResult(
        status="optimal",
        x=x,
        objective=sign * obj,
        duals_ub=sign * y[:m_ub],
        duals_eq=sign * y[m_ub:],
        reduced_costs=sign * red[:n],
        iterations=state.iterations,
    )


def dual_objective(lp: LinearProgram, res: LpResult) -> float:
    """Bound-adjusted dual objective; equals the primal objective at optimality.

    objective = duals.b + sum over nonbasic structurals of reduced_cost * value,
    where the value is the active bound.  Variables with zero reduced cost drop
    out, so basic variables contribute nothing.
    """
    n, m_ub, m_eq = lp.dims()
    total = 0.0
    if m_ub:
        total += float(np.asarray(lp.b_ub, dtype=float) @ res.duals_ub)
    if m_eq:
        total += float(np.asarray(lp.b_eq, dtype=float) @ res.duals_eq)
    lower = np.full(n, -np.inf) if lp.lower is None else np.asarray(lp.lower, dtype=float)
    upper = np.full(n, np.inf) if lp.upper is None else np.asarray(lp.upper, dtype=float)
    rc = res.reduced_costs
    sgn = 1.0 if lp.sense == "min" else -1.0
    for j in range(n):
        r = sgn * rc[j]
        if abs(r) <= 1e-11:
            continue
        bound = lower[j] if r > 0 else upper[j]
        if np.isfinite(bound):
            total += sgn * r * bound
    return total


_AT_LOWER = 1
_AT_UPPER = 2
_FREE = 3
_BASIC = 0


class _Simplex:
    """Bounded-variable primal simplex over A x = b with slacks and artificials."""

    def __init__(self, a, b, c, lower, upper, m_ub):
        m, n = a.shape
        self.m = m
        self.n_struct = n
        # columns: structurals | slacks (ub rows) | artificials (all rows)
        slack = np.zeros((m, m_ub))
        slack[:m_ub, :] = np.eye(m_ub)
        self.ncols = n + m_ub + m
        self.a = np.hstack([a, slack, np.zeros((m, m))])
        self.b = b.astype(float)
        self.cost2 = np.concatenate([c, np.zeros(m_ub + m)])
        self.lower = np.concatenate([lower, np.zeros(m_ub), np.zeros(m)])
        self.upper = np.concatenate([upper, np.full(m_ub, np.inf), np.full(m, np.inf)])
        self.art0 = n + m_ub
        self.iterations = 0

        # nonbasic start: finite bound nearest zero, else free at 0
        self.status = np.empty(self.ncols, dtype=np.int8)
        self.xval = np.zeros(self.ncols)
        for j in range(n + m_ub):
            lo, up = self.lower[j], self.upper[j]
            if np.isfinite(lo):
                self.status[j], self.xval[j] = _AT_LOWER, lo
            elif np.isfinite(up):
                self.status[j], self.xval[j] = _AT_UPPER, up
            else:
                self.status[j], self.xval[j] = _FREE, 0.0

        resid = self.b - self.a[:, : n + m_ub] @ self.xval[: n + m_ub]
        signs = np.where(resid >= 0, 1.0, -1.0)
        for i in range(m):
            self.a[i, self.art0 + i] = signs[i]
        # crash basis: satisfied inequality rows start on their slack, only
        # violated (or equality) rows need an artificial
        self.basis = np.empty(m, dtype=int)
        diag = np.ones(m)
        self.upper[self.art0:] = 0.0
        for i in range(m):
            if i < m_ub and resid[i] >= 0.0:
                self.basis[i] = n + i
            else:
                self.basis[i] = self.art0 + i
                self.upper[self.art0 + i] = np.inf
                diag[i] = signs[i]
        self.status[self.basis] = _BASIC
        self.binv = np.diag(diag)
        self.xb = np.where(self.basis >= self.art0, np.abs(resid), resid)
        self.cost1 = np.concatenate([np.zeros(n + m_ub), np.ones(m)])

    # -- core iteration ---------------------------------------------------

    def run(self) -> str:
        if self._phase(self.cost1) == "unbounded":
            raise SolverError("phase-1 subproblem reported unbounded")
        if float(self.cost1[self.basis] @ self.xb) > 1e-7 * max(1.0, np.abs(self.b).max()):
            return "infeasible"
        # freeze artificials at zero for phase 2
        self.upper[self.art0:] = 0.0
        self.xval[self.art0:] = 0.0
        return self._phase(self.cost2)

    def _phase(self, cost) -> str:
        degenerate_run = 0
        bland = False
        since_refactor = 0
        while True:
            if self.iterations >= _MAX_ITER:
                raise SolverError("simplex iteration cap exceeded (cycling guard)")
            y = self.binv.T @ cost[self.basis]
            red = cost - self.a.T @ y
            j = self._entering(red, bland)
            if j < 0:
                return "optimal"
            self.iterations += 1
            since_refactor += 1

            direction = 1.0 if (self.status[j] == _AT_LOWER or
                                (self.status[j] == _FREE and red[j] < 0)) else -1.0
            w = self.binv @ self.a[:, j]
            rate = -w if direction > 0 else w

            basis_lo = self.lower[self.basis]
            basis_up = self.upper[self.basis]
            t_hit = np.full(self.m, np.inf)
            dec = rate < -_PIVOT_TOL
            inc = rate > _PIVOT_TOL
            t_hit[dec] = (self.xb[dec] - basis_lo[dec]) / (-rate[dec])
            t_hit[inc] = (basis_up[inc] - self.xb[inc]) / rate[inc]
            np.maximum(t_hit, 0.0, out=t_hit)
            t_best = t_hit.min() if self.m else np.inf

            span = self.upper[j] - self.lower[j]
            t_flip = span if np.isfinite(span) else np.inf

            if t_flip < t_best:
                # bound flip, no basis change
                self.xb += rate * t_flip
                self.xval[j] = self.upper[j] if direction > 0 else self.lower[j]
                self.status[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                degenerate_run = 0
                bland = False
                continue

            if not np.isfinite(t_best):
                return "unbounded"

            candidates = np.flatnonzero(t_hit <= t_best + 1e-12)
            leave = int(candidates[np.argmin(self.basis[candidates])])
            leave_to = _AT_LOWER if rate[leave] < 0 else _AT_UPPER

            if t_best <= _DEGENERATE_STEP:
                degenerate_run += 1
                if degenerate_run >= _BLAND_TRIGGER:
                    bland = True
            else:
                degenerate_run = 0
                bland = False

            old = self.basis[leave]
            self.xb += rate * t_best
            enter_val = self.xval[j] + direction * t_best
            self.status[old] = leave_to
            self.xval[old] = self.lower[old] if leave_to == _AT_LOWER else self.upper[old]
            self.basis[leave] = j
            self.status[j] = _BASIC
            self.xb[leave] = enter_val

            piv = w[leave]
            if abs(piv) < _PIVOT_TOL:
                raise SolverError("vanishing pivot element")
            self.binv[leave] /= piv
            w[leave] = 0.0
            self.binv -= w[:, None] * self.binv[leave][None, :]

            if since_refactor >= _REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0

    def _entering(self, red, bland: bool) -> int:
        st = self.status
        fixed = self.upper - self.lower <= 0
        down = (st == _AT_LOWER) & (red < -_COST_TOL) & ~fixed
        up = (st == _AT_UPPER) & (red > _COST_TOL) & ~fixed
        free = (st == _FREE) & (np.abs(red) > _COST_TOL)
        eligible = np.flatnonzero(down | up | free)
        if eligible.size == 0:
            return -1
        if bland:
            return int(eligible[0])
        scores = np.abs(red[eligible])
        return int(eligible[np.argmax(scores)])

    def _refactor(self) -> None:
        basis_mat = self.a[:, self.basis]
        try:
            self.binv = np.linalg.inv(basis_mat)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis during refactorization") from exc
        nb = np.flatnonzero(self.status != _BASIC)
        self.xb = self.binv @ (self.b - self.a[:, nb] @ self.xval[nb])

    # -- extraction --------------------------------------------------------

    def solution(self):
        self._refactor()
        x = self.xval.copy()
        x[self.basis] = self.xb
        # snap basics onto violated bounds within tolerance
        x = np.minimum(np.maximum(x, self.lower - _FEAS_TOL), self.upper + _FEAS_TOL)
        y = self.binv.T @ self.cost2[self.basis]
        red = self.cost2 - self.a.T @ y
        resid = self.a[:, : self.art0] @ x[: self.art0] - self.b
        scale = max(1.0, float(np.abs(self.b).max()))
        if np.abs(resid).max() > 1e-7 * scale:
            raise SolverError("primal residual exceeds tolerance after solve")
        return x[: self.n_struct], y, red


def feasible_point(
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
) -> np.ndarray | None:
    """Phase-1 helper: a point of {a_ub x <= b_ub, lower <= x <= upper} or None."""
    n = lower.size
    lp = LinearProgram(c=np.zeros(n), a_ub=a_ub, b_ub=b_ub, lower=lower, upper=upper)
    res = solve_lp(lp)
    return res.x if res.status == "optimal" else None


@dataclass
class QpResult:
    z: np.ndarray
    distance: float
    active: tuple[int, ...] = field(default_factory=tuple)


def min_norm_qp(
    v: np.ndarray,
    a_ub: np.ndarray | None,
    b_ub: np.ndarray | None,
    lower: np.ndarray,
    upper: np.ndarray,
) -> QpResult:
    """Project v onto {a_ub z <= b_ub, lower <= z <= upper} in dimension <= 4.

    Enumerates candidate active sets of size up to the dimension and accepts
    the first KKT-consistent one; the objective is strictly convex, so any
    KKT point is the unique optimum.  Caller is responsible for checking the
    region is nonempty (an LP feasibility probe); an infeasible region is
    reported as a validation error.
    """
    v = np.asarray(v, dtype=float)
    g = v.size
    if g > 4:
        raise CapacityError("min_norm_qp supports dimension at most 4")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)

    rows = []
    rhs = []
    if a_ub is not None and len(a_ub):
        rows.append(np.asarray(a_ub, dtype=float))
        rhs.append(np.asarray(b_ub, dtype=float))
    for j in range(g):
        if np.isfinite(upper[j]):
            e = np.zeros(g)
            e[j] = 1.0
            rows.append(e[None, :])
            rhs.append(np.array([upper[j]]))
        if np.isfinite(lower[j]):
            e = np.zeros(g)
            e[j] = -1.0
            rows.append(e[None, :])
            rhs.append(np.array([-lower[j]]))
    if rows:
        big_a = np.vstack(rows)
        big_b = np.concatenate(rhs)
    else:
        return QpResult(z=v.copy(), distance=0.0)

    def feasible(z: np.ndarray) -> bool:
        return bool(np.all(big_a @ z <= big_b + 1e-9))

    if feasible(v):
        return QpResult(z=v.copy(), distance=0.0)

    m = big_a.shape[0]
    for size in range(1, g + 1):
        for combo in itertools.combinations(range(m), size):
            a_s = big_a[list(combo)]
            gram = a_s @ a_s.T
            r = a_s @ v - big_b[list(combo)]
            try:
                lam = np.linalg.solve(gram, r)
            except np.linalg.LinAlgError:
                continue
            if np.abs(gram @ lam - r).max() > 1e-8 * max(1.0, np.abs(r).max()):
                continue
            if np.any(lam < -1e-10):
                continue
            z = v - a_s.T @ lam
            if feasible(z):
                dist = float(np.linalg.norm(v - z))
                return QpResult(z=z, distance=dist, active=tuple(combo))

    probe = feasible_point(big_a, big_b, np.full(g, -np.inf), np.full(g, np.inf))
    if probe is None:
        raise ValidationError("min_norm_qp called on an empty region")
    log_event("qp_enumeration_fallback", rows=m)
    raise SolverError("active-set enumeration found no KKT point on a nonempty region")
