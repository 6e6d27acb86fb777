"""Interbank clearing: fixed-point and LP engines, aggregation, enumeration.

The maximal clearing vector solves p = (pi^T p + x) ^ pbar.  The fixed-point
engine runs the fictitious-default iteration from p = pbar: each round
classifies the default set and solves the defaulters' linear subsystem
exactly, so it terminates in at most d rounds of default-set growth.  The LP
engine maximizes a strictly increasing linear objective over the limited
liability region and recovers the same vector.  The aggregation function is
the total payment of the maximal clearing vector (minus infinity off the
nonnegative orthant), and its supergradient comes from the LP dual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import FinancialNetwork
from .optim import LinearProgram, solve_lp
from .util import CapacityError, DEFAULT_TOL, SolverError, ValidationError

_FP_TOL = 1e-12


@dataclass
class ClearingResult:
    p: np.ndarray
    defaults: np.ndarray
    iterations: int
    total_payment: float


@dataclass
class ClearingPolytope:
    """H-representation of the clearing vectors sharing one default pattern."""

    y: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray


def _check_nonnegative(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValidationError("cash flow vector must be nonnegative")
    return x


def clearing_fixed_point(net: FinancialNetwork, x: np.ndarray) -> ClearingResult:
    """Maximal clearing vector by the fictitious-default iteration from pbar."""
    x = _check_nonnegative(x)
    pi = np.asarray(net.pi, dtype=float)
    pbar = np.asarray(net.pbar, dtype=float)
    d = net.d

    p = pbar.copy()
    default = np.zeros(d, dtype=bool)
    rounds = 0
    cap = max(50 * d, 4)
    while rounds < cap:
        rounds += 1
        inflow = pi.T @ p + x
        new_default = default | (p > inflow + DEFAULT_TOL)
        if rounds > 1 and np.array_equal(new_default, default):
            break
        if not new_default.any():
            break
        default = new_default
        idx = np.flatnonzero(default)
        sub = pi[np.ix_(idx, idx)].T
        solvent_inflow = pi[np.ix_(~default, default)].T @ pbar[~default]
        rhs = x[idx] + solvent_inflow
        mat = np.eye(idx.size) - sub
        try:
            p_def = np.linalg.solve(mat, rhs)
            if np.any(~np.isfinite(p_def)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            p_def = _picard_subsystem(sub, rhs, pbar[idx])
        p = pbar.copy()
        p[idx] = np.clip(p_def, 0.0, pbar[idx])

    residual = np.abs(p - np.minimum(pi.T @ p + x, pbar)).max()
    if residual > 1e-7 * max(1.0, pbar.max()):
        raise SolverError(f"clearing iteration left residual {residual:.3e}")
    defaults = p < pbar - DEFAULT_TOL
    return ClearingResult(p=p, defaults=defaults, iterations=rounds,
                          total_payment=float(p.sum()))


def _picard_subsystem(sub: np.ndarray, rhs: np.ndarray, cap: np.ndarray) -> np.ndarray:
    """Capped affine iteration fallback for singular defaulter subsystems."""
    p = cap.copy()
    for _ in range(200 * max(cap.size, 1)):
        nxt = np.minimum(sub @ p + rhs, cap)
        if np.abs(nxt - p).max() <= _FP_TOL:
            return nxt
        p = nxt
    return p


def clearing_lp(net: FinancialNetwork, x: np.ndarray,
                f_weights: np.ndarray | None = None) -> ClearingResult:
    """Clearing vector from the payment-maximization LP."""
    x = _check_nonnegative(x)
    pi = np.asarray(net.pi, dtype=float)
    pbar = np.asarray(net.pbar, dtype=float)
    d = net.d
    if f_weights is None:
        f_weights = np.ones(d)
    f_weights = np.asarray(f_weights, dtype=float)
    if np.any(f_weights <= 0):
        raise ValidationError("objective weights must be strictly positive")

    lp = LinearProgram(
        c=f_weights,
        a_ub=np.eye(d) - pi.T,
        b_ub=x,
        lower=np.zeros(d),
        upper=pbar.copy(),
        sense="max",
    )
    res = solve_lp(lp)
    if res.status != "optimal":
        raise SolverError(f"clearing LP returned status {res.status}")
    p = np.clip(res.x, 0.0, pbar)
    defaults = p < pbar - DEFAULT_TOL
    return ClearingResult(p=p, defaults=defaults, iterations=res.iterations,
                          total_payment=float(p.sum()))


def aggregate_en(net: FinancialNetwork, x: np.ndarray) -> float:
    """Total payment of the maximal clearing vector; -inf off the domain."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        return -np.inf
    return clearing_fixed_point(net, x).total_payment


def aggregate_en_many(net: FinancialNetwork, xs: np.ndarray) -> np.ndarray:
    """Aggregate payments for a batch of scenarios (rows of xs).

    Rows with a negative entry map to -inf.  Fully solvent scenarios are
    resolved without iteration: everyone pays in full as soon as
    x >= pbar - pi^T pbar componentwise.  The rest run a batched capped
    iteration from pbar; since those iterates stay above the maximal
    clearing vector, every bank they show short is a certified defaulter,
    so one exact defaulter-subsystem solve (batched per default pattern)
    finishes each row, with the scalar engine as the fallback.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2:
        raise ValidationError("expected an N x d scenario matrix")
    pi = np.asarray(net.pi, dtype=float)
    pbar = np.asarray(net.pbar, dtype=float)
    deficit = pbar - pi.T @ pbar
    out = np.empty(xs.shape[0])
    full = float(pbar.sum())
    solvent = np.all(xs >= deficit, axis=1)
    negative = np.any(xs < 0, axis=1)
    out[solvent] = full
    out[negative] = -np.inf
    rows = np.flatnonzero(~solvent & ~negative)
    if rows.size == 0:
        return out

    x_sub = xs[rows]
    p = np.broadcast_to(pbar, x_sub.shape).copy()
    scale = max(1.0, float(pbar.max()))
    for _ in range(50):
        nxt = np.minimum(x_sub + p @ pi, pbar)
        if np.abs(nxt - p).max() <= 1e-13 * scale:
            p = nxt
            break
        p = nxt

    patterns: dict[tuple, list[int]] = {}
    for k in range(rows.size):
        key = tuple(np.flatnonzero(p[k] < pbar - DEFAULT_TOL))
        patterns.setdefault(key, []).append(k)

    for key, members in patterns.items():
        idx = np.array(key, dtype=int)
        sub_rows = np.array(members, dtype=int)
        if idx.size == 0:
            out[rows[sub_rows]] = full
            continue
        keep = np.setdiff1d(np.arange(net.d), idx)
        mat = np.eye(idx.size) - pi[np.ix_(idx, idx)].T
        inflow_from_solvent = pi[np.ix_(keep, idx)].T @ pbar[keep]
        rhs = x_sub[sub_rows][:, idx] + inflow_from_solvent
        try:
            p_def = np.linalg.solve(mat, rhs.T).T
        except np.linalg.LinAlgError:
            p_def = None
        handled = np.zeros(sub_rows.size, dtype=bool)
        if p_def is not None:
            # accept rows where the seeded default set is already complete
            trial = np.broadcast_to(pbar, (sub_rows.size, net.d)).copy()
            trial[:, idx] = p_def
            inflow = x_sub[sub_rows] + trial @ pi
            good = (
                (p_def >= -1e-9).all(axis=1)
                & (p_def <= pbar[idx] + 1e-9).all(axis=1)
                & (trial <= inflow + DEFAULT_TOL).all(axis=1)
            )
            out[rows[sub_rows[good]]] = trial[good].sum(axis=1)
            handled = good
        for k in sub_rows[~handled]:
            out[rows[k]] = clearing_fixed_point(net, x_sub[k]).total_payment
    return out


def en_supergradient(net: FinancialNetwork, x: np.ndarray) -> np.ndarray:
    """A supergradient of the aggregation function at x >= 0.

    The dual of the payment LP prices the limited-liability rows; any optimal
    row dual mu satisfies aggregate(x') <= aggregate(x) + mu.(x' - x) for all
    x' >= 0.  Degenerate optima may make mu nonunique; any vertex dual works.
    """
    x = _check_nonnegative(x)
    pi = np.asarray(net.pi, dtype=float)
    pbar = np.asarray(net.pbar, dtype=float)
    d = net.d
    lp = LinearProgram(
        c=np.ones(d),
        a_ub=np.eye(d) - pi.T,
        b_ub=x,
        lower=np.zeros(d),
        upper=pbar.copy(),
        sense="max",
    )
    res = solve_lp(lp)
    if res.status != "optimal":
        raise SolverError(f"clearing dual solve returned status {res.status}")
    mu = np.asarray(res.duals_ub, dtype=float)
    if mu.min() < -1e-7:
        raise SolverError("clearing dual has a negative multiplier")
    return np.maximum(mu, 0.0)


def enumerate_clearing_vectors(
    net: FinancialNetwork, x: np.ndarray, max_dim: int = 12
) -> list[ClearingPolytope]:
    """All clearing vectors as a union of polytopes, one per default pattern.

    For each binary pattern y the constraint system couples the limited
    liability rows with p >= pbar*y and p >= pi^T p + x - Q*y, where
    Q = max_i((pi^T pbar)_i + x_i) is the tightest valid big constant.
    Feasible systems are returned in H-representation; equality rows restate
    the constraints forced tight by the pattern (full payment where y_i = 1,
    exact pass-through where y_i = 0).
    """
    x = _check_nonnegative(x)
    d = net.d
    if d > max_dim:
        raise CapacityError(f"enumeration over 2^{d} patterns exceeds the limit {max_dim}")
    pi = np.asarray(net.pi, dtype=float)
    pbar = np.asarray(net.pbar, dtype=float)
    eye = np.eye(d)
    flow = eye - pi.T
    q = float(np.max(pi.T @ pbar + x))

    out: list[ClearingPolytope] = []
    for mask in range(2 ** d):
        y = np.array([(mask >> i) & 1 for i in range(d)], dtype=float)
        # raw inequalities: flow p <= x ; -p <= -pbar*y ; -flow p <= Q*y - x
        a_ub = np.vstack([flow, -eye, -flow])
        b_ub = np.concatenate([x, -pbar * y, q * y - x])
        lo = np.zeros(d)
        feasible = solve_lp(LinearProgram(
            c=np.zeros(d), a_ub=a_ub, b_ub=b_ub, lower=lo, upper=pbar.copy()
        ))
        if feasible.status != "optimal":
            continue
        eq_rows = []
        eq_rhs = []
        for i in range(d):
            if y[i] == 1.0:
                row = np.zeros(d)
                row[i] = 1.0
                eq_rows.append(row)
                eq_rhs.append(pbar[i])
            else:
                eq_rows.append(flow[i])
                eq_rhs.append(x[i])
        out.append(ClearingPolytope(
            y=y.astype(int),
            a_eq=np.vstack(eq_rows),
            b_eq=np.asarray(eq_rhs),
            a_ub=a_ub,
            b_ub=b_ub,
        ))
    return out


def polytope_contains(poly: ClearingPolytope, p: np.ndarray, pbar: np.ndarray,
                      tol: float = 1e-6) -> bool:
    """Membership of p in the polytope (bounds included), up to tol."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol) or np.any(p > pbar + tol):
        return False
    if np.any(poly.a_ub @ p > poly.b_ub + tol):
        return False
    return bool(np.all(np.abs(poly.a_eq @ p - poly.b_eq) <= tol))
