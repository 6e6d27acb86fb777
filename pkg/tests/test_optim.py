import numpy as np
import pytest

import sysvar as sv
from sysvar.optim import LinearProgram, dual_objective, feasible_point, min_norm_qp, solve_lp
from sysvar.util import CapacityError, ValidationError, required_hits
from conftest import (
    exp_scenarios,
    random_network,
    ring2,
    subset_oracle_weighted,
    two_group_split,
)


class TestSolveLp:
    def test_single_binding_constraint(self):
        res = solve_lp(LinearProgram(
            c=np.array([1.0]), a_ub=np.array([[1.0]]), b_ub=np.array([3.0]),
            lower=np.array([0.0]), upper=np.array([10.0]), sense="max"))
        assert res.status == "optimal"
        assert res.x[0] == pytest.approx(3.0)
        assert res.objective == pytest.approx(3.0)

    def test_infeasible_and_unbounded(self):
        infeasible = solve_lp(LinearProgram(
            c=np.array([1.0]), a_ub=np.array([[1.0]]), b_ub=np.array([-1.0]),
            lower=np.array([0.0]), upper=np.array([10.0])))
        assert infeasible.status == "infeasible"
        unbounded = solve_lp(LinearProgram(
            c=np.array([1.0]), lower=np.array([0.0]), upper=np.array([np.inf]),
            sense="max"))
        assert unbounded.status == "unbounded"

    def test_clearing_lp_value(self):
        net = ring2([2.0, 2.0])
        res = solve_lp(LinearProgram(
            c=np.ones(2), a_ub=np.eye(2) - net.pi.T, b_ub=np.array([1.0, 0.0]),
            lower=np.zeros(2), upper=net.pbar.copy(), sense="max"))
        assert res.objective == pytest.approx(4.0)

    def test_equality_rows(self):
        res = solve_lp(LinearProgram(
            c=np.array([1.0, 2.0]),
            a_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]),
            lower=np.zeros(2), upper=np.ones(2)))
        assert res.status == "optimal"
        assert res.objective == pytest.approx(1.0)
        assert res.x[0] == pytest.approx(1.0)

    def test_strong_duality_on_random_programs(self, rng):
        solved = 0
        for _ in range(200):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, 9))
            lp = LinearProgram(
                c=rng.normal(size=n),
                a_ub=rng.normal(size=(m, n)),
                b_ub=rng.normal(size=m) + 1.0,
                lower=np.where(rng.random(n) < 0.8, -2 * rng.random(n), -np.inf),
                upper=np.where(rng.random(n) < 0.8, 2 * rng.random(n), np.inf),
                sense="min" if rng.random() < 0.5 else "max",
            )
            res = solve_lp(lp)
            if res.status != "optimal":
                continue
            solved += 1
            assert abs(res.objective - dual_objective(lp, res)) <= 1e-6
        assert solved > 100

    def test_feasible_point_helper(self):
        x = feasible_point(np.array([[1.0, 1.0]]), np.array([1.0]),
                           np.zeros(2), np.ones(2))
        assert x is not None and x.sum() <= 1.0 + 1e-9
        assert feasible_point(np.array([[1.0]]), np.array([-1.0]),
                              np.zeros(1), np.ones(1)) is None

    def test_matches_reference_solver(self, rng):
        # cross-check objective values and statuses against an unrelated
        # implementation on random boxes, inequalities, and equalities
        from scipy.optimize import linprog

        agreements = 0
        for _ in range(300):
            n = int(rng.integers(2, 10))
            m = int(rng.integers(1, 10))
            use_eq = rng.random() < 0.3
            lower = np.where(rng.random(n) < 0.85, -2 * rng.random(n), -np.inf)
            upper = np.where(rng.random(n) < 0.85, 2 * rng.random(n), np.inf)
            upper = np.maximum(upper, lower)
            lp = LinearProgram(
                c=rng.normal(size=n),
                a_ub=rng.normal(size=(m, n)),
                b_ub=rng.normal(size=m) + 0.5,
                a_eq=rng.normal(size=(1, n)) if use_eq else None,
                b_eq=rng.normal(size=1) if use_eq else None,
                lower=lower,
                upper=upper,
            )
            res = solve_lp(lp)
            ref = linprog(
                lp.c, A_ub=lp.a_ub, b_ub=lp.b_ub,
                A_eq=lp.a_eq, b_eq=lp.b_eq,
                bounds=list(zip(lower, upper)), method="highs")
            ref_status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(ref.status)
            if ref_status is None:
                continue
            assert res.status == ref_status
            if ref_status == "optimal":
                assert res.objective == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)
            agreements += 1
        assert agreements > 250


class TestMinNormQp:
    def test_interior_point_is_fixed(self):
        res = min_norm_qp(np.array([0.2, 0.3]), None, None,
                          np.zeros(2), np.ones(2))
        assert res.distance == 0.0
        assert np.allclose(res.z, [0.2, 0.3])

    def test_orthant_corner(self):
        res = min_norm_qp(np.array([0.0, 0.0]),
                          np.array([[-1.0, 0.0], [0.0, -1.0]]),
                          np.array([-1.0, -1.0]),
                          np.array([-5.0, -5.0]), np.array([5.0, 5.0]))
        assert np.allclose(res.z, [1.0, 1.0])
        assert res.distance == pytest.approx(np.sqrt(2.0))

    def test_capacity_limit(self):
        with pytest.raises(CapacityError):
            min_norm_qp(np.zeros(5), None, None, np.zeros(5), np.ones(5))

    def test_matches_dense_grid_scan(self, rng):
        for _ in range(5):
            a = rng.normal(size=(10, 2))
            b = a @ rng.uniform(0.2, 0.8, size=2) + rng.uniform(0.05, 0.3, size=10)
            lo, hi = np.array([-1.0, -1.0]), np.array([1.5, 1.5])
            v = rng.uniform(-1.0, 1.5, size=2)
            res = min_norm_qp(v, a, b, lo, hi)
            step = 1e-3
            xs = np.arange(lo[0], hi[0] + step, step)
            ys = np.arange(lo[1], hi[1] + step, step)
            best = np.inf
            for start in range(0, len(xs), 300):
                zz = np.stack(np.meshgrid(xs[start:start + 300], ys, indexing="ij"),
                              -1).reshape(-1, 2)
                ok = (zz @ a.T <= b + 1e-12).all(axis=1)
                if ok.any():
                    best = min(best, float(np.linalg.norm(zz[ok] - v, axis=1).min()))
            assert res.distance == pytest.approx(best, abs=2e-3)

    def test_infeasible_region_raises(self):
        with pytest.raises(ValidationError):
            min_norm_qp(np.zeros(2),
                        np.array([[1.0, 0.0], [-1.0, 0.0]]),
                        np.array([-1.0, -1.0]),
                        np.full(2, -np.inf), np.full(2, np.inf))


def toy_model(rng, n_scen=4, lam=0.25, quadratic=False):
    net = random_network(rng, 4, pbar_range=(0.5, 2.0))
    grouping = two_group_split(rng, 4)
    scen = exp_scenarios(rng, n_scen, 4, 0.3)
    box = sv.z_bounds(net, grouping, scen)
    kwargs = dict(
        net=net, grouping=grouping, scenarios=scen,
        alpha=0.85 * net.total_obligations, lam=lam,
        z_lower=box.lo, z_upper=box.hi,
    )
    if quadratic:
        kwargs["center"] = box.lo - 0.5
    else:
        kwargs["weights"] = np.array([1.0, 1.0])
    return sv.ScenarioMip(**kwargs), box


class TestBranchAndBound:
    def test_single_scenario_reduces_to_lp(self, rng):
        net = random_network(rng, 3)
        grouping = two_group_split(rng, 3)
        scen = exp_scenarios(rng, 1, 3, 0.3)
        box = sv.z_bounds(net, grouping, scen)
        spec_alpha = 0.8 * net.total_obligations
        model = sv.ScenarioMip(
            net=net, grouping=grouping, scenarios=scen, alpha=spec_alpha,
            lam=0.3, z_lower=box.lo, z_upper=box.hi,
            weights=np.array([1.0, 1.0]))
        sol = sv.branch_and_bound(model)
        oracle = subset_oracle_weighted(
            net, grouping, scen, sv.RiskSpec(alpha=spec_alpha, lam=0.3),
            np.array([1.0, 1.0]), box)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(oracle, abs=1e-7)
        assert sol.y.sum() == 1

    def test_matches_subset_enumeration(self, rng):
        for _ in range(8):
            model, box = toy_model(rng, n_scen=int(rng.integers(4, 8)),
                                   lam=float(rng.uniform(0.2, 0.5)))
            sol = sv.branch_and_bound(model)
            spec = sv.RiskSpec(alpha=model.alpha, lam=model.lam)
            oracle = subset_oracle_weighted(
                model.net, model.grouping, model.scenarios, spec,
                model.weights, box)
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(oracle, abs=1e-6)
            assert sol.gap <= 1e-6

    def test_vacuous_chance_constraint(self, rng):
        lam = 1.0 - 1e-12
        model, box = toy_model(rng, n_scen=3, lam=lam)
        assert required_hits(3, lam) == 0
        sol = sv.branch_and_bound(model)
        assert sol.objective == pytest.approx(float(model.weights @ box.lo))

    def test_infeasible_when_alpha_exceeds_obligations(self, rng):
        model, _ = toy_model(rng)
        bad = sv.ScenarioMip(
            net=model.net, grouping=model.grouping, scenarios=model.scenarios,
            alpha=model.net.total_obligations + 1e-3, lam=model.lam,
            z_lower=model.z_lower, z_upper=model.z_upper,
            weights=model.weights)
        assert sv.branch_and_bound(bad).status == "infeasible"

    def test_incumbent_trace_monotone_and_deterministic(self, rng):
        model, _ = toy_model(rng, n_scen=6, lam=0.4)
        sol1 = sv.branch_and_bound(model)
        sol2 = sv.branch_and_bound(model)
        values = [obj for _, obj in sol1.incumbent_trace]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert sol1.objective == sol2.objective
        assert np.array_equal(sol1.z, sol2.z)
        assert sol1.nodes == sol2.nodes

    def test_solution_passes_membership(self, rng):
        for quadratic in (False, True):
            model, _ = toy_model(rng, n_scen=5, lam=0.35, quadratic=quadratic)
            sol = sv.branch_and_bound(model)
            spec = sv.RiskSpec(alpha=model.alpha, lam=model.lam)
            assert sv.membership(model.net, model.grouping, model.scenarios,
                                 spec, sol.z).accepted

    def test_node_budget_flagged(self, rng):
        model, _ = toy_model(rng, n_scen=8, lam=0.5)
        sol = sv.branch_and_bound(model, node_budget=1)
        assert sol.status in ("optimal", "budget_exhausted")
        if sol.status == "budget_exhausted":
            assert np.isfinite(sol.objective)

    def test_matches_reference_milp_at_scale(self, rng):
        # independent mixed-integer reference on instances too large for
        # subset enumeration
        from scipy.optimize import milp, LinearConstraint, Bounds

        for _ in range(5):
            d = int(rng.integers(5, 9))
            n = int(rng.integers(15, 25))
            net = random_network(rng, d, pbar_range=(0.5, 2.0))
            grouping = two_group_split(rng, d)
            scen = exp_scenarios(rng, n, d, 0.3)
            spec = sv.RiskSpec(alpha=float(rng.uniform(0.75, 0.92)) * net.total_obligations,
                               lam=float(rng.uniform(0.2, 0.5)))
            w = rng.uniform(0.1, 1.0, size=2)
            box = sv.z_bounds(net, grouping, scen)
            mine = sv.weighted_sum(net, grouping, scen, spec, w)

            g = grouping.g
            ncols = g + n * d + n
            y0 = g + n * d
            c = np.zeros(ncols)
            c[:g] = w
            flow = np.eye(d) - net.pi.T
            assignment = np.asarray(grouping.assignment)
            rows, lbs, ubs = [], [], []
            for k in range(n):
                a = np.zeros((d, ncols))
                a[:, g + k * d: g + (k + 1) * d] = flow
                a[np.arange(d), assignment] = -1.0
                rows.append(a)
                lbs.append(np.full(d, -np.inf))
                ubs.append(scen.values[k])
                agg = np.zeros(ncols)
                agg[g + k * d: g + (k + 1) * d] = 1.0
                agg[y0 + k] = -spec.alpha
                rows.append(agg[None, :])
                lbs.append(np.zeros(1))
                ubs.append(np.full(1, np.inf))
            chance = np.zeros(ncols)
            chance[y0:] = 1.0
            rows.append(chance[None, :])
            from sysvar.util import required_hits
            lbs.append(np.full(1, float(required_hits(n, spec.lam))))
            ubs.append(np.full(1, np.inf))
            lower = np.concatenate([box.lo, np.zeros(n * d), np.zeros(n)])
            upper = np.concatenate([box.hi, np.tile(net.pbar, n), np.ones(n)])
            integrality = np.zeros(ncols)
            integrality[y0:] = 1
            ref = milp(
                c,
                constraints=LinearConstraint(np.vstack(rows),
                                             np.concatenate(lbs),
                                             np.concatenate(ubs)),
                bounds=Bounds(lower, upper),
                integrality=integrality,
            )
            assert ref.status == 0
            assert mine.value == pytest.approx(ref.fun, abs=5e-6)
