import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_merton import (
    ContinuousProfile,
    DomainError,
    ExponentialUtility,
    LogUtility,
    PowerUtility,
    Scenario,
    UncertaintySchedule,
    ValidationError,
    continuous_limit_value,
    make_cell,
    mesh_refinement_series,
    solve,
    strategy_at,
    value_at,
)

from conftest import UTILITIES, canonical_scenario, three_cell_scenario

# Brute-force saddle values on the canonical cell: pi on [-2, 2] step 1e-3,
# theta over the four (mu, Sigma) extremes, inline exact expected utilities.
GRID_ORACLE = {
    "log": (0.556, 0.013888880000000003),
    "power": (1.111, 1.0139857874507474),
    "exponential": (0.556, -0.36280532621198747),
}


def _grid_saddle(kind):
    pis = np.arange(-2000, 2001) * 1e-3
    thetas = [(m, s) for m in (0.05, 0.10) for s in (0.04, 0.09)]
    if kind == "log":
        f = lambda p, m, s: p * m - 0.5 * p * p * s
    elif kind == "power":
        f = lambda p, m, s: np.exp(0.5 * (p * m - 0.5 * p * p * s) + 0.125 * p * p * s)
    else:
        f = lambda p, m, s: -np.exp(-1.0 - p * m + 0.5 * p * p * s)
    worst = np.min([f(pis, m, s) for m, s in thetas], axis=0)
    i = int(np.argmax(worst))
    return pis[i], worst[i]


@pytest.mark.parametrize("kind", list(GRID_ORACLE))
def test_grid_oracle_frozen(kind):
    pi, val = _grid_saddle(kind)
    assert pi == pytest.approx(GRID_ORACLE[kind][0], abs=1e-12)
    assert val == pytest.approx(GRID_ORACLE[kind][1], rel=1e-12)


class TestSolve:
    def test_log_canonical(self):
        sol = solve(canonical_scenario(LogUtility()))
        c = sol.cells[0]
        assert c.strategy[0] == pytest.approx(0.05 / 0.09, rel=1e-14)
        assert c.rate == pytest.approx(0.0025 / 0.18, rel=1e-14)
        assert abs(c.strategy[0] - GRID_ORACLE["log"][0]) <= 1e-3
        assert value_at(sol, 0.0, 1.0) == pytest.approx(GRID_ORACLE["log"][1], abs=1e-7)
        np.testing.assert_array_equal(c.mu_star, [0.05])
        np.testing.assert_array_equal(c.sigma_star, [[0.09]])

    def test_power_canonical(self):
        sol = solve(canonical_scenario(PowerUtility(0.5)))
        c = sol.cells[0]
        assert c.strategy[0] == pytest.approx(1.1111111111111112, rel=1e-14)
        assert c.rate == pytest.approx(0.5 * 0.0025 / (2 * 0.5 * 0.09), rel=1e-14)
        assert abs(c.strategy[0] - GRID_ORACLE["power"][0]) <= 1e-3
        assert value_at(sol, 0.0, 1.0) == pytest.approx(GRID_ORACLE["power"][1], rel=1e-9)

    def test_exponential_canonical(self):
        sol = solve(canonical_scenario(ExponentialUtility(1.0)))
        assert sol.cells[0].strategy[0] == pytest.approx(0.5555555555555556, rel=1e-14)
        assert value_at(sol, 0.0, 1.0) == pytest.approx(-math.exp(-1) * math.exp(-0.0025 / 0.18), rel=1e-14)
        assert value_at(sol, 0.0, 1.0) == pytest.approx(GRID_ORACLE["exponential"][1], rel=1e-8)

    def test_rate_inside_drift_set(self, utility):
        cell = make_cell(0, 1, ([-0.02, 0.0], [0.05, 0.1]), 0.01, 0.04)
        sol = solve(Scenario(2, 0.03, 1.0, utility, UncertaintySchedule((cell,))))
        np.testing.assert_array_equal(sol.cells[0].strategy, [0.0, 0.0])
        assert sol.cells[0].rate == 0.0

    def test_invalid_scenario_lists_violations(self):
        bad = Scenario(1, 0.0, -1.0, LogUtility(), UncertaintySchedule((make_cell(0, 1, ([0.0], [0.1]), 0.0, 0.04),)))
        with pytest.raises(ValidationError) as info:
            solve(bad)
        assert {v.invariant for v in info.value.violations} == {"positivity", "x0"}

    def test_power_gamma_bounds(self):
        with pytest.raises(ValueError):
            PowerUtility(1.0)
        with pytest.raises(ValueError):
            ExponentialUtility(0.0)


class TestValueAt:
    def test_terminal_condition(self, canonical, rng):
        xs = np.exp(rng.uniform(-5, 5, 1000))
        np.testing.assert_allclose(value_at(canonical, 1.0, xs), canonical.utility(xs), rtol=1e-12, atol=0)

    def test_log_value(self):
        sol = solve(canonical_scenario(LogUtility()))
        assert value_at(sol, 0.0, 1.0) == pytest.approx(0.013888888888888889, rel=1e-14)
        assert value_at(sol, 0.25, 2.0) == pytest.approx(math.log(2.0) + 0.75 * 0.0025 / 0.18, rel=1e-14)

    @pytest.mark.parametrize("t, x", [(-0.1, 1.0), (1.1, 1.0), (0.5, 0.0), (0.5, -2.0)])
    def test_domain(self, canonical, t, x):
        with pytest.raises(DomainError):
            value_at(canonical, t, x)

    def test_multi_cell_closed_form(self, utility):
        sc = three_cell_scenario(utility)
        sol = solve(sc)
        x0 = sc.x0
        total = 0.0
        for cell in sc.schedule:
            # independent restatement of the per-cell rate
            mu = np.clip(sc.r, cell.drift.lower[0], cell.drift.upper[0])
            e2 = (mu - sc.r) ** 2
            c = cell.vol.eig_max
            g = utility.gamma if isinstance(utility, PowerUtility) else None
            rate = g * e2 / (2 * (1 - g) * c) if g is not None else e2 / (2 * c)
            total += rate * (cell.t_end - cell.t_start)
        if isinstance(utility, LogUtility):
            expected = math.log(x0) + total
        elif isinstance(utility, PowerUtility):
            expected = x0**0.5 * math.exp(total)
        else:
            expected = -math.exp(-x0) * math.exp(-total)
        assert value_at(sol, 0.0, x0) == pytest.approx(expected, rel=1e-12)


class TestStrategyAt:
    def test_log_cash_amount(self):
        sol = solve(canonical_scenario(LogUtility()))
        np.testing.assert_allclose(strategy_at(sol, 0.3, 2.0), [2 * 0.05 / 0.09], rtol=1e-14)

    def test_exponential_independent_of_wealth(self):
        sol = solve(canonical_scenario(ExponentialUtility(1.0)))
        for x in (0.1, 1.0, 50.0):
            np.testing.assert_allclose(strategy_at(sol, 0.3, x), [0.05 / 0.09], rtol=1e-14)

    def test_zero_excess(self, utility):
        sc = Scenario(1, 0.05, 1.0, utility, UncertaintySchedule((make_cell(0, 1, ([0.0], [0.1]), 0.01, 0.04),)))
        np.testing.assert_array_equal(strategy_at(solve(sc), 0.5, 3.0), [0.0])

    def test_cell_membership(self):
        sol = solve(three_cell_scenario(LogUtility()))
        assert strategy_at(sol, 0.4, 1.0)[0] == sol.cells[1].strategy[0]
        assert strategy_at(sol, np.nextafter(0.4, 0), 1.0)[0] == sol.cells[0].strategy[0]

    def test_terminal_time_rejected(self, canonical):
        with pytest.raises(DomainError):
            strategy_at(canonical, 1.0, 1.0)


class TestProperties:
    @settings(max_examples=50, deadline=None)
    @given(
        kind=st.sampled_from(list(UTILITIES)),
        split=st.floats(0.01, 0.99),
        t=st.floats(0.0, 1.99),
        x=st.floats(0.05, 20.0),
    )
    def test_time_additivity(self, kind, split, t, x):
        sc = three_cell_scenario(UTILITIES[kind])
        sol = solve(sc)
        idx = 1
        cell = sc.schedule[idx]
        at = cell.t_start + split * (cell.t_end - cell.t_start)
        split_sc = Scenario(sc.d, sc.r, sc.x0, sc.utility, sc.schedule.split(idx, at))
        sol2 = solve(split_sc)
        assert value_at(sol2, t, x) == pytest.approx(value_at(sol, t, x), rel=1e-12, abs=1e-15)
        np.testing.assert_allclose(strategy_at(sol2, t, x), strategy_at(sol, t, x), rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(
        kind=st.sampled_from(list(UTILITIES)),
        t=st.floats(0.0, 2.0),
        xs=st.lists(st.floats(0.01, 50.0), min_size=3, max_size=3, unique=True),
    )
    def test_increasing_midpoint_concave(self, kind, t, xs):
        x1, x2, x3 = sorted(xs)
        sol = solve(three_cell_scenario(UTILITIES[kind]))
        v1, v2, v3 = (value_at(sol, t, x) for x in (x1, x2, x3))
        assert v1 < v2 < v3 or (x2 - x1 < 1e-9 or x3 - x2 < 1e-9)
        mid = value_at(sol, t, 0.5 * (x1 + x3))
        assert mid >= 0.5 * (v1 + v3) - 1e-13 * max(1.0, abs(mid))

    def test_power_to_log_limit(self):
        log_pi = solve(three_cell_scenario(LogUtility())).cells
        pow_pi = solve(three_cell_scenario(PowerUtility(1e-6))).cells
        for a, b in zip(log_pi, pow_pi):
            np.testing.assert_allclose(b.strategy, a.strategy, rtol=1e-5)

    def test_strategy_scale_invariance(self, utility):
        sol = solve(three_cell_scenario(utility))
        for x in (0.3, 7.0):
            amount = strategy_at(sol, 0.5, x)
            if isinstance(utility, ExponentialUtility):
                np.testing.assert_array_equal(amount, sol.cells[1].strategy)
            else:
                np.testing.assert_allclose(amount / x, sol.cells[1].strategy, rtol=1e-15)


class TestContinuousLimit:
    def test_constant_profile_matches_one_cell(self, utility):
        sol = solve(canonical_scenario(utility))
        prof = ContinuousProfile(1.0, 0.0, utility, lambda t: [0.05], lambda t: 0.09)
        lim = continuous_limit_value(prof, 0.0, 1.0)
        assert lim.value == pytest.approx(value_at(sol, 0.0, 1.0), abs=1e-10)
        assert lim.quadrature_error < 1e-14

    def test_zero_excess_gives_utility(self, utility):
        prof = ContinuousProfile(2.0, 0.03, utility, lambda t: [0.03, 0.03], lambda t: 0.04 + t)
        assert continuous_limit_value(prof, 0.0, 1.7).value == pytest.approx(float(utility(1.7)), rel=1e-15)

    def test_piecewise_matches_cells(self, utility):
        sc = three_cell_scenario(utility)
        sol = solve(sc)
        prof = ContinuousProfile(
            sc.horizon,
            sc.r,
            utility,
            lambda t: sol.cell_at(t).mu_star,
            lambda t: sol.cell_at(t).eig_max,
            breakpoints=[c.t_start for c in sc.schedule][1:],
        )
        for t in (0.0, 0.2, 0.4, 1.5):
            assert continuous_limit_value(prof, t, 1.3).value == pytest.approx(value_at(sol, t, 1.3), abs=1e-10)

    def test_smooth_profile_against_exact_integral(self):
        prof = ContinuousProfile(1.0, 0.0, LogUtility(), lambda t: [0.05 + 0.05 * t], lambda t: 0.09)
        # exact: int_0^1 (0.05 (1 + t))^2 / 0.18 dt = 0.0025 * 7/3 / 0.18
        lim = continuous_limit_value(prof, 0.0, 1.0)
        assert lim.value == pytest.approx(0.0025 * 7 / 3 / 0.18, abs=1e-14)

    def test_nonfinite_integrand(self):
        prof = ContinuousProfile(1.0, 0.0, LogUtility(), lambda t: [0.05], lambda t: 0.0)
        with pytest.raises(DomainError):
            continuous_limit_value(prof, 0.0, 1.0)


class TestMeshRefinement:
    def test_constant_profile_all_equal(self):
        prof = ContinuousProfile(1.0, 0.0, LogUtility(), lambda t: [0.05], lambda t: 0.09)
        vals = [v for _, v in mesh_refinement_series(prof, 4, 1.0)]
        np.testing.assert_allclose(vals, vals[0], rtol=1e-14)

    def test_k0_is_base(self):
        prof = ContinuousProfile(1.0, 0.0, LogUtility(), lambda t: [0.05 + 0.05 * t], lambda t: 0.09)
        [(mesh, v)] = mesh_refinement_series(prof, 0, 1.0)
        assert mesh == 1.0 and v == pytest.approx(0.0025 / 0.18, rel=1e-14)

    def test_linear_profile_error_halves(self):
        prof = ContinuousProfile(1.0, 0.0, LogUtility(), lambda t: [0.05 + 0.05 * t], lambda t: 0.09)
        exact = continuous_limit_value(prof, 0.0, 1.0).value
        errs = [abs(v - exact) for _, v in mesh_refinement_series(prof, 6, 1.0, base_cells=2)]
        ratios = np.array(errs[1:]) / np.array(errs[:-1])
        assert np.all(np.abs(ratios - 0.5) <= 0.1)
