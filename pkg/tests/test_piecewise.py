"""Tests for the piecewise carrier, singular quadrature and the state equation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from rankrace.errors import InvalidGrid, InvalidParameter
from rankrace.piecewise import (
    Affine,
    Constant,
    PiecewiseFn,
    Power,
    PowerCombo,
    Tabulated,
    constant_fn,
    integrate_sqrt_weight,
    quantile,
    solve_state_ode,
    step_fn,
)

SQ5 = math.sqrt(0.5)


def unif_cutoff_effort(B=1.0, c=1.0, alpha=0.5):
    """Equilibrium effort of the flat reward paying B/alpha to the top alpha ranks."""
    coef = B / (2 * c * alpha) * math.sqrt(1 - alpha)
    return PiecewiseFn(
        (0.0, alpha, 1.0),
        (PowerCombo(((coef, -0.5),)), Constant(0.0)),
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

class TestEval:
    def test_right_closed_at_breakpoint(self):
        f = step_fn([0.0, 0.5, 1.0], [2.0, 0.0])
        assert f.eval(0.5) == 2.0
        assert f.eval(0.5 + 1e-12) == 0.0

    def test_power(self):
        f = PiecewiseFn((0.0, 1.0), (Power(1.0, 1.0),))
        assert f.eval(0.25) == pytest.approx(0.75, abs=1e-15)

    def test_tabulated_interpolates(self):
        f = PiecewiseFn((0.0, 1.0), (Tabulated((0.0, 1.0), (3.0, 1.0)),))
        assert f.eval(0.5) == pytest.approx(2.0, abs=1e-15)

    def test_first_piece_covers_zero(self):
        f = step_fn([0.0, 0.3, 1.0], [5.0, 1.0])
        assert f.eval(0.0) == 5.0

    def test_vectorized_matches_scalar(self):
        f = PiecewiseFn(
            (0.0, 0.25, 0.75, 1.0),
            (Affine(1.0, -0.5), Constant(0.875), Power(0.875, 2.0)),
            force=True,
        )
        rr = np.linspace(0, 1, 101)
        assert np.allclose(f.eval(rr), [f.eval(float(r)) for r in rr])

    def test_at_one_override(self):
        f = PiecewiseFn((0.0, 1.0), (Constant(1.0),), at_one=0.0)
        assert f.eval(1.0) == 0.0
        assert f.eval(1.0 - 1e-9) == 1.0

    def test_bad_grids_rejected(self):
        with pytest.raises(InvalidGrid):
            PiecewiseFn((0.0, 0.5), (Constant(1.0),))
        with pytest.raises(InvalidGrid):
            PiecewiseFn((0.0, 0.5, 0.5, 1.0), (Constant(1.0),) * 3)
        with pytest.raises(InvalidGrid):
            PiecewiseFn((0.0, 1.0), (Constant(1.0), Constant(0.0)))

    def test_non_lipschitz_power_rejected_without_force(self):
        with pytest.raises(InvalidParameter):
            PiecewiseFn((0.0, 1.0), (Power(1.0, 0.5),))
        PiecewiseFn((0.0, 1.0), (Power(1.0, 0.5),), force=True)  # boundary case
        PiecewiseFn((0.0, 0.5, 1.0), (Power(1.0, 0.5), Constant(0.0)))  # away from 1


# ---------------------------------------------------------------------------
# weighted quadrature
# ---------------------------------------------------------------------------

def brute_force_sqrt_weight(f, r, delta_floor=1e-13):
    """Oracle: adaptive quadrature of the raw integrand, stopping delta short of
    the singularity and extrapolating delta -> 0 by Richardson on a ladder."""
    deltas = [1e-4, 1e-6, 1e-8, 1e-10, delta_floor]
    vals = []
    for d in deltas:
        pts = [b for b in f.breakpoints if r < b < 1 - d]
        v, _ = quad(lambda y: f.eval(y) / math.sqrt(1 - y), r, 1 - d,
                    points=pts, limit=500)
        # analytic tail bound: f is nearly constant on [1-d, 1]
        tail = 2 * math.sqrt(d) * f.eval(1.0 - d / 2)
        vals.append(v + tail)
    return vals[-1]


class TestSqrtWeight:
    def test_constant(self):
        assert integrate_sqrt_weight(constant_fn(1.0), 0.0) == pytest.approx(2.0, rel=1e-12)
        assert integrate_sqrt_weight(constant_fn(3.0), 0.19) == pytest.approx(
            6.0 * math.sqrt(0.81), rel=1e-12)

    def test_uniform_cutoff(self):
        f = step_fn([0.0, 0.5, 1.0], [2.0, 0.0])
        assert integrate_sqrt_weight(f, 0.0) == pytest.approx(4 * (1 - SQ5), rel=1e-12)

    def test_power(self):
        f = PiecewiseFn((0.0, 1.0), (Power(1.0, 1.0),))
        assert integrate_sqrt_weight(f, 0.0) == pytest.approx(2.0 / 3.0, rel=1e-12)

    @pytest.mark.parametrize("r", [0.0, 0.1, 0.55, 0.9])
    def test_matches_brute_force(self, r):
        f = PiecewiseFn(
            (0.0, 0.3, 0.8, 1.0),
            (Affine(2.0, -1.0), Constant(1.2), Power(1.2 / 0.2 ** 2, 2.0)),
            force=True,
        )
        ours = integrate_sqrt_weight(f, r)
        oracle = brute_force_sqrt_weight(f, r)
        assert ours == pytest.approx(oracle, rel=1e-9)

    @given(
        levels=st.lists(st.floats(0.0, 5.0), min_size=1, max_size=5),
        cuts=st.lists(st.floats(0.05, 0.95), min_size=0, max_size=4),
        r=st.floats(0.0, 0.98),
    )
    @settings(max_examples=25, deadline=None)
    def test_staircase_matches_antiderivative(self, levels, cuts, r):
        grid = sorted(set([0.0, 1.0] + [round(c, 3) for c in cuts]))
        if len(grid) - 1 != len(levels):
            levels = (levels * len(grid))[: len(grid) - 1]
        f = step_fn(grid, levels)
        # exact antiderivative of a step function against the weight
        exact = 0.0
        for lo, hi, piece in f.iter_pieces():
            a, b = max(lo, r), hi
            if a < b:
                exact += piece.a * 2 * (math.sqrt(1 - a) - math.sqrt(1 - b))
        assert integrate_sqrt_weight(f, r) == pytest.approx(exact, rel=1e-10, abs=1e-12)


# ---------------------------------------------------------------------------
# state equation
# ---------------------------------------------------------------------------

class TestStateOde:
    def test_zero_effort_freezes_immediately(self):
        traj = solve_state_ode(constant_fn(0.0), r0=0.3)
        assert traj.frozen_after == 0.0
        assert traj.terminal_state == 0.3
        assert np.all(traj.states == 0.3)

    def test_constant_effort_is_exponential(self):
        traj = solve_state_ode(constant_fn(1.0), target_rank=1 - 1e-6)
        t_half = quantile(traj, 1 - math.exp(-1.0))
        assert t_half == pytest.approx(1.0, rel=1e-7)
        assert traj.state_at(1.0) == pytest.approx(1 - math.exp(-1.0), rel=1e-7)

    def test_uniform_cutoff_closed_form(self):
        traj = solve_state_ode(unif_cutoff_effort())
        t_alpha = 4 * 0.5 * (1 - SQ5) / SQ5
        assert quantile(traj, 0.5) == pytest.approx(t_alpha, rel=1e-8)
        assert traj.frozen_after == pytest.approx(t_alpha, rel=1e-8)
        # rho(t) = 1 - (1 - (sqrt(.5)/2) t)^2: exact at samples, O(dt^2) between
        mask = (traj.times < t_alpha) & (traj.states < 0.5)
        exact = 1 - (1 - (SQ5 / 2) * traj.times[mask]) ** 2
        assert np.max(np.abs(traj.states[mask] - exact)) < 1e-9
        for t in [0.2, 0.5, 0.8]:
            assert traj.state_at(t) == pytest.approx(
                1 - (1 - (SQ5 / 2) * t) ** 2, abs=2e-7)

    def test_quantiles_uniform_cutoff(self):
        traj = solve_state_ode(unif_cutoff_effort())
        assert quantile(traj, 0.25) == pytest.approx(
            4 * 0.5 * (1 - math.sqrt(0.75)) / SQ5, rel=1e-7)
        assert quantile(traj, 0.75) == math.inf

    def test_quantile_at_start_is_zero(self):
        traj = solve_state_ode(constant_fn(1.0), r0=0.3, target_rank=0.9)
        assert quantile(traj, 0.3) == 0.0
        assert quantile(traj, 0.2) == 0.0

    def test_unreachable_target_flagged(self):
        traj = solve_state_ode(unif_cutoff_effort(), target_rank=0.75)
        assert not traj.reached
        assert traj.terminal_state == pytest.approx(0.5, abs=1e-12)

    def test_time_dilation(self):
        base = unif_cutoff_effort()
        slow = base.scaled(1.0 / 3.0)
        t1 = solve_state_ode(base)
        t3 = solve_state_ode(slow)
        for beta in [0.1, 0.33, 0.5]:
            assert quantile(t3, beta) == pytest.approx(3 * quantile(t1, beta), rel=1e-9)

    def test_states_monotone_and_below_one(self):
        traj = solve_state_ode(PiecewiseFn((0.0, 1.0), (Power(2.0, 1.0),)),
                               target_rank=1 - 1e-7)
        assert np.all(np.diff(traj.states) >= 0)
        assert np.all(traj.states < 1.0)
        assert np.all(np.diff(traj.times) > 0)

    def test_residual_consistency(self):
        # Difference quotients between consecutive samples must sit inside the
        # drift's range over the bracket, up to the stated tolerance.
        tol = 1e-4
        eff = unif_cutoff_effort()
        traj = solve_state_ode(eff, tol=1e-10, max_step=tol / 4)
        lam_sup = 1.0  # sup of this effort on [0, 0.5]
        t, s = traj.times, traj.states
        moving = s < 0.5 - 1e-12
        idx = np.nonzero(moving[:-1] & moving[1:])[0]
        quot = (s[idx + 1] - s[idx]) / (t[idx + 1] - t[idx])
        drift_lo = np.minimum(eff.eval(s[idx]) * (1 - s[idx]),
                              eff.eval(s[idx + 1]) * (1 - s[idx + 1]))
        drift_hi = np.maximum(eff.eval(s[idx]) * (1 - s[idx]),
                              eff.eval(s[idx + 1]) * (1 - s[idx + 1]))
        slack = tol * (1 + lam_sup)
        assert np.all(quot >= drift_lo - slack)
        assert np.all(quot <= drift_hi + slack)

    def test_one_sided_quotient_residual(self):
        # With step control tied to the tolerance, the one-sided difference
        # quotient reproduces the drift at the left sample to tol*(1+sup lam).
        tol = 1e-4
        eff = unif_cutoff_effort()
        traj = solve_state_ode(eff, tol=1e-10, max_step=tol / 4)
        t, s = traj.times, traj.states
        moving = s < 0.5 - 1e-12
        idx = np.nonzero(moving[:-1] & moving[1:])[0]
        quot = (s[idx + 1] - s[idx]) / (t[idx + 1] - t[idx])
        resid = np.abs(quot - eff.eval(s[idx]) * (1 - s[idx]))
        assert float(np.max(resid)) <= tol * (1 + 1.0)

    def test_quantile_monotone_in_beta(self):
        traj = solve_state_ode(unif_cutoff_effort())
        betas = np.linspace(0.01, 0.5, 40)
        qs = [quantile(traj, float(b)) for b in betas]
        assert all(a <= b + 1e-12 for a, b in zip(qs, qs[1:]))

    def test_quantile_of_sample_states_below_sample_times(self):
        traj = solve_state_ode(unif_cutoff_effort())
        steps = slice(1, len(traj.states) - 1, max(1, len(traj.states) // 50))
        for st_, tm in zip(traj.states[steps], traj.times[steps]):
            if 0 < st_ < 0.5:
                assert quantile(traj, float(st_)) <= tm + 1e-10


class TestTrajectoryInvariants:
    @given(r0=st.floats(0.0, 0.9), lam0=st.floats(0.05, 4.0))
    @settings(max_examples=20, deadline=None)
    def test_exponential_family(self, r0, lam0):
        traj = solve_state_ode(constant_fn(lam0), r0=r0, target_rank=1 - 1e-6)
        t = 0.7
        expect = 1 - (1 - r0) * math.exp(-lam0 * t)
        assert traj.state_at(t) == pytest.approx(expect, abs=1e-7)
