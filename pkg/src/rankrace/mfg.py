"""Mean-field competition with rank-based rewards.

Agents exert effort to finish a task; the fraction already finished is rho(t).
An agent finishing while the fraction is r receives reward R(r); effort lam
costs c(r) lam^2 per unit time. The symmetric equilibrium is explicit:

    v(r)   = 1/(2 sqrt(1-r)) * integral_r^1 R(y)/sqrt(1-y) dy   (agent value)
    lam(r) = (R(r) - v(r)) / (2 c(r))                            (effort)
    rho'   = lam(rho) (1 - rho)                                  (state)

The value function does not depend on the cost: a dearer effort slows every
agent equally, so ranks and payments are unchanged and only the clock dilates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    InvalidCost,
    InvalidGrid,
    InvalidParameter,
    Negative,
    NotDecreasing,
    NotLeftContinuousAtOne,
)
from .piecewise import (
    Affine,
    Constant,
    PiecewiseFn,
    Power,
    PowerCombo,
    Tabulated,
    Trajectory,
    adaptive_panel_integrals,
    constant_fn,
    quantile as traj_quantile,
    solve_state_ode,
    TOL_ODE,
    TOL_QUAD,
    _integrate_state,
)

# grid controls for tabulated value functions: geometric spacing ratio toward
# each piece's right edge, uniform spacing on the piece touching rank 1
_GEO_RATIO = 2.5e-4
_U_SPACING = 2.4e-4
_JUNCTION_TOL = 1e-11


# ---------------------------------------------------------------------------
# validated wrappers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MFRewardScheme:
    """A nonnegative, non-increasing reward profile, left-continuous at rank 1."""

    fn: PiecewiseFn
    budget: float

    def eval(self, r):
        return self.fn.eval(r)

    def terminal_value(self) -> float:
        return float(self.fn.eval(1.0))


@dataclass(frozen=True)
class MFCost:
    """A strictly positive cost coefficient profile.

    The base model wants a (globally continuous) Lipschitz cost; the staircase
    family uses per-step constants, which is flagged by ``discontinuous``.
    """

    fn: PiecewiseFn
    discontinuous: bool = False

    def eval(self, r):
        return self.fn.eval(r)


@dataclass(frozen=True)
class MFEquilibrium:
    """Solved equilibrium: value and effort profiles plus the state trajectory."""

    value: PiecewiseFn
    effort: PiecewiseFn
    trajectory: Trajectory
    reward: MFRewardScheme
    cost: MFCost
    quantile_fn: Optional[Callable[[float], float]] = None
    flat_rank: float = 1.0  # rank from which the reward equals its terminal value

    def quantile(self, beta: float) -> float:
        """Time until a beta fraction has finished (analytic when available)."""
        if self.quantile_fn is not None:
            return float(self.quantile_fn(beta))
        return traj_quantile(self.trajectory, beta)


def validate_reward(fn: PiecewiseFn) -> MFRewardScheme:
    """Check the standing assumptions on a reward profile.

    Raises Negative, NotDecreasing, or NotLeftContinuousAtOne. The last one is
    the no-equilibrium pathology: paying less at rank exactly 1 than the limit
    of late ranks leaves the agents' supremum unattained.
    """
    scale = max(1.0, abs(fn.max_value()))
    if fn.min_value() < -1e-12 * scale:
        raise Negative("reward scheme must be nonnegative")
    b = fn.breakpoints
    for j, (lo, hi, piece) in enumerate(fn.iter_pieces()):
        if not piece.nonincreasing_on(lo, hi):
            raise NotDecreasing(f"reward increases inside [{lo:g}, {hi:g}]")
        if j + 1 < len(fn.pieces):
            here = float(piece.values(np.array([hi]))[0])
            nxt = float(fn.pieces[j + 1].values(np.array([hi]))[0])
            if nxt > here + _JUNCTION_TOL * scale:
                raise NotDecreasing(f"reward jumps up across rank {hi:g}")
    if fn.at_one is not None:
        last = fn.pieces[-1]
        limit = float(last.values(np.array([1.0]))[0])
        if abs(fn.at_one - limit) > _JUNCTION_TOL * scale:
            raise NotLeftContinuousAtOne(
                "reward at rank 1 differs from the limit of the last ranks; "
                "no equilibrium exists for such a scheme"
            )
    return MFRewardScheme(fn=fn, budget=fn.integral())


def validate_cost(fn, allow_discontinuous: bool = False) -> MFCost:
    """Wrap a cost profile (or a positive scalar) after positivity checks."""
    if isinstance(fn, (int, float)):
        if fn <= 0:
            raise InvalidCost("cost coefficient must be strictly positive")
        return MFCost(fn=constant_fn(float(fn)))
    if fn.min_value() <= 0:
        raise InvalidCost("cost coefficient must be strictly positive")
    jump = False
    for j in range(len(fn.pieces) - 1):
        hi = fn.breakpoints[j + 1]
        here = float(fn.pieces[j].values(np.array([hi]))[0])
        nxt = float(fn.pieces[j + 1].values(np.array([hi]))[0])
        if abs(nxt - here) > _JUNCTION_TOL * max(1.0, abs(here)):
            jump = True
    if jump and not allow_discontinuous:
        raise InvalidCost("cost coefficient must be continuous across breakpoints")
    return MFCost(fn=fn, discontinuous=jump)


# ---------------------------------------------------------------------------
# grids refined toward rank 1 and toward reward breakpoints
# ---------------------------------------------------------------------------

def _piece_u_grid(u_lo: float, u_hi: float, geo: float = _GEO_RATIO,
                  base: float = _U_SPACING) -> np.ndarray:
    """Decreasing-spacing grid in u = sqrt(1-r), from u_hi down to u_lo.

    Spacing proportional to u keeps the interpolation error of value profiles
    (which behave like a/u within a piece) uniform; pieces reaching u_lo = 0
    (rank 1) get uniform spacing because the value is smooth in u there.
    """
    if u_lo <= base:
        n = max(9, int(math.ceil((u_hi - u_lo) / base)) + 1)
        return np.linspace(u_lo, u_hi, n)
    nodes = [u_hi]
    u = u_hi
    while u * (1.0 - geo) > u_lo:
        u *= 1.0 - geo
        nodes.append(u)
    nodes.append(u_lo)
    return np.unique(np.asarray(nodes))


def _value_grid(fn: PiecewiseFn) -> np.ndarray:
    """Global increasing u grid whose nodes include every mapped breakpoint."""
    bps = np.asarray(fn.breakpoints)
    us = np.sqrt(1.0 - bps)[::-1]  # ascending in u, 0 first
    parts = [_piece_u_grid(us[j], us[j + 1]) for j in range(us.size - 1)]
    return np.unique(np.concatenate(parts))


def _tabulate_on_rank_grid(fn: PiecewiseFn, u_nodes: np.ndarray,
                           node_values: np.ndarray) -> PiecewiseFn:
    """Assemble a PiecewiseFn with Tabulated pieces split at fn's breakpoints."""
    r_nodes = 1.0 - u_nodes * u_nodes
    order = np.argsort(r_nodes)
    r_sorted, v_sorted = r_nodes[order], node_values[order]
    bps = np.asarray(fn.breakpoints)
    # snap nodes that correspond to breakpoints to their exact float values
    for b in bps:
        i = int(np.argmin(np.abs(r_sorted - b)))
        r_sorted[i] = b
    pieces = []
    for j in range(bps.size - 1):
        lo, hi = bps[j], bps[j + 1]
        mask = (r_sorted >= lo - 1e-15) & (r_sorted <= hi + 1e-15)
        g = r_sorted[mask].copy()
        v = v_sorted[mask].copy()
        g[0], g[-1] = lo, hi
        keep = np.concatenate([[True], np.diff(g) > 0])
        pieces.append(Tabulated(tuple(g[keep]), tuple(v[keep])))
    return PiecewiseFn(tuple(bps), tuple(pieces))


# ---------------------------------------------------------------------------
# equilibrium operations
# ---------------------------------------------------------------------------

def equilibrium_value(reward: MFRewardScheme, tol: float = TOL_QUAD) -> PiecewiseFn:
    """Agents' value profile v; independent of the cost by construction."""
    fn = reward.fn
    u = _value_grid(fn)

    def integrand(uu):
        return 2.0 * fn.eval(1.0 - uu * uu)

    cells = adaptive_panel_integrals(integrand, u, tol)
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    vals = np.empty_like(cum)
    pos = u > 0
    vals[pos] = cum[pos] / (2.0 * u[pos])
    vals[~pos] = reward.terminal_value()
    return _tabulate_on_rank_grid(fn, u, vals)


def _flat_rank(fn: PiecewiseFn) -> float:
    """First rank where the reward already equals its terminal value."""
    terminal = float(fn.eval(1.0))
    z = fn.shifted(-terminal).first_nonpositive(0.0)
    return 1.0 if z is None else float(z)


def equilibrium_effort(reward: MFRewardScheme, cost: MFCost,
                       value: Optional[PiecewiseFn] = None,
                       tol: float = TOL_QUAD) -> PiecewiseFn:
    """Equilibrium effort profile lam = (R - v)/(2c), tabulated.

    The effort jumps wherever the reward does, so each piece samples its own
    reward/cost descriptors directly: the left endpoint of a piece carries the
    right limit, not the value the previous piece pays at the shared rank.
    """
    v = equilibrium_value(reward, tol) if value is None else value
    bps = np.unique(np.concatenate([reward.fn.breakpoints, cost.fn.breakpoints]))
    pieces = []
    for j in range(bps.size - 1):
        lo, hi = float(bps[j]), float(bps[j + 1])
        mid = 0.5 * (lo + hi)
        rpc = reward.fn.pieces[reward.fn.piece_index(mid)]
        cpc = cost.fn.pieces[cost.fn.piece_index(mid)]
        u = _piece_u_grid(math.sqrt(1.0 - hi), math.sqrt(1.0 - lo))
        r = np.sort(1.0 - u * u)
        r[0], r[-1] = lo, hi
        lam = np.maximum((rpc.values(r) - v.eval(r)) / (2.0 * cpc.values(r)), 0.0)
        keep = np.concatenate([[True], np.diff(r) > 0])
        pieces.append(Tabulated(tuple(r[keep]), tuple(lam[keep])))
    return PiecewiseFn(tuple(bps), tuple(pieces))


def solve_equilibrium(reward: MFRewardScheme, cost: MFCost, r0: float = 0.0,
                      horizon_time: Optional[float] = None,
                      tol_quad: float = TOL_QUAD, tol_ode: float = TOL_ODE,
                      rank_gap: float = 1e-9) -> MFEquilibrium:
    """Full numerical pipeline: value, effort, and the state trajectory.

    The effort vanishes exactly where the reward has dropped to its terminal
    value; the trajectory freezes there when the reward jumps (the last paid
    rank is hit in finite time) and only converges there when it declines
    continuously.
    """
    if not 0.0 <= r0 < 1.0:
        raise InvalidParameter("initial rank must lie in [0, 1)")
    v = equilibrium_value(reward, tol_quad)
    lam = equilibrium_effort(reward, cost, value=v, tol=tol_quad)
    flat = _flat_rank(reward.fn)

    stop = max(flat, r0)
    attained = (reward.fn.eval(stop) > reward.terminal_value()
                + _JUNCTION_TOL * max(1.0, reward.terminal_value()))
    if flat <= r0:
        stop, attained = r0, True

    rfn, vfn, cfn = reward.fn, v, cost.fn

    def drift(rr):
        return np.maximum((rfn.eval(rr) - vfn.eval(rr)) / (2.0 * cfn.eval(rr)), 0.0)

    bps = np.unique(np.concatenate([rfn.breakpoints, cfn.breakpoints]))
    traj = _integrate_state(drift, tuple(bps), r0, stop, attained,
                            None, horizon_time, tol_ode, 2.5e-4, rank_gap)
    return MFEquilibrium(value=v, effort=lam, trajectory=traj,
                         reward=reward, cost=cost, flat_rank=flat)


def value_probabilistic(reward: MFRewardScheme, tol: float = TOL_QUAD) -> float:
    """Initial value via the handicap identity v(0) = E[R(1 - e^{-2 T})], T ~ Exp(1).

    The expectation integral_0^inf e^{-x} R(1 - e^{-2x}) dx is computed after the
    substitution u = e^{-x}, which maps it onto integral_0^1 R(1 - u^2) du.
    """
    fn = reward.fn
    cuts = np.sqrt(1.0 - np.asarray(fn.breakpoints))[::-1]
    edges = np.unique(np.concatenate([[0.0, 1.0], cuts]))

    def g(u):
        return fn.eval(1.0 - u * u)

    return float(np.sum(adaptive_panel_integrals(g, edges, tol)))


# ---------------------------------------------------------------------------
# closed-form families
# ---------------------------------------------------------------------------

def power_reward_fn(budget: float, alpha: float, q: float,
                    force: bool = False) -> PiecewiseFn:
    """Reward kappa (1-r)^q on the top alpha ranks, scaled to the given budget."""
    if budget < 0:
        raise InvalidParameter("budget must be nonnegative")
    if not 0.0 < alpha <= 1.0:
        raise InvalidParameter("cut-off must lie in (0, 1]")
    if q < 0:
        raise InvalidParameter("shape exponent must be nonnegative")
    if 0.0 < q < 1.0 and alpha == 1.0 and not force:
        raise InvalidParameter(
            "shape exponents in (0, 1) with no cut-off give an effort profile "
            "whose slope blows up at rank 1; pass force=True to build it anyway"
        )
    kappa = budget * (1.0 + q) / (1.0 - (1.0 - alpha) ** (1.0 + q))
    if alpha == 1.0:
        return PiecewiseFn((0.0, 1.0), (Power(kappa, q),), force=force)
    return PiecewiseFn((0.0, alpha, 1.0), (Power(kappa, q), Constant(0.0)))


def closed_form_power(budget: float, alpha: float, q: float, cost: float = 1.0,
                      force: bool = False) -> MFEquilibrium:
    """Exact equilibrium for the power family with cut-off.

    Value and effort are carried as exact sums of powers of (1-r); the state
    trajectory and its quantiles are attached analytically for the flat-with-
    cut-off (q = 0) and no-cut-off (alpha = 1) cases, numerically otherwise.
    """
    if cost <= 0:
        raise InvalidParameter("cost must be strictly positive")
    reward = validate_reward(power_reward_fn(budget, alpha, q, force=force))
    cost_w = validate_cost(float(cost))
    if budget == 0:
        zero = constant_fn(0.0)
        traj = solve_state_ode(zero, r0=0.0)
        return MFEquilibrium(zero, zero, traj, reward, cost_w,
                             quantile_fn=lambda b: math.inf, flat_rank=0.0)

    kappa = budget * (1.0 + q) / (1.0 - (1.0 - alpha) ** (1.0 + q))
    tail = (1.0 - alpha) ** (q + 0.5)
    v_main = PowerCombo(((kappa / (1 + 2 * q), q), (-kappa * tail / (1 + 2 * q), -0.5)))
    lam_main = PowerCombo((
        (kappa * q / (cost * (1 + 2 * q)), q),
        (kappa * tail / (2 * cost * (1 + 2 * q)), -0.5),
    ))
    if alpha == 1.0:
        vfn = PiecewiseFn((0.0, 1.0), (v_main,), force=force)
        lamfn = PiecewiseFn((0.0, 1.0), (lam_main,), force=force)
    else:
        vfn = PiecewiseFn((0.0, alpha, 1.0), (v_main, Constant(0.0)))
        lamfn = PiecewiseFn((0.0, alpha, 1.0), (lam_main, Constant(0.0)))

    quantile_fn = None
    if q == 0.0 and alpha < 1.0:
        rate = budget * math.sqrt(1.0 - alpha) / (4 * cost * alpha)
        t_alpha = 4 * cost * alpha * (1 - math.sqrt(1 - alpha)) / (
            budget * math.sqrt(1 - alpha))

        def quantile_fn(beta, _ta=t_alpha, _a=alpha, _B=budget, _c=cost):
            if beta > _a + 1e-15:
                return math.inf
            return 4 * _c * _a * (1 - math.sqrt(1 - beta)) / (_B * math.sqrt(1 - _a))

        uu = np.linspace(1.0, math.sqrt(1 - alpha), 4097)
        states = 1.0 - uu * uu
        times = (1.0 - uu) / rate
        times = np.concatenate([times, [t_alpha + max(1.0, t_alpha)]])
        states = np.concatenate([states, [alpha]])
        traj = Trajectory(times, states, terminal_state=alpha,
                          frozen_after=t_alpha)
    elif alpha == 1.0 and q > 0.0:
        scale = budget * q * q * (1 + q) / (cost * (1 + 2 * q))

        def quantile_fn(beta, _m=scale, _q=q):
            if beta >= 1.0:
                return math.inf
            return ((1 - beta) ** (-_q) - 1.0) / _m

        uu = np.linspace(1.0, math.sqrt(1e-9), 8193)
        states = 1.0 - uu * uu
        times = ((uu * uu) ** (-q) - 1.0) / scale
        traj = Trajectory(times, states, terminal_state=1.0, frozen_after=None)
    elif q == 0.0 and alpha == 1.0:
        traj = solve_state_ode(constant_fn(0.0), r0=0.0)
        quantile_fn = lambda b: math.inf
    else:
        traj = solve_state_ode(lamfn, r0=0.0,
                               target_rank=alpha if alpha < 1 else None)
    return MFEquilibrium(vfn, lamfn, traj, reward, cost_w,
                         quantile_fn=quantile_fn,
                         flat_rank=alpha if alpha < 1 else 1.0)


def closed_form_staircase(levels: Sequence[float], costs, grid: Sequence[float]
                          ) -> MFEquilibrium:
    """Exact equilibrium for step rewards: per-step values, efforts and times.

    On step j the state satisfies rho(t) = 1 - (sqrt(1-r_{j-1}) - a_j (t-t_{j-1})/4c_j)^2
    until it reaches r_j at t_j; a_j collects the reward mass still reachable
    beyond the current step. Equal trailing levels give a_j = 0 and t_j = inf.
    """
    grid = [float(g) for g in grid]
    levels = [float(x) for x in levels]
    n = len(levels)
    if len(grid) != n + 1:
        raise InvalidGrid("need one more grid point than levels")
    if isinstance(costs, (int, float)):
        costs = [float(costs)] * n
    else:
        costs = [float(x) for x in costs]
    if len(costs) != n:
        raise InvalidGrid("need one cost per step")
    if grid[0] != 0.0 or grid[-1] != 1.0 or any(
            b >= a for a, b in zip(grid[1:], grid[:-1])):
        raise InvalidGrid("grid must increase strictly from 0 to 1")
    if any(c <= 0 for c in costs):
        raise InvalidCost("step costs must be strictly positive")

    reward = validate_reward(PiecewiseFn(tuple(grid),
                                         tuple(Constant(x) for x in levels)))
    cost_w = validate_cost(PiecewiseFn(tuple(grid),
                                       tuple(Constant(c) for c in costs)),
                           allow_discontinuous=True)

    sq = [math.sqrt(1.0 - g) for g in grid]
    amounts = []
    for j in range(1, n + 1):
        s = levels[j - 1] * sq[j]
        for k in range(j + 1, n + 1):
            s -= levels[k - 1] * (sq[k - 1] - sq[k])
        amounts.append(s)

    v_pieces, lam_pieces = [], []
    for j in range(n):
        if amounts[j] == 0.0:
            v_pieces.append(Constant(levels[j]))
            lam_pieces.append(Constant(0.0))
        else:
            v_pieces.append(PowerCombo(((levels[j], 0.0), (-amounts[j], -0.5))))
            lam_pieces.append(PowerCombo(((amounts[j] / (2 * costs[j]), -0.5),)))
    vfn = PiecewiseFn(tuple(grid), tuple(v_pieces), force=True)
    lamfn = PiecewiseFn(tuple(grid), tuple(lam_pieces), force=True)

    times_at = [0.0]
    for j in range(1, n + 1):
        if amounts[j - 1] <= 0.0 or not math.isfinite(times_at[-1]):
            times_at.append(math.inf)
        else:
            times_at.append(times_at[-1] + (4 * costs[j - 1] / amounts[j - 1])
                            * (sq[j - 1] - sq[j]))

    def quantile_fn(beta):
        if beta <= 0.0:
            return 0.0
        j = int(np.searchsorted(np.asarray(grid), beta, side="left"))  # step index
        j = max(1, min(j, n))
        if amounts[j - 1] <= 0.0 or not math.isfinite(times_at[j - 1]):
            return math.inf
        return times_at[j - 1] + (4 * costs[j - 1] / amounts[j - 1]) * (
            sq[j - 1] - math.sqrt(1.0 - beta))

    # sample the analytic state: within each step u(t) falls linearly in t
    t_parts, s_parts = [np.array([0.0])], [np.array([0.0])]
    freeze_time, terminal = None, 1.0
    for j in range(1, n + 1):
        if amounts[j - 1] <= 0.0 or not math.isfinite(times_at[j]):
            terminal = grid[j - 1]
            freeze_time = times_at[j - 1] if math.isfinite(times_at[j - 1]) else None
            break
        npts = max(65, int(4097 * (sq[j - 1] - sq[j])))
        tt = np.linspace(times_at[j - 1], times_at[j], npts)[1:]
        uu = sq[j - 1] - (amounts[j - 1] / (4 * costs[j - 1])) * (tt - times_at[j - 1])
        t_parts.append(tt)
        s_parts.append(1.0 - uu * uu)
    else:
        # all steps finite: the state reaches the last grid point below 1
        terminal = grid[n - 1] if n >= 1 else 0.0
        freeze_time = times_at[n - 1]
        # levels must end at 0 for this branch (A_n > 0 impossible at rank 1)
    times = np.concatenate(t_parts)
    states = np.concatenate(s_parts)
    keep = np.concatenate([[True], np.diff(times) > 0])
    times, states = times[keep], states[keep]
    if freeze_time is not None:
        times = np.concatenate([times, [freeze_time + max(1.0, freeze_time)]])
        states = np.concatenate([states, [states[-1]]])
    traj = Trajectory(times, states, terminal_state=float(terminal),
                      frozen_after=freeze_time)
    flat = _flat_rank(reward.fn)
    return MFEquilibrium(vfn, lamfn, traj, reward, cost_w,
                         quantile_fn=quantile_fn, flat_rank=flat)
