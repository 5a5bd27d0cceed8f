"""Piecewise-defined functions on the rank interval [0, 1] and their numerics.

A PiecewiseFn is a list of strictly increasing breakpoints 0 = b_0 < ... < b_k = 1
together with one descriptor per interval. Piece j owns the half-open interval
(b_{j-1}, b_j]; the first piece additionally owns r = 0 (right-closed convention,
so step functions are automatically left-continuous at 1).

The module also provides the two numerical workhorses built on this carrier:

* integrate_sqrt_weight -- integrals of f(y)/sqrt(1-y) over [r, 1]. The endpoint
  singularity is removed exactly by the substitution y = 1 - u^2, after which the
  integrand 2 f(1-u^2) is smooth inside every piece and ordinary Gauss panels
  converge fast.
* solve_state_ode -- the aggregate-state equation rho'(t) = effort(rho) (1 - rho).
  Integration runs in the transformed rank variable s = -log(1-rho)/2, where
  dt/ds = 2/effort and the vanishing factor (1 - rho) disappears. Steps are
  clamped so no panel straddles a breakpoint of the effort function.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import InvalidGrid, InvalidParameter, NonFiniteIntegrand

TOL_QUAD = 1e-10   # default relative tolerance of the weighted quadrature
TOL_ODE = 1e-8     # default relative tolerance of the state integration

_EPS_RANK = 1e-12  # ranks are considered equal below this separation

_trapz = getattr(np, "trapezoid", np.trapz)


# ---------------------------------------------------------------------------
# piece descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    """f(r) = a."""

    a: float

    def values(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.a)

    def bounds_on(self, lo, hi):
        return self.a, self.a

    def nonincreasing_on(self, lo, hi):
        return True

    def integral_on(self, lo, hi):
        return self.a * (hi - lo)

    def lipschitz_on(self, lo, hi):
        return True

    def first_nonpositive(self, lo, hi):
        return lo if self.a <= 0 else None


@dataclass(frozen=True)
class Power:
    """f(r) = a * (1 - r)**q with q >= 0."""

    a: float
    q: float

    def values(self, r):
        r = np.asarray(r, dtype=float)
        if self.q == 0.0:
            return np.full_like(r, self.a)
        return self.a * np.power(np.maximum(1.0 - r, 0.0), self.q)

    def bounds_on(self, lo, hi):
        va = self.a * (1.0 - lo) ** self.q
        vb = self.a * (1.0 - hi) ** self.q
        return min(va, vb), max(va, vb)

    def nonincreasing_on(self, lo, hi):
        return self.a >= 0 or self.q == 0.0

    def integral_on(self, lo, hi):
        if self.q == -1.0:
            return self.a * (math.log(1.0 - lo) - math.log(1.0 - hi))
        p = self.q + 1.0
        return self.a * ((1.0 - lo) ** p - (1.0 - hi) ** p) / p

    def lipschitz_on(self, lo, hi):
        if self.q >= 1.0 or self.q == 0.0 or self.a == 0.0:
            return True
        return hi < 1.0  # exponent in (0,1) or negative: derivative blows up at 1

    def first_nonpositive(self, lo, hi):
        if self.a <= 0:
            return lo
        if self.q > 0 and hi >= 1.0:
            return 1.0
        return None


@dataclass(frozen=True)
class Affine:
    """f(r) = a + b * r."""

    a: float
    b: float

    def values(self, r):
        return self.a + self.b * np.asarray(r, dtype=float)

    def bounds_on(self, lo, hi):
        va, vb = self.a + self.b * lo, self.a + self.b * hi
        return min(va, vb), max(va, vb)

    def nonincreasing_on(self, lo, hi):
        return self.b <= 0

    def integral_on(self, lo, hi):
        return self.a * (hi - lo) + 0.5 * self.b * (hi * hi - lo * lo)

    def lipschitz_on(self, lo, hi):
        return True

    def first_nonpositive(self, lo, hi):
        va, vb = self.a + self.b * lo, self.a + self.b * hi
        if va <= 0:
            return lo
        if vb <= 0:
            return -self.a / self.b
        return None


@dataclass(frozen=True)
class Tabulated:
    """Linear interpolation through (grid, values); clamped outside the grid."""

    grid: tuple
    values_at: tuple

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values_at, dtype=float)
        if g.ndim != 1 or g.size < 2 or v.shape != g.shape:
            raise InvalidGrid("tabulated descriptor needs matching 1-d grid and values")
        if np.any(np.diff(g) <= 0):
            raise InvalidGrid("tabulated grid must be strictly increasing")
        object.__setattr__(self, "grid", tuple(float(x) for x in g))
        object.__setattr__(self, "values_at", tuple(float(x) for x in v))

    def _arrays(self):
        return np.asarray(self.grid), np.asarray(self.values_at)

    def values(self, r):
        g, v = self._arrays()
        return np.interp(np.asarray(r, dtype=float), g, v)

    def bounds_on(self, lo, hi):
        g, v = self._arrays()
        inside = v[(g >= lo) & (g <= hi)]
        cand = np.concatenate([inside, self.values([lo, hi])])
        return float(np.min(cand)), float(np.max(cand))

    def nonincreasing_on(self, lo, hi):
        g, v = self._arrays()
        keep = (g > lo) & (g < hi)
        vv = np.concatenate([[self.values(lo)], v[keep], [self.values(hi)]])
        return bool(np.all(np.diff(vv) <= 1e-12 * max(1.0, np.max(np.abs(vv)))))

    def integral_on(self, lo, hi):
        g, v = self._arrays()
        pts = np.concatenate([[lo], g[(g > lo) & (g < hi)], [hi]])
        return float(_trapz(np.interp(pts, g, v), pts))

    def lipschitz_on(self, lo, hi):
        return True

    def first_nonpositive(self, lo, hi):
        g, v = self._arrays()
        pts = np.concatenate([[lo], g[(g > lo) & (g < hi)], [hi]])
        vals = np.interp(pts, g, v)
        bad = np.nonzero(vals <= 0)[0]
        if bad.size == 0:
            return None
        i = bad[0]
        if i == 0:
            return float(pts[0])
        # linear crossing between pts[i-1] (positive) and pts[i]
        x0, x1, y0, y1 = pts[i - 1], pts[i], vals[i - 1], vals[i]
        return float(x0 + (x1 - x0) * y0 / (y0 - y1))


@dataclass(frozen=True)
class PowerCombo:
    """f(r) = sum_i a_i * (1 - r)**q_i; exact carrier for closed-form solutions."""

    terms: tuple  # of (coefficient, exponent) pairs

    def __post_init__(self):
        object.__setattr__(
            self, "terms", tuple((float(a), float(q)) for a, q in self.terms)
        )

    def values(self, r):
        r = np.asarray(r, dtype=float)
        w = np.maximum(1.0 - r, 0.0)
        out = np.zeros_like(w)
        for a, q in self.terms:
            if a == 0.0:
                continue
            if q == 0.0:
                out += a
            else:
                with np.errstate(divide="ignore"):
                    out += a * np.power(w, q)
        return out

    def bounds_on(self, lo, hi):
        rr = np.linspace(lo, hi, 257)
        vals = self.values(rr)
        return float(np.min(vals)), float(np.max(vals))

    def nonincreasing_on(self, lo, hi):
        vals = self.values(np.linspace(lo, hi, 257))
        return bool(np.all(np.diff(vals) <= 1e-12 * max(1.0, np.max(np.abs(vals)))))

    def integral_on(self, lo, hi):
        total = 0.0
        for a, q in self.terms:
            total += Power(a, q).integral_on(lo, hi)
        return total

    def lipschitz_on(self, lo, hi):
        if hi < 1.0:
            return True
        return all(a == 0.0 or q >= 1.0 or q == 0.0 for a, q in self.terms)

    def first_nonpositive(self, lo, hi):
        if all(a >= 0 for a, q in self.terms) and any(a > 0 for a, q in self.terms):
            if hi >= 1.0 and all(q > 0 for a, q in self.terms if a > 0):
                return 1.0
            return None
        rr = np.linspace(lo, hi, 1025)
        vals = self.values(rr)
        bad = np.nonzero(vals <= 0)[0]
        if bad.size == 0:
            return None
        i = bad[0]
        if i == 0:
            return float(lo)
        x0, x1, y0, y1 = rr[i - 1], rr[i], vals[i - 1], vals[i]
        return float(x0 + (x1 - x0) * y0 / (y0 - y1))


Descriptor = Union[Constant, Power, Affine, Tabulated, PowerCombo]


# ---------------------------------------------------------------------------
# the piecewise function carrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseFn:
    """Piecewise function on [0, 1]; immutable and safe to share between threads.

    ``at_one`` optionally overrides the value at rank exactly 1, which is the
    only way to express a function whose value at 1 differs from the limit of
    its last piece (used to model rewards that drop at the very last rank).
    """

    breakpoints: tuple
    pieces: tuple
    at_one: Optional[float] = None
    force: bool = field(default=False, compare=False)

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise InvalidGrid("need at least breakpoints [0, 1]")
        if abs(b[0]) > 0 or abs(b[-1] - 1.0) > 0:
            raise InvalidGrid("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise InvalidGrid("breakpoints must be strictly increasing")
        if len(self.pieces) != b.size - 1:
            raise InvalidGrid(
                f"{b.size - 1} intervals but {len(self.pieces)} descriptors"
            )
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.force:
            for lo, hi, piece in self.iter_pieces():
                if not piece.lipschitz_on(lo, hi):
                    raise InvalidParameter(
                        "piece on [%g, %g] is not Lipschitz up to its right edge; "
                        "pass force=True to construct it anyway" % (lo, hi)
                    )

    # -- structure ---------------------------------------------------------

    def iter_pieces(self):
        b = self.breakpoints
        for j, piece in enumerate(self.pieces):
            yield b[j], b[j + 1], piece

    def piece_index(self, r: float) -> int:
        """Index of the descriptor owning rank r under the right-closed convention."""
        if r <= 0.0:
            return 0
        return min(bisect_left(self.breakpoints, r) - 1, len(self.pieces) - 1)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, r):
        return self.eval(r)

    def eval(self, r):
        """Evaluate at rank(s) r in [0, 1]; vectorized."""
        arr = np.asarray(r, dtype=float)
        scalar = arr.ndim == 0
        rr = np.atleast_1d(arr)
        b = np.asarray(self.breakpoints)
        idx = np.clip(np.searchsorted(b, rr, side="left") - 1, 0, len(self.pieces) - 1)
        out = np.empty_like(rr)
        for j, piece in enumerate(self.pieces):
            mask = idx == j
            if np.any(mask):
                out[mask] = piece.values(rr[mask])
        if self.at_one is not None:
            out[rr >= 1.0] = self.at_one
        if scalar:
            return float(out[0])
        return out

    # -- global properties ---------------------------------------------------

    def integral(self) -> float:
        """Exact integral over [0, 1] (the value at a single rank is immaterial)."""
        return float(sum(p.integral_on(lo, hi) for lo, hi, p in self.iter_pieces()))

    def min_value(self) -> float:
        m = math.inf
        for lo, hi, p in self.iter_pieces():
            m = min(m, p.bounds_on(lo, hi)[0])
        if self.at_one is not None:
            m = min(m, self.at_one)
        return m

    def max_value(self) -> float:
        m = -math.inf
        for lo, hi, p in self.iter_pieces():
            m = max(m, p.bounds_on(lo, hi)[1])
        if self.at_one is not None:
            m = max(m, self.at_one)
        return m

    def first_nonpositive(self, start: float = 0.0):
        """Smallest rank >= start where the function is <= 0, or None."""
        for lo, hi, piece in self.iter_pieces():
            if hi < start:
                continue
            z = piece.first_nonpositive(max(lo, start), hi)
            if z is not None:
                return float(z)
        return None

    def scaled(self, factor: float) -> "PiecewiseFn":
        """Pointwise multiplication by a constant."""
        out = []
        for p in self.pieces:
            if isinstance(p, Constant):
                out.append(Constant(p.a * factor))
            elif isinstance(p, Power):
                out.append(Power(p.a * factor, p.q))
            elif isinstance(p, Affine):
                out.append(Affine(p.a * factor, p.b * factor))
            elif isinstance(p, Tabulated):
                out.append(Tabulated(p.grid, tuple(v * factor for v in p.values_at)))
            else:
                out.append(PowerCombo(tuple((a * factor, q) for a, q in p.terms)))
        a1 = None if self.at_one is None else self.at_one * factor
        return PiecewiseFn(self.breakpoints, tuple(out), at_one=a1, force=self.force)

    def shifted(self, delta: float) -> "PiecewiseFn":
        """Pointwise addition of a constant."""
        out = []
        for p in self.pieces:
            if isinstance(p, Constant):
                out.append(Constant(p.a + delta))
            elif isinstance(p, Power):
                out.append(PowerCombo(((p.a, p.q), (delta, 0.0))))
            elif isinstance(p, Affine):
                out.append(Affine(p.a + delta, p.b))
            elif isinstance(p, Tabulated):
                out.append(Tabulated(p.grid, tuple(v + delta for v in p.values_at)))
            else:
                out.append(PowerCombo(p.terms + ((delta, 0.0),)))
        a1 = None if self.at_one is None else self.at_one + delta
        return PiecewiseFn(self.breakpoints, tuple(out), at_one=a1, force=True)


def constant_fn(value: float) -> PiecewiseFn:
    return PiecewiseFn((0.0, 1.0), (Constant(value),))


def step_fn(grid: Sequence[float], levels: Sequence[float]) -> PiecewiseFn:
    """Staircase with levels[j] on (grid[j], grid[j+1]] (first interval closed at 0)."""
    return PiecewiseFn(tuple(grid), tuple(Constant(v) for v in levels))


# ---------------------------------------------------------------------------
# adaptive Gauss panels
# ---------------------------------------------------------------------------

_GL_LO = np.polynomial.legendre.leggauss(8)
_GL_HI = np.polynomial.legendre.leggauss(16)


def _panels(g: Callable, lo: np.ndarray, hi: np.ndarray):
    """Gauss integrals of g over each [lo_i, hi_i] with an error estimate."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    xl, wl = _GL_LO
    xh, wh = _GL_HI
    fl = g(mid[:, None] + half[:, None] * xl[None, :])
    fh = g(mid[:, None] + half[:, None] * xh[None, :])
    if not (np.all(np.isfinite(fl)) and np.all(np.isfinite(fh))):
        raise NonFiniteIntegrand("integrand is not finite inside the integration range")
    il = (fl @ wl) * half
    ih = (fh @ wh) * half
    return ih, np.abs(ih - il)


def adaptive_panel_integrals(g: Callable, edges: np.ndarray, tol: float,
                             max_passes: int = 48):
    """Integrate g over every cell of ``edges`` to combined relative accuracy tol.

    Returns per-cell integrals aligned with the input cells. Cells are halved
    where the 8/16-point Gauss estimates disagree, so integrable endpoint
    behaviour inside a cell is resolved geometrically.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    parent = np.arange(lo.size)
    vals, errs = _panels(g, lo, hi)
    for _ in range(max_passes):
        scale = max(float(np.sum(np.abs(vals))), 1e-300)
        bad = errs > tol * scale / max(lo.size, 1)
        if not np.any(bad) or float(np.sum(errs)) <= tol * scale:
            break
        mid = 0.5 * (lo[bad] + hi[bad])
        nlo = np.concatenate([lo[~bad], lo[bad], mid])
        nhi = np.concatenate([hi[~bad], mid, hi[bad]])
        nparent = np.concatenate([parent[~bad], parent[bad], parent[bad]])
        nvals, nerrs = _panels(g, np.concatenate([lo[bad], mid]),
                               np.concatenate([mid, hi[bad]]))
        vals = np.concatenate([vals[~bad], nvals])
        errs = np.concatenate([errs[~bad], nerrs])
        lo, hi, parent = nlo, nhi, nparent
    out = np.zeros(edges.size - 1)
    np.add.at(out, parent, vals)
    return out


def adaptive_integral(g: Callable, edges, tol: float = TOL_QUAD) -> float:
    return float(np.sum(adaptive_panel_integrals(g, np.asarray(edges, float), tol)))


# ---------------------------------------------------------------------------
# weighted integral against 1/sqrt(1-y)
# ---------------------------------------------------------------------------

def _u_of_rank(r):
    return np.sqrt(np.maximum(1.0 - np.asarray(r, dtype=float), 0.0))


def integrate_sqrt_weight(f: PiecewiseFn, r: float, tol: float = TOL_QUAD) -> float:
    """integral of f(y)/sqrt(1-y) over [r, 1].

    Substituting y = 1 - u^2 turns the weight into a constant factor 2, so the
    integral equals the integral of 2 f(1-u^2) for u in [0, sqrt(1-r)], computed
    piecewise between the mapped breakpoints of f.
    """
    if not 0.0 <= r < 1.0:
        raise InvalidParameter("lower rank limit must lie in [0, 1)")
    u_top = float(_u_of_rank(r))
    cuts = [float(_u_of_rank(b)) for b in f.breakpoints if r < b < 1.0]
    edges = np.unique(np.concatenate([[0.0, u_top], cuts]))
    edges = edges[edges <= u_top + 1e-15]

    def g(u):
        return 2.0 * f.eval(1.0 - u * u)

    return float(np.sum(adaptive_panel_integrals(g, edges, tol)))


def cumulative_sqrt_weight(f: PiecewiseFn, u_nodes: np.ndarray,
                           tol: float = TOL_QUAD) -> np.ndarray:
    """Values of integral_0^{u} 2 f(1-w^2) dw at each node of an increasing u grid."""
    cells = adaptive_panel_integrals(lambda u: 2.0 * f.eval(1.0 - u * u),
                                     u_nodes, tol)
    return np.concatenate([[0.0], np.cumsum(cells)])


# ---------------------------------------------------------------------------
# trajectories of the aggregate state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Monotone sampling of the arrived proportion rho(t).

    ``terminal_state`` is the long-run limit of rho; ``frozen_after`` is the
    time from which rho stays constant (None when the limit is only reached
    asymptotically). ``reached`` is False when a requested target rank lies
    beyond the attainable range; the trajectory returned is then the frozen one.
    """

    times: np.ndarray
    states: np.ndarray
    terminal_state: float
    frozen_after: Optional[float] = None
    reached: bool = True

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))

    def state_at(self, t):
        return np.interp(np.asarray(t, dtype=float), self.times, self.states)


def quantile(traj: Trajectory, beta: float) -> float:
    """First time the arrived proportion reaches beta (inf if it never does)."""
    if not 0.0 < beta <= 1.0:
        raise InvalidParameter("quantile level must lie in (0, 1]")
    states, times = traj.states, traj.times
    if beta <= states[0] + _EPS_RANK:
        return 0.0
    if beta > traj.terminal_state + _EPS_RANK or beta > states[-1] + _EPS_RANK:
        return math.inf
    i = int(np.searchsorted(states, beta, side="left"))
    i = min(i, states.size - 1)
    s0, s1 = states[i - 1], states[i]
    if s1 - s0 <= 0:
        return float(times[i])
    w = (beta - s0) / (s1 - s0)
    return float(times[i - 1] + w * (times[i] - times[i - 1]))


def _freeze_scan(effort: PiecewiseFn, r0: float):
    """Locate where forward motion stops.

    Returns (stop_rank, attained): attained is True when the effort is positive
    up to and including stop_rank and drops to zero just after it, so the state
    hits stop_rank in finite time and freezes; False when the effort decays to
    zero at stop_rank itself (the state only approaches it) or stop_rank is 1.
    """
    z = effort.first_nonpositive(r0)
    if z is None:
        return 1.0, False
    z = float(z)
    if z <= r0 + _EPS_RANK:
        return r0, True  # no motion at all
    val_at_z = effort.eval(z)
    if val_at_z > 0.0 and z < 1.0:
        return z, True   # jump to zero just beyond z (right-closed pieces)
    return z, False


def _segment_edges(s0: float, s1: float, forced: np.ndarray, max_step: float):
    """Grid from s0 to s1 containing ``forced`` nodes, spacing at most max_step."""
    knots = np.unique(np.concatenate([[s0, s1], forced[(forced > s0) & (forced < s1)]]))
    parts = [np.array([s0])]
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, int(math.ceil((b - a) / max_step)))
        parts.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(parts)


def _integrate_clock(rate_of_s: Callable, edges: np.ndarray, tol: float,
                     max_passes: int = 30):
    """Cumulative integral of dt/ds over an s grid by per-cell Simpson panels.

    Each accepted cell stores the two-half-step Simpson value; cells whose
    Richardson error estimate is out of tolerance are split. Returns the final
    node set and cumulative times at the nodes.
    """
    edges = np.asarray(edges, dtype=float)
    for _ in range(max_passes):
        lo, hi = edges[:-1], edges[1:]
        h = hi - lo
        q1 = lo + 0.25 * h
        mid = lo + 0.5 * h
        q3 = lo + 0.75 * h
        # cells never straddle a breakpoint; evaluating the left endpoint a hair
        # inside the cell picks the correct one-sided limit at jumps
        gl = rate_of_s(lo + 1e-9 * h)
        gh = rate_of_s(hi)
        gq1 = rate_of_s(q1)
        gm = rate_of_s(mid)
        gq3 = rate_of_s(q3)
        if not np.all(np.isfinite(gl) & np.isfinite(gh) & np.isfinite(gm)):
            raise NonFiniteIntegrand("state equation rate is not finite")
        s_whole = h / 6.0 * (gl + 4.0 * gm + gh)
        s_half = h / 12.0 * (gl + 4.0 * gq1 + 2.0 * gm + 4.0 * gq3 + gh)
        err = np.abs(s_half - s_whole) / 15.0
        total = max(float(np.sum(np.abs(s_half))), 1e-300)
        bad = err > tol * total / max(edges.size - 1, 1)
        if not np.any(bad) or float(np.sum(err)) <= tol * total:
            times = np.concatenate([[0.0], np.cumsum(s_half)])
            return edges, times
        edges = np.sort(np.concatenate([edges, mid[bad]]))
    times = np.concatenate([[0.0], np.cumsum(s_half)])
    return edges, times


def _integrate_state(drift: Callable, break_ranks, r0: float, stop_rank: float,
                     attained: bool, target_rank: Optional[float],
                     horizon_time: Optional[float], tol: float,
                     max_step: float, rank_gap: float):
    """Shared core of solve_state_ode; drift maps rank arrays to effort values."""
    reached = True
    if target_rank is not None and target_rank > stop_rank + _EPS_RANK:
        reached = False

    if stop_rank <= r0 + _EPS_RANK:
        end_time = horizon_time if horizon_time is not None else 1.0
        return Trajectory(np.array([0.0, end_time]), np.array([r0, r0]),
                          terminal_state=r0, frozen_after=0.0, reached=reached)

    r_end = stop_rank if attained else max(r0, stop_rank - rank_gap)
    if stop_rank >= 1.0:
        r_end = 1.0 - rank_gap
    if target_rank is not None:
        r_end = min(r_end, max(target_rank, r0 + _EPS_RANK))
    hits_freeze = attained and r_end >= stop_rank - _EPS_RANK

    s0 = -0.5 * math.log(1.0 - r0)
    s1 = -0.5 * math.log(1.0 - r_end)
    forced = -0.5 * np.log(1.0 - np.asarray(
        [b for b in break_ranks if r0 < b < r_end], dtype=float)) \
        if len(break_ranks) else np.array([])
    edges = _segment_edges(s0, s1, np.asarray(forced, dtype=float), max_step)

    def rate_of_s(s):
        rho = 1.0 - np.exp(-2.0 * np.asarray(s, dtype=float))
        lam = np.maximum(drift(rho), 0.0)
        with np.errstate(divide="ignore"):
            return np.where(lam > 0.0, 2.0 / np.where(lam > 0.0, lam, 1.0), np.inf)

    nodes, times = _integrate_clock(rate_of_s, edges, tol)
    states = 1.0 - np.exp(-2.0 * nodes)
    states[0] = r0

    frozen_after = None
    if hits_freeze:
        states[-1] = stop_rank
        frozen_after = float(times[-1])
        extension = horizon_time if (horizon_time is not None
                                     and horizon_time > frozen_after) \
            else frozen_after + max(1.0, frozen_after)
        times = np.concatenate([times, [extension]])
        states = np.concatenate([states, [stop_rank]])
    return Trajectory(times, states, terminal_state=float(stop_rank),
                      frozen_after=frozen_after, reached=reached)


def solve_state_ode(effort: PiecewiseFn, r0: float = 0.0,
                    target_rank: Optional[float] = None,
                    horizon_time: Optional[float] = None,
                    tol: float = TOL_ODE, max_step: float = 2.5e-4,
                    rank_gap: float = 1e-9) -> Trajectory:
    """Solve rho'(t) = effort(rho) (1 - rho) with rho(0) = r0.

    The integration variable is s = -log(1 - rho)/2, where the equation becomes
    the plain clock integral dt/ds = 2/effort(rho(s)); panels are clamped at the
    breakpoints of ``effort`` so every panel sees a smooth rate. When the effort
    jumps to zero the trajectory freezes and ``frozen_after`` is set; when it
    decays to zero the state approaches ``terminal_state`` without freezing.

    A ``target_rank`` beyond the attainable range is reported by ``reached=False``
    on the (frozen) trajectory rather than an exception or silent truncation.
    """
    if not 0.0 <= r0 < 1.0:
        raise InvalidParameter("initial rank must lie in [0, 1)")
    if effort.min_value() < -1e-12:
        raise InvalidParameter("effort must be nonnegative")
    if target_rank is not None and not r0 <= target_rank <= 1.0:
        raise InvalidParameter("target rank must lie in [r0, 1]")
    stop_rank, attained = _freeze_scan(effort, r0)
    return _integrate_state(effort.eval, effort.breakpoints, r0, stop_rank,
                            attained, target_rank, horizon_time, tol,
                            max_step, rank_gap)
