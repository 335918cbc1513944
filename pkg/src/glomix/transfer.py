"""Perron-Frobenius operator with respect to Lebesgue measure.

``P g (y) = sum_j psi_j'(y) g(psi_j(y))`` on either the unit interval or the
half-line.  Exact mode evaluates ``g`` at the true preimages (and composes
recursively for powers); Grid mode works with a sparse matrix acting on
piecewise-linear interpolants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve_triangular

from .grid import GridFunction, geometric_grid
from .halfline import X_MIN, HalfLineMap, conjugate_inverse_branch_derivative, psi, psi_inv
from .maps import TAIL_CUTOFF, IntervalMap, inverse_branch, inverse_branch_derivative
from .measures import HALF_LINE, UNIT_INTERVAL
from .quadrature import gk_integrate

# ---------------------------------------------------------------------------
# preimages


def _space(target) -> str:
    return HALF_LINE if isinstance(target, HalfLineMap) else UNIT_INTERVAL


def preimages(target, y):
    """Yield ``(j, psi_j(y), psi_j'(y))`` over all branches, in branch order.

    Countable maps stop once every weight is below 1e-16 or the cells fall
    below float resolution.
    """
    y = np.asarray(y, dtype=float)
    if isinstance(target, HalfLineMap):
        m = target.source
        xi = psi_inv(y, m.p)
    else:
        m = target
        xi = y
    for j in m.branch_indices():
        x = inverse_branch(m, j, xi)
        if isinstance(target, HalfLineMap):
            w = conjugate_inverse_branch_derivative(m, j, y, xi=xi)
            with np.errstate(divide="ignore"):
                img = np.where(x > 0, np.expm1(-m.p * np.log(np.maximum(x, 1e-320))) / m.p, math.inf)
        else:
            w = inverse_branch_derivative(m, j, xi, x=x)
            img = x
        w = np.asarray(w, dtype=float)
        yield j, np.asarray(img, dtype=float), w
        if not m.finite and (np.max(np.abs(w)) < TAIL_CUTOFF or m.branch(j).upper >= 1.0):
            break


def pf_callable(target, g, n: int = 1):
    """``P^n g`` as a vectorized callable, composed exactly (cost grows like branches^n)."""
    if n == 0:
        return g

    inner = pf_callable(target, g, n - 1)

    def Pg(y):
        y = np.asarray(y, dtype=float)
        total = np.zeros(y.shape)
        for _, img, w in preimages(target, y):
            total = total + w * inner(img)
        return total

    return Pg


# ---------------------------------------------------------------------------
# grid discretization


def transfer_matrix(target, grid, *, below: str = "constant", tail_exponent: float = 0.0):
    """Sparse matrix ``A`` with ``(A v)_i = sum_j psi_j'(y_i) v~(psi_j(y_i))``, where ``v~``
    is the piecewise-linear interpolant of ``v`` on ``grid``.

    Images above the grid contribute 0.  Images below the grid use the first
    value (``below='constant'``).  With ``below='power'``, meant for densities
    with an ``x^-p`` singularity, ``x^p v`` is interpolated instead of ``v``
    and held constant below the grid.  A nonzero ``tail_exponent`` ``w``
    interpolates ``(1 + y)^w v`` instead, which is exact for tails decaying
    like ``y^-w`` (see ``weighted_interp``).
    """
    return sum(transfer_matrix_by_branch(target, grid, below=below, tail_exponent=tail_exponent).values())


def weighted_interp(grid, values, z, tail_exponent: float = 0.0):
    """Interpolate ``(1 + y)^w v`` linearly and divide the weight back out (0 past the grid)."""
    if not tail_exponent:
        return np.interp(z, grid, values, right=0.0)
    w = tail_exponent
    return np.interp(z, grid, (1 + grid) ** w * values, right=0.0) / (1 + np.asarray(z)) ** w


def transfer_matrix_by_branch(target, grid, *, below: str = "constant", tail_exponent: float = 0.0) -> dict:
    grid = np.asarray(grid, dtype=float)
    n = grid.size
    p = target.p
    out = {}
    for j, img, w in preimages(target, grid):
        rows, cols, vals = [], [], []
        low = img < grid[0]
        high = ~(img <= grid[-1])
        mid = ~low & ~high
        i_mid = np.nonzero(mid)[0]
        z = img[mid]
        k = np.clip(np.searchsorted(grid, z, side="right") - 1, 0, n - 2)
        t = (z - grid[k]) / (grid[k + 1] - grid[k])
        lw, rw = w[mid] * (1 - t), w[mid] * t
        if below == "power":
            # interpolate x^p v rather than v: exact for pure power laws
            lw = lw * (grid[k] / z) ** p
            rw = rw * (grid[k + 1] / z) ** p
        if tail_exponent:
            lw = lw * ((1 + grid[k]) / (1 + z)) ** tail_exponent
            rw = rw * ((1 + grid[k + 1]) / (1 + z)) ** tail_exponent
        rows += [i_mid, i_mid]
        cols += [k, k + 1]
        vals += [lw, rw]
        if low.any():
            i_low = np.nonzero(low)[0]
            factor = (grid[0] / img[low]) ** p if below == "power" and grid[0] > 0 else 1.0
            rows.append(i_low)
            cols.append(np.zeros(i_low.size, dtype=int))
            vals.append(w[low] * factor)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        out[j] = sparse.csr_matrix((v, (r, c)), shape=(n, n))
    return out


def pf_apply(target, g, mode: str = "Exact", grid=None) -> GridFunction:
    """One application of ``P``, sampled on ``grid`` (default: the grid of ``g``)."""
    if grid is None:
        if not isinstance(g, GridFunction):
            raise ValueError("grid required when g is a plain callable")
        grid = g.grid
    grid = np.asarray(grid, dtype=float)
    if mode == "Exact":
        return GridFunction(grid, pf_callable(target, g)(grid), _space(target))
    if mode == "Grid":
        if not isinstance(g, GridFunction):
            g = GridFunction(grid, g(grid), _space(target))
        A = transfer_matrix(target, g.grid)
        return GridFunction(g.grid, A @ g.values, _space(target))
    raise ValueError(f"unknown mode {mode!r}")


def pf_iterates(target, g: GridFunction, n: int) -> list[GridFunction]:
    """``g, P g, ..., P^n g`` in Grid mode (one matrix, reused)."""
    A = transfer_matrix(target, g.grid)
    out = [g]
    for _ in range(n):
        out.append(GridFunction(g.grid, A @ out[-1].values, g.space))
    return out


def l1_norm(target, g, tol: float = 1e-10, breakpoints=None) -> float:
    """``int |g| dleb`` by adaptive quadrature over the whole space."""
    if isinstance(target, HalfLineMap) or target == HALF_LINE:
        head = gk_integrate(lambda y: np.abs(g(y)), 0.0, 1.0, rtol=tol, breakpoints=[b for b in (breakpoints or []) if b < 1]).value

        def tail(x):
            return np.abs(g(psi(x, 1.0))) * x**-2.0

        cuts = [psi_inv(b, 1.0) for b in (breakpoints or []) if b > 1]
        return head + gk_integrate(tail, 0.0, 0.5, rtol=tol, breakpoints=cuts, log_split=False).value
    return gk_integrate(lambda x: np.abs(g(x)), 0.0, 1.0, rtol=tol, breakpoints=breakpoints, log_split=False).value


# ---------------------------------------------------------------------------
# indicator formula


@dataclass(frozen=True)
class IndicatorImage:
    """``P 1_[0,a]``: ``left(y)`` for ``y < b`` and ``right(y)`` for ``y >= b``."""

    hmap: HalfLineMap
    a: float
    j: int
    b: float

    def tail(self, start: int, y):
        y = np.asarray(y, dtype=float)
        total = np.zeros(y.shape)
        for k, _, w in preimages(self.hmap, y):
            if k >= start:
                total = total + w
        return total

    def left(self, y):
        return self.tail(self.j, y)

    def right(self, y):
        return self.tail(self.j + 1, y)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y < self.b, self.left(y), self.right(y))
        return float(out) if out.ndim == 0 else out

    def jump(self) -> float:
        """Size of the drop at ``b``: ``psi_{o,j}'(b)``."""
        return float(conjugate_inverse_branch_derivative(self.hmap.source, self.j, self.b))


def pf_indicator(hmap: HalfLineMap, a: float) -> IndicatorImage:
    """``P 1_[0,a] (y)`` as a sum over the branches whose half-line cell meets [0, a]."""
    if not a > 0:
        raise ValueError("a must be positive")
    j = int(hmap.branch_index(a))
    b = float(hmap.eval(a))
    return IndicatorImage(hmap, float(a), j, b)


# ---------------------------------------------------------------------------
# cone of decreasing functions


def halfline_grid(hmap: HalfLineMap, n: int = 4000, lo: float = 1e-8) -> np.ndarray:
    """0 plus a geometric grid up to ``y_max``, with a uniform stretch on [0, 64]."""
    return np.union1d(geometric_grid(lo, hmap.y_max, n, include_zero=True), np.linspace(0.0, 64.0, 257))


@dataclass
class ConeReport:
    passed: bool
    worst_violation: float
    iterates: int
    failures: list = field(default_factory=list)


def check_cone_preservation(hmap: HalfLineMap, g: GridFunction, n: int, tol: float | None = None) -> ConeReport:
    """Apply ``P`` ``n`` times in Grid mode; every iterate must be non-increasing.

    The default tolerance is 1e-8 times the largest value of each iterate.
    """
    worst = -math.inf
    failures = []
    for k, it in enumerate(pf_iterates(hmap, g, n)):
        if k == 0:
            continue
        rise = it.worst_increase()
        limit = tol if tol is not None else 1e-8 * float(np.max(np.abs(it.values)))
        worst = max(worst, rise)
        if rise > limit:
            failures.append(k)
    return ConeReport(not failures, max(worst, 0.0) if n else 0.0, n, failures)


# ---------------------------------------------------------------------------
# invariant density


@dataclass
class DensityEstimate:
    h: GridFunction
    H: GridFunction
    diagnostics: dict


def density_grid(n: int = 4000, x_min: float | None = None, *, m: IntervalMap | None = None) -> np.ndarray:
    """Geometric grid on [x_min, 1] with a uniform stretch and the point 1/2.

    Without ``x_min`` the floor is 1e-10, raised for ``m`` so that
    ``kappa x_min^p >= 1e-12``: below that, branch 0 is the identity in
    floating point and the accelerated solve is singular.
    """
    if x_min is None:
        x_min = 1e-10 if m is None else max(1e-10, (1e-12 / m.kappa) ** (1.0 / m.p))
    return np.union1d(geometric_grid(x_min, 1.0, n, uniform_tail=n // 4), [0.5])


def _normalize(grid, v):
    w = grid >= 0.5
    return v / np.trapezoid(v[w], grid[w])


def estimate_invariant_density(
    m: IntervalMap,
    n: int = 60,
    grid=None,
    *,
    method: str = "accelerated",
    delta: float = 1e-3,
    tol: float = 1e-13,
) -> DensityEstimate:
    """Invariant density of ``m`` from ``h_0 = 1``, normalized by ``int_{1/2}^1 h = 1``.

    ``method='power'`` iterates ``h <- P h``.  ``method='accelerated'`` iterates
    ``h <- (I - P_0)^-1 P_rest h`` where ``P_0`` is the branch-0 part of ``P``;
    both have the same fixed points, but the accelerated map fills the
    ``x^-p`` profile near 0 in a handful of steps instead of thousands.
    Iteration stops early once successive ``H = x^p h`` differ by < ``tol``
    on ``[delta, 1]``.
    """
    grid = density_grid(m=m) if grid is None else np.asarray(grid, dtype=float)
    parts = transfer_matrix_by_branch(m, grid, below="power")
    A0 = parts[0].tocsr()
    rest = sum(v for k, v in parts.items() if k != 0)
    if method == "accelerated":
        lower = (sparse.identity(grid.size, format="csr") - A0).tocsr()

        def step(v):
            return spsolve_triangular(lower, rest @ v, lower=True)

    elif method == "power":
        full = A0 + rest

        def step(v):
            return full @ v

    else:
        raise ValueError(f"unknown method {method!r}")

    xp = grid**m.p
    window = grid >= delta
    h = _normalize(grid, np.ones(grid.size))
    variations = []
    for _ in range(n):
        new = _normalize(grid, step(h))
        variations.append(float(np.max(np.abs((new - h)[window] * xp[window]))))
        h = new
        if variations[-1] < tol:
            break
    last = variations[-11:]
    converged = bool(variations) and (variations[-1] < 1e-10 or (len(last) == 11 and last[-1] < last[0]))
    H = xp * h
    diagnostics = {
        "method": method,
        "iterations": len(variations),
        "variation": variations,
        "NonConvergence": not converged,
        "min_H": float(H[grid >= 1e-4].min()),
        "H0_extrapolated": float(H[0]),
        "H0_error": float(abs(H[1] - H[0])),
        "delta": delta,
    }
    return DensityEstimate(GridFunction(grid, h), GridFunction(grid, H), diagnostics)


def relative_oscillation(H: GridFunction, lo: float = 1e-3, hi: float = 1e-1) -> float:
    """``(max - min) / max`` of ``H`` over grid points in ``[lo, hi]``."""
    v = H.values[(H.grid >= lo) & (H.grid <= hi)]
    return float((v.max() - v.min()) / v.max())


# ---------------------------------------------------------------------------
# truncation and generalized inverse


def gamma_truncate(g: GridFunction, M: float) -> GridFunction:
    """``min(g(M), g)``: constant on [0, M], equal to ``g`` beyond.

    ``M`` is inserted into the grid.  For ``M`` at or past the end of the grid
    there is nothing to the right of ``M`` to keep, and ``g`` is returned unchanged.
    """
    if M >= g.grid[-1] or M <= g.grid[0]:
        return g.copy()
    gm = float(g(M))
    grid = np.union1d(g.grid, [M])
    vals = np.minimum(g(grid), gm)
    return GridFunction(grid, vals, g.space)


def generalized_inverse(gf: GridFunction, r: float, *, step: bool = False, full: bool = False):
    """``inf { y : gf(y) <= r }`` for non-increasing ``gf``.

    ``gf`` is read as its piecewise-linear interpolant, or with ``step=True`` as
    the right-continuous step function taking ``values[i]`` on ``[grid[i], grid[i+1])``.
    When ``r`` is below every value the right end of the grid is returned;
    ``full=True`` returns ``(value, truncated)``.
    """
    y, v = gf.grid, gf.values
    truncated = False
    below = np.nonzero(v <= r)[0]
    if below.size == 0:
        out, truncated = float(y[-1]), True
    elif below[0] == 0:
        out = float(y[0])
    elif step:
        out = float(y[below[0]])
    else:
        i = below[0]
        t = (v[i - 1] - r) / (v[i - 1] - v[i])
        out = float(y[i - 1] + t * (y[i] - y[i - 1]))
    return (out, truncated) if full else out


def fubini_diagnostic(F, gamma: GridFunction, M: float, tol: float = 1e-9) -> dict:
    """Compare ``int F gamma dleb`` with ``(eps/2) ||gamma||_1``.

    ``eps/2`` is the largest running average ``|int_0^a F| / a`` over grid
    points ``a >= M``; the layer-cake form ``int_0^{gamma(M)} int_0^{gamma^-1(r)} F dy dr``
    is reported alongside the direct integral.
    """
    y = gamma.grid
    cuts = list(F.cuts(0.0, float(y[-1]))) if hasattr(F, "cuts") else []
    pieces = np.zeros(y.size - 1)
    for i in range(y.size - 1):
        bps = [c for c in cuts if y[i] < c < y[i + 1]]
        pieces[i] = gk_integrate(lambda t: F(t), y[i], y[i + 1], rtol=tol, atol=1e-300, breakpoints=bps).value
    A = np.concatenate([[0.0], np.cumsum(pieces)])
    direct = gk_integrate(lambda t: F(t) * gamma(t), 0.0, float(y[-1]), rtol=tol, breakpoints=sorted(set(cuts) | set(y.tolist()))).value
    sel = (y >= M) & (y > 0)
    half_eps = float(np.max(np.abs(A[sel]) / y[sel])) if sel.any() else math.inf
    # layer cake: r runs over the values of gamma, y = gamma^-1(r) over the grid
    r = np.concatenate([[0.0], gamma.values[::-1]])
    layered = float(np.trapezoid(np.concatenate([[A[-1]], A[::-1]]), r))
    norm = gamma.l1_norm()
    return {
        "direct": direct,
        "layer_cake": layered,
        "half_eps": half_eps,
        "bound": half_eps * norm,
        "l1": norm,
        "holds": abs(direct) <= half_eps * norm + 10 * tol * max(1.0, norm),
    }
