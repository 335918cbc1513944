"""Conjugation of an interval map to the half-line [0, inf).

``psi(x) = (x^-p - 1) / p`` sends (0, 1] onto [0, inf) (decreasing), and
pushes ``nu_p`` forward to Lebesgue measure.  The conjugated map keeps
branch 0 as the escaping branch, now near infinity.
"""

from __future__ import annotations

import math

import numpy as np

from .checks import DEFAULT_J_MAX, CheckReport, _first_drop, a5_grid, tail_sums
from .errors import DomainError
from .maps import (
    TAIL_CUTOFF,
    IntervalMap,
    eval_map,
    inverse_branch,
    inverse_branch_derivative,
    map_derivative,
)
from .measures import HALF_LINE, UNIT_INTERVAL, MeasureSpec

X_MIN = 1e-12


def psi(x, p: float):
    """``(x^-p - 1) / p`` on (0, 1], computed as ``expm1(-p log x) / p``."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)) or np.any(arr > 1):
        raise DomainError("psi is defined on (0, 1]")
    out = np.expm1(-p * np.log(arr)) / p
    return float(out) if out.ndim == 0 else out


def psi_inv(y, p: float):
    """``(1 + p y)^(-1/p)`` on [0, inf]; ``inf`` maps to 0."""
    arr = np.asarray(y, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("psi_inv is defined on [0, inf)")
    with np.errstate(over="ignore"):
        out = np.exp(-np.log1p(p * arr) / p)
    return float(out) if out.ndim == 0 else out


def psi_derivative(x, p: float):
    """``psi'(x) = -x^(-p-1)``."""
    return -np.asarray(x, dtype=float) ** (-p - 1)


class HalfLineMap:
    """``T_o = psi o T o psi^-1`` on [0, inf).

    Cell ``j`` is ``[psi(a_{j+1}), psi(a_j))`` with ``psi(a_0) = inf``.
    ``y_max = psi(1e-12)`` is the right end of the grids used for sampled
    operators; point evaluations work for any finite ``y``.
    """

    def __init__(self, source: IntervalMap):
        self.source = source
        self.p = source.p
        self.y_max = psi(X_MIN, self.p)

    @property
    def finite(self) -> bool:
        return self.source.finite

    def endpoints(self, count: int | None = None) -> np.ndarray:
        """``inf = a^o_0 > a^o_1 > ... `` (0 last for finite maps)."""
        a = self.source.endpoints(count)
        out = np.full(a.shape, math.inf)
        out[1:] = psi(a[1:], self.p)
        return out

    def branch_index(self, y) -> np.ndarray:
        return self.source.branch_index(psi_inv(y, self.p))

    def __call__(self, y):
        return self.eval(y)

    def eval(self, y):
        x = psi_inv(y, self.p)
        t = np.asarray(eval_map(self.source, x), dtype=float)
        # T(x) = 0 only at x = 0, i.e. y = inf
        out = np.where(t > 0, psi(np.where(t > 0, t, 1.0), self.p), math.inf)
        return float(out) if out.ndim == 0 else out

    def derivative(self, y):
        x = psi_inv(y, self.p)
        t = eval_map(self.source, x)
        out = (np.asarray(x) / np.asarray(t)) ** (self.p + 1) * map_derivative(self.source, x)
        return float(out) if np.ndim(out) == 0 else out

    def inverse_branch(self, j: int, y):
        """``psi o psi_j o psi^-1``: the point of half-line cell ``j`` mapped to ``y``."""
        x = inverse_branch(self.source, j, psi_inv(y, self.p))
        return psi(x, self.p)

    def inverse_branch_derivative(self, j: int, y):
        return conjugate_inverse_branch_derivative(self.source, j, y)

    def __repr__(self):
        return f"HalfLineMap({self.source!r})"


def conjugate(m: IntervalMap) -> HalfLineMap:
    return HalfLineMap(m)


def conjugate_inverse_branch_derivative(m: IntervalMap, j: int, y, *, xi=None):
    """Derivative of the half-line inverse branch at ``y``:
    ``(psi_j(xi) / xi)^(-p-1) psi_j'(xi)`` with ``xi = psi^-1(y)``."""
    if xi is None:
        xi = psi_inv(y, m.p)
    xi = np.asarray(xi, dtype=float)
    x = inverse_branch(m, j, xi)
    out = (xi / x) ** (m.p + 1) * inverse_branch_derivative(m, j, xi, x=x)
    return float(out) if np.ndim(out) == 0 else out


def halfline_tail_terms(m: IntervalMap, y: np.ndarray) -> np.ndarray:
    """Rows ``psi'_{o,k}(y)`` for k = 0, 1, ... (truncated like the (A5) sums)."""
    xi = psi_inv(np.asarray(y, dtype=float), m.p)
    rows = []
    for k in m.branch_indices():
        t = conjugate_inverse_branch_derivative(m, k, y, xi=xi)
        rows.append(np.atleast_1d(t))
        if not m.finite and (np.max(np.abs(t)) < TAIL_CUTOFF or m.branch(k).upper >= 1.0):
            break
    return np.array(rows)


def check_B3(hm: HalfLineMap, grid_size: int = 10_000, j_max: int = DEFAULT_J_MAX) -> CheckReport:
    """Each tail sum ``sum_{k>=j} psi'_{o,k}(y)`` is non-increasing in ``y``."""
    m = hm.source
    y = np.sort(psi(a5_grid(grid_size), m.p))
    S = tail_sums(halfline_tail_terms(m, y))
    n_check = min(S.shape[0], j_max + 1)
    for j in range(n_check):
        k = _first_drop(S[j][::-1])
        if k is not None:
            # reversed index k+1 corresponds to y[-(k+2)]
            return CheckReport("B3", False, float(y[-(k + 2)]), None, int(y.size), {"branch": j})
    return CheckReport("B3", True, None, None, int(y.size), {"branches_checked": n_check, "y_max": float(y[-1])})


def pushforward_density(measure_o: MeasureSpec, p: float) -> MeasureSpec:
    """Pull a half-line measure back to (0, 1] through ``psi``:
    density ``rho(psi(x)) x^(-p-1)``."""
    if measure_o.space != HALF_LINE:
        raise DomainError("expected a half-line measure")
    rho = measure_o.density

    def dens(x):
        x = np.asarray(x, dtype=float)
        return rho(psi(x, p)) * x ** (-p - 1)

    return MeasureSpec("Pushforward", UNIT_INTERVAL, dens, p=p, base=measure_o, label=f"psi^-1_*{measure_o.label}")
