"""Numerical checks of the standing assumptions (A2)-(A5), (A5)' and (B3).

Each check returns a CheckReport.  A failed report always carries a witness
point at which the violated inequality can be re-evaluated.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .maps import (
    TAIL_CUTOFF,
    IntervalMap,
    PerturbationSpec,
    inverse_branch,
    inverse_branch_derivative,
    map_derivative,
    map_second_derivative,
)

ASSUMPTIONS = ("A1", "A2", "A3", "A4", "A5", "A5prime", "B3")
MONOTONE_TOL = 1e-10
DEFAULT_J_MAX = 64
_EPS = np.finfo(float).eps


@dataclass
class CheckReport:
    assumption_id: str
    passed: bool
    witness: float | None = None
    estimate: float | None = None
    grid_size: int = 0
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.assumption_id not in ASSUMPTIONS:
            raise ValueError(f"unknown assumption id {self.assumption_id!r}")
        if not self.passed and self.witness is None:
            raise ValueError("a failed report needs a witness")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("witness", "estimate"):
            v = d[key]
            if v is not None and not math.isfinite(v):
                d[key] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _first_drop(values: np.ndarray, tol: float = MONOTONE_TOL):
    """Index ``i`` of the first ``values[i+1] < values[i] - tol * max(1, |values[i]|)``, or None."""
    d = np.diff(values)
    scale = np.maximum(1.0, np.abs(values[:-1]))
    bad = np.nonzero(d < -tol * scale)[0]
    return int(bad[0]) if bad.size else None


# ---------------------------------------------------------------------------
# (A2)


def a2_ratios(m: IntervalMap, ks) -> tuple[np.ndarray, np.ndarray]:
    """Remainder ratios ``|phi_0(x) - x - kappa x^(p+1)| / x^(p+1)`` at ``x = 2^-k``,
    with a rounding-noise floor for each ratio."""
    x = 2.0 ** -np.asarray(ks, dtype=float)
    scale = x ** (m.p + 1)
    if m.remainder is not None:
        r = np.abs(m.remainder(x)) / scale
        noise = np.zeros_like(r)
    else:
        phi = m.branch(0).forward(x)
        main = x + m.kappa * scale
        r = np.abs(phi - main) / scale
        noise = 4 * _EPS * (np.abs(phi) + main) / scale
    return r, noise


def check_A2(m: IntervalMap, n_dyadic: int = 20, grid_size: int = 10_000) -> CheckReport:
    """Dyadic decay of the remainder plus strict convexity of branch 0 on (0, b_o].

    Only a finite stretch of the asymptotic statement is checked; the fitted
    decay exponent (``r_k ~ 2^(-estimate k)``) is reported.
    """
    if n_dyadic < 8:
        raise ValueError("n_dyadic >= 8 required")
    ks = np.arange(4, n_dyadic + 1)
    xs = 2.0 ** -ks.astype(float)
    r, noise = a2_ratios(m, ks)
    r_eff = np.where(r <= noise, 0.0, r)
    detail = {"k": ks.tolist(), "ratios": r.tolist()}

    witness = None
    rise = np.nonzero(r_eff[1:] > r_eff[:-1] + noise[1:] + 1e-300)[0]
    decreasing = rise.size == 0
    if not decreasing:
        witness = float(xs[rise[0] + 1])
    to_zero = r_eff[-1] == 0.0 or r_eff[-1] <= 0.75 * r_eff[0]
    if not to_zero and witness is None:
        witness = float(xs[-1])

    grid = np.geomspace(m.b_o * 1e-8, m.b_o, grid_size)
    d2 = m.branch(0).second_derivative(grid)
    convex = bool(np.all(d2 > 0))
    if not convex and witness is None:
        witness = float(grid[np.argmin(d2)])

    pos = r_eff > 0
    estimate = None
    if pos.sum() >= 2:
        slope = np.polyfit(ks[pos], np.log2(r_eff[pos]), 1)[0]
        estimate = float(-slope)
    detail.update(decreasing=decreasing, to_zero=bool(to_zero), convex=convex)
    return CheckReport("A2", decreasing and bool(to_zero) and convex, witness, estimate, int(grid_size), detail)


# ---------------------------------------------------------------------------
# (A3), (A4)


def _drop_endpoints(m: IntervalMap, x: np.ndarray) -> np.ndarray:
    ends = m._endpoints_covering(float(x[x < 1].max()) if (x < 1).any() else 0.0)
    keep = ~np.isin(x, ends) & (x < 1.0)
    return x[keep]


def check_A3(m: IntervalMap, grid_size: int = 10_000) -> CheckReport:
    """``min T'`` on ``[b_o, 1)`` away from the cell endpoints must exceed 1."""
    x = _drop_endpoints(m, np.linspace(m.b_o, 1.0, grid_size + 1)[:-1])
    x = np.union1d(x, [m.b_o])
    d = map_derivative(m, x)
    i = int(np.argmin(d))
    est = float(d[i])
    passed = est > 1 + 1e-9
    return CheckReport("A3", passed, None if passed else float(x[i]), est, int(x.size))


def check_A4(m: IntervalMap, grid_size: int = 10_000, decades: int = 12) -> CheckReport:
    """Bounded distortion ``|T''| / T'^2 <= K``, sampled on a geometric grid
    accumulating at 0; passes when the running sup over the last decade moves < 1%."""
    geo = np.geomspace(10.0**-decades, 1.0, grid_size)
    x = _drop_endpoints(m, np.union1d(geo, np.linspace(0.0, 1.0, grid_size)[1:]))
    ratio = np.abs(map_second_derivative(m, x)) / map_derivative(m, x) ** 2
    if not np.all(np.isfinite(ratio)):
        i = int(np.nonzero(~np.isfinite(ratio))[0][0])
        return CheckReport("A4", False, float(x[i]), math.inf, int(x.size))
    sups = [float(ratio[x >= 10.0**-d].max()) for d in range(1, decades + 1)]
    last, prev = sups[-1], sups[-2]
    stable = last == 0 or (last - prev) / last < 0.01
    i = int(np.argmax(np.where(x < 10.0 ** -(decades - 1), ratio, -1)))
    return CheckReport("A4", stable, None if stable else float(x[i]), float(ratio.max()), int(x.size), {"decade_sups": sups})


# ---------------------------------------------------------------------------
# (A5)'


def a5prime_quantity(m: IntervalMap, j: int, x) -> np.ndarray:
    """``(phi_j(x) / x)^(p+1) / phi_j'(x)``."""
    b = m.branch(j)
    x = np.asarray(x, dtype=float)
    return (b.forward(x) / x) ** (m.p + 1) / b.derivative(x)


def _cell_grid(lo, hi, n):
    t = np.geomspace(1e-10, 1.0, n)
    t = np.union1d(t, np.linspace(0.0, 1.0, n)[1:])
    x = lo + t * (hi - lo)
    return np.unique(x[(x > lo) & (x < hi)])


def _branch_range(m: IntervalMap, j_max: int):
    return m.branch_indices(j_max)


def check_A5prime(m: IntervalMap, j: int | None = None, grid_size: int = 10_000, j_max: int = DEFAULT_J_MAX) -> CheckReport:
    """Monotonicity of the (A5)' quantity on cell ``j``, or on every cell up to ``j_max``."""
    js = [j] if j is not None else list(_branch_range(m, j_max))
    worst = 0.0
    checked = 0
    for jj in js:
        b = m.branch(jj)
        x = _cell_grid(b.lower, b.upper, grid_size)
        if x.size < 2:
            # cell below float resolution
            break
        G = a5prime_quantity(m, jj, x)
        d = np.diff(G) / np.maximum(1.0, np.abs(G[:-1]))
        worst = min(worst, float(d.min()))
        k = _first_drop(G)
        checked += 1
        if k is not None:
            return CheckReport("A5prime", False, float(x[k + 1]), float(d.min()), int(x.size), {"branch": jj})
    return CheckReport("A5prime", True, None, worst, grid_size, {"branches": checked})


def check_A5prime_pm_closed_form(kappa: float, p: float, j: int, z):
    """Closed-form log-derivative in ``z = kappa x^p`` of the (A5)' quantity of a
    generalized PM branch; positive wherever it is defined."""
    z = np.asarray(z, dtype=float)
    c = j * kappa ** (1.0 / p)
    bracket = 1.0 + z - c * z ** (-1.0 / p)
    if np.any(z <= 0) or np.any(bracket <= 0):
        raise DomainError("need z > kappa a_j^p (x inside the cell)")
    num = p * z + c * z ** (-1.0 / p) * (1.0 / z + 2 * p + 1) / p
    out = (p + 1) * num / (bracket * (1.0 + (p + 1) * z))
    return float(out) if out.ndim == 0 else out


def pm_a5prime_in_z(kappa: float, p: float, j: int, z):
    """The (A5)' quantity of a PM branch written in ``z = kappa x^p``."""
    z = np.asarray(z, dtype=float)
    c = j * kappa ** (1.0 / p)
    return (1.0 + z - c * z ** (-1.0 / p)) ** (p + 1) / (1.0 + (p + 1) * z)


# ---------------------------------------------------------------------------
# (A5)


def branch_terms(m: IntervalMap, xi: np.ndarray, j_max: int = DEFAULT_J_MAX):
    """Rows ``(xi / psi_k(xi))^(p+1) psi_k'(xi)`` for k = 0, 1, ...

    Finite maps give every branch.  Countable maps stop once a row falls
    below 1e-16 everywhere (after at least ``j_max + 1`` rows are available
    for the caller's tail sums, or earlier when they vanish).
    """
    rows = []
    for k in m.branch_indices():
        x = inverse_branch(m, k, xi)
        dx = inverse_branch_derivative(m, k, xi, x=x)
        t = (xi / x) ** (m.p + 1) * dx
        rows.append(t)
        if not m.finite and (np.max(np.abs(t)) < TAIL_CUTOFF or m.branch(k).upper >= 1.0):
            break
    return np.array(rows)


def tail_sums(rows: np.ndarray) -> np.ndarray:
    """``S[j] = sum_{k >= j} rows[k]``."""
    return np.cumsum(rows[::-1], axis=0)[::-1]


def a5_grid(grid_size: int) -> np.ndarray:
    xi = np.geomspace(1e-10, 1.0, grid_size)
    xi = np.union1d(xi, np.linspace(0.0, 1.0, grid_size)[1:])
    return xi[(xi > 0) & (xi < 1)]


def check_A5(m: IntervalMap, grid_size: int = 10_000, j_max: int = DEFAULT_J_MAX) -> CheckReport:
    """Every tail sum ``S_j(xi) = sum_{k>=j} (xi/psi_k)^(p+1) psi_k'`` is non-decreasing in xi."""
    xi = a5_grid(grid_size)
    rows = branch_terms(m, xi, j_max)
    S = tail_sums(rows)
    n_check = min(S.shape[0], j_max + 1)
    for j in range(n_check):
        k = _first_drop(S[j])
        if k is not None:
            return CheckReport("A5", False, float(xi[k + 1]), None, int(xi.size), {"branch": j, "branches_summed": int(rows.shape[0])})
    return CheckReport(
        "A5", True, None, None, int(xi.size), {"branches_checked": n_check, "branches_summed": int(rows.shape[0]), "j_max": j_max}
    )


# ---------------------------------------------------------------------------
# perturbations


def check_perturbation_bounds(m: IntervalMap, spec: PerturbationSpec, grid_size: int = 10_000) -> CheckReport:
    """Sufficient conditions on the perturbations ``eta_j``.

    PerturbedPM: ``|eta_0^(i)| <= eps x^(2p+1-i)`` and, for j >= 1,
    ``|eta_j^(i)| <= eps x^(p+1-i)``.  PerturbedLSV: the same for branch 0 and,
    for j >= 1, ``eta_j'' <= 0`` and ``eta_j - x eta_j' <= a_j / (a_{j+1} - a_j)``.
    ``estimate`` is the largest ``|eta| / bound`` seen.
    """
    p, eps = m.p, spec.epsilon
    eta_ratio = 0.0
    detail = {}
    for j, (e0, e1, e2) in sorted(spec.etas.items()):
        b = m.branch(j)
        x = _cell_grid(b.lower, b.upper, grid_size)
        if j == 0 or spec.kind == "PerturbedPM":
            top = 2 * p + 1 if j == 0 else p + 1
            bounds = [eps * x**top, eps * x ** (top - 1), eps * x ** (top - 2)]
            ratios = [np.abs(e(x)) / bd for e, bd in zip((e0, e1, e2), bounds)]
            eta_ratio = max(eta_ratio, float(ratios[0].max()))
            detail[f"branch_{j}"] = [float(r.max()) for r in ratios]
            for r in ratios:
                if r.max() > 1:
                    return CheckReport("A5prime", False, float(x[np.argmax(r)]), eta_ratio, int(x.size), detail)
        else:
            conc = e2(x)
            lhs = e0(x) - x * e1(x)
            rhs = b.lower / (b.upper - b.lower)
            ratio = lhs / rhs
            eta_ratio = max(eta_ratio, float(ratio.max()))
            detail[f"branch_{j}"] = [float(conc.max()), float(ratio.max())]
            if np.any(conc > 0):
                return CheckReport("A5prime", False, float(x[np.argmax(conc)]), eta_ratio, int(x.size), detail)
            if np.any(lhs > rhs):
                return CheckReport("A5prime", False, float(x[np.argmax(lhs - rhs)]), eta_ratio, int(x.size), detail)
    return CheckReport("A5prime", True, None, eta_ratio, grid_size, detail)


def check_all(m: IntervalMap, grid_size: int = 10_000, j_max: int = DEFAULT_J_MAX) -> list[CheckReport]:
    """The six reports emitted by ``glomix check``: A2, A3, A4, A5prime, A5, B3."""
    from .halfline import check_B3, conjugate

    return [
        check_A2(m, grid_size=grid_size),
        check_A3(m, grid_size),
        check_A4(m, grid_size),
        check_A5prime(m, None, grid_size, j_max),
        check_A5(m, grid_size, j_max),
        check_B3(conjugate(m), grid_size, j_max),
    ]
