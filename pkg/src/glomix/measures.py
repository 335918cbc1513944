"""Measures infinite at one end, observables, and infinite-volume averages.

Interval measures (on (0, 1]) are infinite at 0; half-line measures (on
[0, inf)) are locally finite and infinite at infinity.  Integrals against
a density singular at 0 are computed after the substitution ``u = Psi(x)``,
which turns ``x^(-p-1) dx`` into ``du``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NonIntegrable, SingularMass
from .quadrature import gk_integrate

UNIT_INTERVAL = "UnitInterval"
HALF_LINE = "HalfLine"


class InfiniteMass:
    """Tag for the infinite mass of a neighbourhood of the singular end.

    Deliberately not a float: arithmetic on it fails loudly.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE_MASS"

    def __bool__(self):
        return True


INFINITE_MASS = InfiniteMass()


def is_infinite(mass) -> bool:
    return mass is INFINITE_MASS


@dataclass(frozen=True)
class MeasureSpec:
    """A Lebesgue-absolutely continuous measure.

    ``kind`` is one of Lebesgue, NuP, LambdaQ, EstimatedMu, Pushforward.
    ``p`` is the singular index at 0 for interval measures (used for the
    quadrature substitution); ``param`` holds ``p`` for NuP and ``q`` for LambdaQ.
    """

    kind: str
    space: str
    density: Callable[[np.ndarray], np.ndarray]
    param: float | None = None
    p: float | None = None
    base: "MeasureSpec | None" = None
    grid: object = None
    label: str = ""

    @property
    def singular_at_zero(self) -> bool:
        return self.space == UNIT_INTERVAL and self.kind != "Lebesgue"

    def __repr__(self):
        return f"MeasureSpec({self.label or self.kind})"


def lebesgue(space: str = UNIT_INTERVAL) -> MeasureSpec:
    return MeasureSpec("Lebesgue", space, lambda x: np.ones_like(np.asarray(x, dtype=float)), label=f"leb[{space}]")


def nu_p(p: float) -> MeasureSpec:
    """Density ``x^(-p-1)`` on (0, 1]."""
    if not p >= 1:
        raise DomainError("nu_p needs p >= 1")
    return MeasureSpec("NuP", UNIT_INTERVAL, lambda x: np.asarray(x, dtype=float) ** (-p - 1), param=p, p=p, label=f"nu_{p:g}")


def lambda_q(q: float) -> MeasureSpec:
    """Density ``(1 + y)^(-q)`` on [0, inf), ``0 < q <= 1``."""
    if not 0 < q <= 1:
        raise DomainError("lambda_q needs 0 < q <= 1")
    return MeasureSpec("LambdaQ", HALF_LINE, lambda y: (1.0 + np.asarray(y, dtype=float)) ** (-q), param=q, label=f"lambda_{q:g}")


def estimated_mu(h, p: float) -> MeasureSpec:
    """Invariant measure from a sampled density ``h``.

    Interpolates ``H(x) = x^p h(x)`` linearly and extends it as a constant
    below the grid, so the density keeps its ``x^(-p)`` singularity.
    """
    H = np.asarray(h.grid) ** p * np.asarray(h.values)
    xs = np.asarray(h.grid)

    def dens(x):
        x = np.asarray(x, dtype=float)
        return np.interp(x, xs, H, left=H[0], right=H[-1]) * x ** (-p)

    return MeasureSpec("EstimatedMu", UNIT_INTERVAL, dens, p=p, grid=h, label="mu_est")


def _check_bounds(measure: MeasureSpec, a: float, b: float) -> None:
    if not (a <= b) or a < 0 or math.isnan(a) or math.isnan(b):
        raise DomainError(f"need 0 <= a <= b, got [{a}, {b}]")
    if measure.space == UNIT_INTERVAL and b > 1:
        raise DomainError("interval measures live on (0, 1]")


def interval_mass(measure: MeasureSpec, a: float, b: float):
    """``measure([a, b])``; INFINITE_MASS when the interval reaches the singular end."""
    a, b = float(a), float(b)
    _check_bounds(measure, a, b)
    if a == b:
        return 0.0
    kind = measure.kind
    if measure.space == HALF_LINE and math.isinf(b):
        return INFINITE_MASS
    if kind == "Lebesgue":
        return b - a
    if kind == "NuP":
        if a == 0:
            return INFINITE_MASS
        p = measure.param
        # a^-p (1 - (a/b)^p) / p without cancellation
        return -(a ** -p) * math.expm1(p * math.log(a / b)) / p
    if kind == "LambdaQ":
        q = measure.param
        t = math.log1p((b - a) / (1.0 + a))
        if q == 1:
            return t
        return (1.0 + a) ** (1.0 - q) * math.expm1((1.0 - q) * t) / (1.0 - q)
    if measure.singular_at_zero and a == 0:
        return INFINITE_MASS
    return integrate(measure, None, a, b)


def _psi(x, p):
    from .halfline import psi

    return psi(x, p)


def _psi_inv(y, p):
    from .halfline import psi_inv

    return psi_inv(y, p)


_SUBST_CUT = 0.25


def integrate(measure: MeasureSpec, f, a: float, b: float, tol: float = 1e-10, breakpoints=None, tail_p: float = 1.0) -> float:
    """``int_a^b f d(measure)``; ``f=None`` integrates the constant 1.

    On the half-line ``b`` may be ``inf``: the tail is mapped back to a
    bounded interval with ``y = Psi_{tail_p}(x)``.  For interval measures
    singular at 0, ``a = 0`` is handled by dyadic exhaustion and raises
    NonIntegrable if the pieces do not become summable.
    """
    a, b = float(a), float(b)
    _check_bounds(measure, a, b)
    if a == b:
        return 0.0
    one = f is None
    fn = (lambda x: np.ones_like(x)) if one else f
    dens = measure.density
    bps = list(breakpoints) if breakpoints is not None else []

    if measure.space == HALF_LINE:
        if math.isinf(b):
            head = integrate(measure, f, a, max(a, 1.0), tol, bps) if a < 1.0 else 0.0
            start = max(a, 1.0)
            x_hi = float(_psi_inv(start, tail_p))

            def tail(x):
                with np.errstate(over="ignore", divide="ignore"):
                    y = _psi(x, tail_p)
                # y = inf only for subnormal x: a null set
                fin = np.isfinite(y)
                v = np.zeros(np.shape(y))
                v[fin] = fn(y[fin]) * dens(y[fin])
                # v x^(-p-1) in log space: v can underflow while x^(-p-1) overflows
                nz = v != 0
                out = np.zeros(v.shape)
                out[nz] = np.sign(v[nz]) * np.exp(np.log(np.abs(v[nz])) - (tail_p + 1) * np.log(x[nz]))
                return out

            tbps = [float(_psi_inv(c, tail_p)) for c in bps if c > start]
            res = gk_integrate(tail, 0.0, x_hi, rtol=tol, breakpoints=tbps, log_split=False)
            return head + res.value
        return gk_integrate(lambda y: fn(y) * dens(y), a, b, rtol=tol, breakpoints=bps).value

    if not measure.singular_at_zero:
        return gk_integrate(lambda x: fn(x) * dens(x), a, b, rtol=tol, breakpoints=bps, log_split=False).value

    p = measure.p
    if a == 0:
        return _integrate_from_zero(measure, f, b, tol, bps)
    cut = min(b, max(a, _SUBST_CUT))
    total = 0.0
    if cut > a:
        # u = Psi(x):  x^(-p-1) dx = -du
        def g(u):
            x = _psi_inv(u, p)
            return fn(x) * dens(x) * x ** (p + 1)

        ubps = [float(_psi(c, p)) for c in bps if a < c < cut]
        total += gk_integrate(g, float(_psi(cut, p)), float(_psi(a, p)), rtol=tol, breakpoints=ubps).value
    if b > cut:
        total += gk_integrate(lambda x: fn(x) * dens(x), cut, b, rtol=tol, breakpoints=[c for c in bps if cut < c < b], log_split=False).value
    return total


def _integrate_from_zero(measure, f, b, tol, bps, max_pieces=400):
    if f is None:
        raise NonIntegrable("the constant 1 is not integrable at 0 against a measure infinite at 0")
    start = min(b, 0.5)
    total = integrate(measure, f, start, b, tol, bps) if b > start else 0.0
    hi = start
    small = 0
    for _ in range(max_pieces):
        lo = hi / 2
        piece = integrate(measure, f, lo, hi, tol, bps)
        total += piece
        hi = lo
        if abs(piece) <= tol * max(abs(total), 1e-300):
            small += 1
            if small >= 3:
                return total
        else:
            small = 0
        if lo < 1e-280:
            break
    raise NonIntegrable("integral does not converge at 0", partial=total)


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """Real function with a role: Global (bounded) or Local (integrable)."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    role: str = "Global"
    bound: float | None = None
    known_average: float | None = None
    name: str = "custom"
    breakpoints: Callable[[float, float], list] | None = None

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    def cuts(self, a, b) -> list:
        return list(self.breakpoints(a, b)) if self.breakpoints else []


def constant(c: float) -> Observable:
    c = float(c)
    return Observable(lambda x: np.full_like(x, c, dtype=float), bound=abs(c), known_average=c, name=f"constant:{c:g}")


def identity() -> Observable:
    return Observable(lambda x: np.asarray(x, dtype=float), bound=1.0, name="identity")


def indicator(a: float, b: float, role: str = "Local") -> Observable:
    """``1_[a, b]``."""
    a, b = float(a), float(b)
    return Observable(
        lambda x: ((x >= a) & (x <= b)).astype(float),
        role=role,
        bound=1.0,
        name=f"box:{a:g},{b:g}",
        breakpoints=lambda lo, hi: [c for c in (a, b) if lo < c < hi],
    )


def piecewise_constant(breaks: Sequence[float], values: Sequence[float], name="table") -> Observable:
    """Value ``values[i]`` on ``[breaks[i], breaks[i+1])``; the last value extends to the right, 0 to the left."""
    br = np.asarray(breaks, dtype=float)
    vals = np.asarray(values, dtype=float)
    if br.shape != vals.shape or np.any(np.diff(br) <= 0):
        raise ValueError("table needs strictly increasing breakpoints with one value each")

    def ev(x):
        i = np.searchsorted(br, x, side="right") - 1
        return np.where(i >= 0, vals[np.clip(i, 0, None)], 0.0)

    return Observable(
        ev,
        bound=float(np.max(np.abs(vals))),
        name=name,
        breakpoints=lambda lo, hi: [c for c in br if lo < c < hi],
    )


def table_observable(path) -> Observable:
    """Piecewise-constant observable from a CSV with columns ``breakpoint,value``."""
    with Path(path).open() as fh:
        rows = [r for r in csv.DictReader(fh)]
    return piecewise_constant([float(r["breakpoint"]) for r in rows], [float(r["value"]) for r in rows], name=f"table:{path}")


def _kk_thresholds(ymax: float) -> list[int]:
    # k^k for k = 1.. until it exceeds ymax + 1
    out = []
    k = 1
    while True:
        out.append(k**k)
        if k**k > ymax + 1:
            return out
        k += 1


def _float_or_inf(v: int) -> float:
    try:
        return float(v)
    except OverflowError:
        return math.inf


def counterexample_F(y):
    """1 on ``[k^k - 1, 2 k^k - 1)`` for some ``k >= 1``, else 0."""
    arr = np.asarray(y, dtype=float)
    if np.any(~(arr >= 0)) or np.any(np.isinf(arr)):
        raise DomainError("counterexample_F lives on [0, inf)")
    if arr.ndim == 0:
        yv = float(arr)
        k = 1
        while (k + 1) ** (k + 1) <= yv + 1:
            k += 1
        return 1.0 if yv + 1 < 2 * k**k else 0.0
    if arr.size == 0:
        return arr.copy()
    kk = np.array([_float_or_inf(v) for v in _kk_thresholds(float(arr.max()))])
    k = np.searchsorted(kk, arr + 1.0, side="right")
    with np.errstate(over="ignore"):
        return (arr + 1.0 < 2.0 * kk[np.clip(k - 1, 0, None)]).astype(float)


def counterexample_breakpoints(lo: float, hi: float) -> list[float]:
    pts = []
    k = 1
    while k**k - 1 < hi:
        for c in (k**k - 1, 2 * k**k - 1):
            if lo < c < hi:
                pts.append(float(c))
        k += 1
    return pts


def counterexample_kk() -> Observable:
    return Observable(counterexample_F, bound=1.0, name="counterexample_kk", breakpoints=counterexample_breakpoints)


def on_interval(obs: Observable, p: float) -> Observable:
    """Transport a half-line observable to (0, 1] through ``Psi``."""

    def ev(x):
        return obs(_psi(np.asarray(x, dtype=float), p))

    def bps(lo, hi):
        if obs.breakpoints is None:
            return []
        ulo = float(_psi(hi, p)) if hi > 0 else 0.0
        uhi = float(_psi(lo, p)) if lo > 0 else math.inf
        if math.isinf(uhi):
            uhi = 1e300
        return sorted(float(_psi_inv(c, p)) for c in obs.cuts(ulo, uhi))

    return Observable(ev, role=obs.role, bound=obs.bound, known_average=obs.known_average, name=f"{obs.name}@Psi", breakpoints=bps)


# ---------------------------------------------------------------------------
# averages


def finite_volume_average(measure: MeasureSpec, F: Observable, a: float, tol: float = 1e-10) -> float:
    """``(1/nu(box)) int_box F d nu`` with box ``[a, 1]`` (interval) or ``[0, a]`` (half-line)."""
    if measure.space == UNIT_INTERVAL:
        lo, hi = float(a), 1.0
    else:
        lo, hi = 0.0, float(a)
    mass = interval_mass(measure, lo, hi)
    if is_infinite(mass):
        raise SingularMass("box reaches the singular end")
    if mass == 0:
        raise DomainError("empty box")
    num = integrate(measure, F, lo, hi, tol, breakpoints=F.cuts(lo, hi))
    return num / mass


@dataclass
class GlobalAverage:
    value: float
    converged: bool
    trace: list = field(default_factory=list)
    a_sequence: list = field(default_factory=list)


def default_a_sequence(space: str, count: int = 40) -> list[float]:
    if space == UNIT_INTERVAL:
        return [2.0**-k for k in range(1, count + 1)]
    return [2.0**k for k in range(1, count + 1)]


def estimate_global_average(measure: MeasureSpec, F: Observable, a_sequence=None, tol: float = 1e-6, window: int = 5, quad_tol: float = 1e-10) -> GlobalAverage:
    """Finite-volume averages along ``a_sequence``; converged iff the last
    ``window`` values lie within ``tol`` of their mean."""
    seq = list(a_sequence) if a_sequence is not None else default_a_sequence(measure.space)
    trace = [finite_volume_average(measure, F, a, quad_tol) for a in seq]
    tail = trace[-window:]
    mean = math.fsum(tail) / len(tail)
    converged = len(trace) >= window and all(abs(v - mean) <= tol for v in tail)
    return GlobalAverage(mean, converged, trace, seq)


def counterexample_averages(n: int, exact: bool = False) -> dict:
    """Closed-form box averages of the k^k observable at ``a = alpha_n`` and ``a = beta_n``.

    ``alpha_n = n^n - 1``, ``beta_n = 2 n^n - 1``.  Integer arithmetic is exact
    for any ``n``; ``exact=True`` returns the Lebesgue averages as Fractions.
    """
    if n < 2:
        raise DomainError("n >= 2 required")
    s_prev = sum(k**k for k in range(1, n))
    nn = n**n
    leb_alpha = Fraction(s_prev, nn - 1)
    leb_beta = Fraction(s_prev + nn, 2 * nn - 1)
    log2, logn = math.log(2.0), math.log(n)
    out = {
        "leb_at_alpha": leb_alpha if exact else leb_alpha.numerator / leb_alpha.denominator,
        "leb_at_beta": leb_beta if exact else leb_beta.numerator / leb_beta.denominator,
        "lambda1_at_alpha": (n - 1) * log2 / (n * logn),
        "lambda1_at_beta": n * log2 / (log2 + n * logn),
    }
    return out
