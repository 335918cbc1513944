"""Full-branch Markov maps of (0, 1] with an indifferent fixed point at 0.

A map is a list of increasing surjective branches ``phi_j`` defined on the
cells ``(a_j, a_{j+1}]``.  Near zero the first branch behaves like
``x + kappa * x**(p + 1)``.  Branch callables must accept and return numpy
arrays.

Countably many branches are supported through a branch factory ``j -> BranchSpec``;
they are materialized lazily and cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, EndpointMismatch, MapSpecError

Func = Callable[[np.ndarray], np.ndarray]

FAMILIES = ("GeneralizedPM", "GeneralizedLSV", "PerturbedPM", "PerturbedLSV", "Custom")

ENDPOINT_TOL = 1e-12
TAIL_CUTOFF = 1e-16
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class BranchSpec:
    lower: float
    upper: float
    forward: Func
    derivative: Func
    second_derivative: Func
    inverse: Func | None = None
    inverse_derivative: Func | None = None

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class PerturbationSpec:
    """Branch perturbations ``eta_j`` with their first two derivatives.

    ``etas`` maps a branch index to ``(eta, eta_prime, eta_second)``.
    """

    etas: Mapping[int, tuple[Func, Func, Func]]
    epsilon: float
    kind: str = "PerturbedPM"
    amplitudes: Mapping[int, float] | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise MapSpecError("perturbation epsilon must be positive")
        if self.kind not in ("PerturbedPM", "PerturbedLSV"):
            raise MapSpecError(f"unknown perturbation kind {self.kind!r}")


def solve_increasing(f, df, target, lo, hi, *, bisect_width=1e-8, rtol=1e-14, maxiter=200):
    """Solve ``f(x) = target`` for increasing ``f`` on the bracket ``[lo, hi]``.

    Bisection narrows the bracket to ``bisect_width``; safeguarded Newton then
    polishes until the step is at rounding level.  Works elementwise on arrays.
    """
    target = np.asarray(target, dtype=float)
    shape = target.shape
    lo = np.array(np.broadcast_to(lo, shape), dtype=float)
    hi = np.array(np.broadcast_to(hi, shape), dtype=float)

    it = 0
    while it < maxiter:
        active = (hi - lo) > bisect_width
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        below = f(mid) < target
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
        it += 1

    x = 0.5 * (lo + hi)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        while it < maxiter:
            r = f(x) - target
            lo = np.where(r < 0, np.maximum(lo, x), lo)
            hi = np.where(r > 0, np.minimum(hi, x), hi)
            xn = x - r / df(x)
            bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            settled = (r == 0) | (np.abs(xn - x) <= 2 * _EPS * np.abs(x)) | (hi - lo <= 2 * _EPS * np.abs(x))
            x = np.where(r == 0, x, xn)
            it += 1
            if settled.all():
                break

    resid = np.abs(f(x) - target)
    ok = resid <= rtol * np.maximum(1.0, np.abs(target))
    if not ok.all():
        worst = float(resid.max())
        raise ConvergenceError(f"inverse branch did not converge (max residual {worst:.3e} after {it} iterations)")
    return x


def _validate_branch(b: BranchSpec, j: int, tol: float = ENDPOINT_TOL) -> None:
    if not b.upper > b.lower:
        raise MapSpecError(f"branch {j}: empty cell [{b.lower}, {b.upper}]")
    lo_val = float(b.forward(np.array([b.lower]))[0])
    hi_val = float(b.forward(np.array([b.upper]))[0])
    if abs(lo_val) > tol:
        raise EndpointMismatch(f"branch {j}: phi({b.lower!r}) = {lo_val!r}, expected 0", witness=b.lower)
    if abs(hi_val - 1.0) > tol:
        raise EndpointMismatch(f"branch {j}: phi({b.upper!r}) = {hi_val!r}, expected 1", witness=b.upper)
    t = np.linspace(0.0, 1.0, 66)[1:-1]
    xs = b.lower + t * b.width
    d = b.derivative(xs)
    if not np.all(d > 0):
        bad = xs[np.argmin(d)]
        raise MapSpecError(f"branch {j}: derivative not positive at x={bad!r}")


class IntervalMap:
    """A map of (0, 1] given by its branches.

    Parameters
    ----------
    branches : sequence of BranchSpec, or callable ``j -> BranchSpec``
        A callable describes a map with countably many branches.
    p, kappa : float
        Index and coefficient of the indifferent fixed point.
    b_o : float, optional
        Right end of the convexity region of branch 0. Defaults to ``a_1 / 2``.
    remainder : callable, optional
        Exact ``phi_0(x) - x - kappa x^(p+1)``; lets the (A2) check avoid
        cancellation.
    """

    def __init__(
        self,
        branches: Sequence[BranchSpec] | Callable[[int], BranchSpec],
        *,
        p: float,
        kappa: float,
        b_o: float | None = None,
        family: str = "Custom",
        remainder: Func | None = None,
        perturbation: PerturbationSpec | None = None,
        spec: dict | None = None,
        max_branches: int = 100_000,
        validate: bool = True,
    ):
        if family not in FAMILIES:
            raise MapSpecError(f"unknown family {family!r}")
        if not p >= 1:
            raise MapSpecError("index p must be >= 1")
        if not kappa > 0:
            raise MapSpecError("kappa must be positive")
        self.p = float(p)
        self.kappa = float(kappa)
        self.family = family
        self.remainder = remainder
        self.perturbation = perturbation
        self.spec = spec
        self.max_branches = max_branches
        self._validate = validate
        if callable(branches):
            self._factory = branches
            self._branches: list[BranchSpec] = []
            self.n_branches = None
        else:
            self._factory = None
            self._branches = list(branches)
            self.n_branches = len(self._branches)
            if self.n_branches == 0:
                raise MapSpecError("a map needs at least one branch")
            if validate:
                self._check_partition(self._branches, complete=True)
                for j, b in enumerate(self._branches):
                    _validate_branch(b, j)
        first = self.branch(0)
        self.b_o = float(b_o) if b_o is not None else 0.5 * first.upper
        if not 0 < self.b_o < first.upper:
            raise MapSpecError("b_o must lie in (0, a_1)")

    @staticmethod
    def _check_partition(branches, complete):
        if branches[0].lower != 0.0:
            raise MapSpecError("first branch must start at 0")
        for j in range(1, len(branches)):
            if branches[j].lower != branches[j - 1].upper:
                raise MapSpecError(f"cells {j - 1} and {j} are not adjacent")
        if complete and branches[-1].upper != 1.0:
            raise MapSpecError("last branch must end at 1")

    @property
    def finite(self) -> bool:
        return self.n_branches is not None

    def branch(self, j: int) -> BranchSpec:
        if j < 0 or (self.finite and j >= self.n_branches):
            raise IndexError(f"branch index {j} out of range")
        if self.finite:
            return self._branches[j]
        if j >= self.max_branches:
            raise IndexError(f"branch {j} beyond max_branches={self.max_branches}")
        while len(self._branches) <= j:
            k = len(self._branches)
            b = self._factory(k)
            if k == 0 and b.lower != 0.0:
                raise MapSpecError("first branch must start at 0")
            if k > 0 and b.lower != self._branches[-1].upper:
                raise MapSpecError(f"cells {k - 1} and {k} are not adjacent")
            if self._validate:
                _validate_branch(b, k)
            self._branches.append(b)
        return self._branches[j]

    def branch_indices(self, j_max: int | None = None) -> range:
        """Branch indices to use in tail sums: all of them, or the first ``j_max + 1``."""
        if self.finite:
            n = self.n_branches if j_max is None else min(self.n_branches, j_max + 1)
        else:
            n = (j_max + 1) if j_max is not None else self.max_branches
        return range(n)

    def endpoints(self, count: int | None = None) -> np.ndarray:
        """``a_0, a_1, ...``; all of them for finite maps, else the first ``count + 1``."""
        if self.finite:
            n = self.n_branches
        else:
            n = 64 if count is None else count
        if count is not None:
            n = min(n, count)
        pts = [self.branch(j).lower for j in range(n)]
        pts.append(self.branch(n - 1).upper)
        return np.array(pts)

    def _endpoints_covering(self, xmax: float) -> np.ndarray:
        if self.finite:
            return self.endpoints()
        j = 0
        while self.branch(j).upper < xmax:
            j += 1
        return self.endpoints(j + 1)

    def branch_index(self, x) -> np.ndarray:
        """Index ``j`` with ``x`` in ``(a_j, a_{j+1}]``."""
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return np.zeros(x.shape, dtype=int)
        inner = x[x < 1.0]
        xmax = float(inner.max()) if inner.size else 0.0
        ends = self._endpoints_covering(xmax)
        idx = np.searchsorted(ends, x, side="left") - 1
        return np.clip(idx, 0, len(ends) - 2)

    def __call__(self, x):
        return eval_map(self, x)

    def __repr__(self):
        n = self.n_branches if self.finite else "inf"
        return f"IntervalMap(family={self.family!r}, p={self.p:g}, kappa={self.kappa:g}, branches={n})"


def _check_domain(x: np.ndarray) -> None:
    if np.any(~np.isfinite(x)) or np.any(x <= 0) or np.any(x > 1):
        raise DomainError("x must lie in (0, 1]")


def eval_map(m: IntervalMap, x):
    """``T(x)`` for ``x`` in (0, 1]; scalar in, scalar out."""
    arr = np.asarray(x, dtype=float)
    _check_domain(arr)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    if m.finite:
        idx = m.branch_index(flat)
        tip = np.zeros(flat.shape, dtype=bool)
    else:
        tip = flat == 1.0
        idx = np.zeros(flat.shape, dtype=int)
        if (~tip).any():
            idx[~tip] = m.branch_index(flat[~tip])
        out[tip] = 1.0
    for j in np.unique(idx[~tip]):
        sel = (idx == j) & ~tip
        out[sel] = m.branch(int(j)).forward(flat[sel])
    out = np.clip(out, 0.0, 1.0).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def _map_derivative(m: IntervalMap, x, which: str):
    arr = np.asarray(x, dtype=float)
    flat = arr.reshape(-1)
    idx = m.branch_index(flat)
    out = np.empty_like(flat)
    for j in np.unique(idx):
        sel = idx == j
        out[sel] = getattr(m.branch(int(j)), which)(flat[sel])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def map_derivative(m: IntervalMap, x):
    return _map_derivative(m, x, "derivative")


def map_second_derivative(m: IntervalMap, x):
    return _map_derivative(m, x, "second_derivative")


def inverse_branch(m: IntervalMap, j: int, xi):
    """``psi_j(xi)``, the point of cell ``j`` mapped to ``xi``."""
    b = m.branch(j)
    arr = np.asarray(xi, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < -1e-15) or np.any(arr > 1 + 1e-15):
        raise DomainError("xi must lie in [0, 1]")
    arr = np.clip(arr, 0.0, 1.0)
    if b.inverse is not None:
        # closed forms can land an ulp outside the cell
        out = np.clip(np.asarray(b.inverse(arr), dtype=float), b.lower, b.upper)
    else:
        out = solve_increasing(b.forward, b.derivative, arr, b.lower, b.upper)
    return float(out) if out.ndim == 0 else out


def inverse_branch_derivative(m: IntervalMap, j: int, xi, x=None):
    """``psi_j'(xi) = 1 / phi_j'(psi_j(xi))``; pass ``x = psi_j(xi)`` to skip the inversion."""
    b = m.branch(j)
    arr = np.asarray(xi, dtype=float)
    if b.inverse_derivative is not None:
        out = np.asarray(b.inverse_derivative(np.clip(arr, 0.0, 1.0)), dtype=float)
    else:
        if x is None:
            x = inverse_branch(m, j, arr)
        out = 1.0 / b.derivative(np.asarray(x, dtype=float))
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def orbit(m: IntervalMap, x0: float, n: int) -> list[float]:
    """``[x0, T(x0), ..., T^n(x0)]``."""
    pts = [float(x0)]
    x = float(x0)
    for _ in range(n):
        x = eval_map(m, x)
        pts.append(x)
    return pts


# ---------------------------------------------------------------------------
# families


def _power_branch0_inverse(kappa):
    # root of x + kappa x^2 = xi written without cancellation
    def inv(xi):
        return 2.0 * xi / (1.0 + np.sqrt(1.0 + 4.0 * kappa * xi))

    def dinv(xi):
        return 1.0 / np.sqrt(1.0 + 4.0 * kappa * xi)

    return inv, dinv


def _pm_branch(kappa, p, j, lo, hi):
    def fwd(x):
        return (x + kappa * x ** (p + 1)) - j

    def d1(x):
        return 1.0 + kappa * (p + 1) * x**p

    def d2(x):
        return kappa * (p + 1) * p * x ** (p - 1)

    inv = dinv = None
    if p == 1:
        def inv(xi):
            c = xi + j
            return 2.0 * c / (1.0 + np.sqrt(1.0 + 4.0 * kappa * c))

        def dinv(xi):
            return 1.0 / np.sqrt(1.0 + 4.0 * kappa * (xi + j))

    return BranchSpec(lo, hi, fwd, d1, d2, inv, dinv)


def _pm_endpoints(kappa: int, p: float) -> list[float]:
    def f(x):
        return x + kappa * x ** (p + 1)

    def df(x):
        return 1.0 + kappa * (p + 1) * x**p

    inner = [float(solve_increasing(f, df, float(j), 0.0, 1.0)) for j in range(1, kappa + 1)]
    return [0.0, *inner, 1.0]


def build_generalized_pm(kappa: int, p: float, b_o: float | None = None) -> IntervalMap:
    """``T(x) = x + kappa x^(p+1) mod 1`` with ``kappa + 1`` branches."""
    if int(kappa) != kappa or kappa < 1:
        raise MapSpecError("generalized PM maps need a positive integer kappa")
    kappa = int(kappa)
    if not p >= 1:
        raise MapSpecError("index p must be >= 1")
    ends = _pm_endpoints(kappa, p)
    branches = [_pm_branch(kappa, p, j, ends[j], ends[j + 1]) for j in range(kappa + 1)]
    spec = {"family": "GeneralizedPM", "kappa": kappa, "p": p}
    return IntervalMap(
        branches,
        p=p,
        kappa=kappa,
        b_o=b_o,
        family="GeneralizedPM",
        remainder=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        spec=spec,
    )


def _lsv_branch0(kappa, p, a1):
    def fwd(x):
        return x + kappa * x ** (p + 1)

    def d1(x):
        return 1.0 + kappa * (p + 1) * x**p

    def d2(x):
        return kappa * (p + 1) * p * x ** (p - 1)

    inv = dinv = None
    if p == 1:
        inv, dinv = _power_branch0_inverse(kappa)
    return BranchSpec(0.0, a1, fwd, d1, d2, inv, dinv)


def _linear_branch(lo, hi):
    w = hi - lo

    def fwd(x):
        return (x - lo) / w

    def d1(x):
        return np.full_like(np.asarray(x, dtype=float), 1.0 / w)

    def d2(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def inv(xi):
        return lo + xi * w

    def dinv(xi):
        return np.full_like(np.asarray(xi, dtype=float), w)

    return BranchSpec(lo, hi, fwd, d1, d2, inv, dinv)


def lsv_first_endpoint(kappa: float, p: float) -> float:
    """The ``a_1`` in (0, 1) with ``a_1 + kappa a_1^(p+1) = 1``."""
    return float(
        solve_increasing(
            lambda x: x + kappa * x ** (p + 1),
            lambda x: 1.0 + kappa * (p + 1) * x**p,
            1.0,
            0.0,
            1.0,
        )
    )


def _resolve_endpoints(kappa, p, endpoints):
    """Normalize LSV endpoint input to a list ``[0, a_1, ..., 1]`` or a callable."""
    if endpoints is None:
        return [0.0, lsv_first_endpoint(kappa, p), 1.0]
    if callable(endpoints):
        return endpoints
    pts = [float(a) for a in endpoints]
    if not pts or pts[0] != 0.0:
        pts = [0.0, *pts]
    if pts[-1] != 1.0:
        pts.append(1.0)
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise MapSpecError("endpoints must be strictly increasing")
    return pts


def _check_a1(kappa, p, a1):
    err = a1 + kappa * a1 ** (p + 1) - 1.0
    if abs(err) > ENDPOINT_TOL:
        raise EndpointMismatch(f"a_1 + kappa a_1^(p+1) - 1 = {err:.3e} for a_1 = {a1!r}", witness=a1)


def build_generalized_lsv(kappa: float, p: float, endpoints=None, b_o: float | None = None) -> IntervalMap:
    """First branch ``x + kappa x^(p+1)``, remaining branches linear and onto.

    ``endpoints`` is ``[0, a_1, ..., 1]`` (leading 0 / trailing 1 optional) or a
    callable ``j -> a_j`` describing countably many cells accumulating at 1.
    """
    if not p >= 1:
        raise MapSpecError("index p must be >= 1")
    if not kappa > 0:
        raise MapSpecError("kappa must be positive")
    pts = _resolve_endpoints(kappa, p, endpoints)
    spec = {"family": "GeneralizedLSV", "kappa": kappa, "p": p}
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    if callable(pts):
        a = pts
        a1 = float(a(1))
        _check_a1(kappa, p, a1)

        def factory(j):
            if j == 0:
                return _lsv_branch0(kappa, p, a1)
            return _linear_branch(float(a(j)), float(a(j + 1)))

        return IntervalMap(factory, p=p, kappa=kappa, b_o=b_o, family="GeneralizedLSV", remainder=zero, spec=None)
    _check_a1(kappa, p, pts[1])
    spec["endpoints"] = pts
    branches = [_lsv_branch0(kappa, p, pts[1])]
    branches += [_linear_branch(pts[j], pts[j + 1]) for j in range(1, len(pts) - 1)]
    return IntervalMap(branches, p=p, kappa=kappa, b_o=b_o, family="GeneralizedLSV", remainder=zero, spec=spec)


def build_lsv(p: float) -> IntervalMap:
    """The standard two-branch LSV map, ``kappa = 2^p`` and ``a_1 = 1/2``."""
    return build_generalized_lsv(2.0**p, p, [0.0, 0.5, 1.0])


def build_doubling() -> IntervalMap:
    """``T(x) = 2x mod 1``: a uniformly expanding test fixture with Lebesgue invariant.

    It has no neutral fixed point, so it fails (A2); ``p`` and ``kappa`` are
    placeholders.
    """
    return IntervalMap([_linear_branch(0.0, 0.5), _linear_branch(0.5, 1.0)], p=1.0, kappa=1.0, family="Custom")


def geometric_endpoints(a1: float, ratio: float = 0.5) -> Callable[[int], float]:
    """``a_0 = 0``, ``a_j = 1 - (1 - a_1) ratio^(j-1)``: countably many cells."""

    def a(j):
        if j == 0:
            return 0.0
        return 1.0 - (1.0 - a1) * ratio ** (j - 1)

    return a


def _perturbed(branch: BranchSpec, eta: tuple[Func, Func, Func]) -> BranchSpec:
    e0, e1, e2 = eta
    return BranchSpec(
        branch.lower,
        branch.upper,
        lambda x: branch.forward(x) + e0(x),
        lambda x: branch.derivative(x) + e1(x),
        lambda x: branch.second_derivative(x) + e2(x),
    )


def _check_eta_endpoints(j, lo, hi, eta):
    vals = eta[0](np.array([lo, hi]))
    if np.any(np.abs(vals) > ENDPOINT_TOL):
        raise EndpointMismatch(f"eta_{j} must vanish at both ends of its cell", witness=lo)


def build_perturbed_pm(kappa: int, p: float, perturbation: PerturbationSpec, b_o=None) -> IntervalMap:
    """``phi_j = x + kappa x^(p+1) - j + eta_j`` on the PM cells; each ``eta_j`` vanishes at its ends."""
    base = build_generalized_pm(kappa, p)
    branches = []
    for j in range(base.n_branches):
        b = base.branch(j)
        if j in perturbation.etas:
            _check_eta_endpoints(j, b.lower, b.upper, perturbation.etas[j])
            b = _perturbed(b, perturbation.etas[j])
        branches.append(b)
    rem = perturbation.etas[0][0] if 0 in perturbation.etas else base.remainder
    return IntervalMap(
        branches, p=p, kappa=kappa, b_o=b_o, family="PerturbedPM", remainder=rem, perturbation=perturbation
    )


def build_perturbed_lsv(kappa: float, p: float, perturbation: PerturbationSpec, endpoints=None, b_o=None) -> IntervalMap:
    base = build_generalized_lsv(kappa, p, endpoints)
    if not base.finite:
        raise MapSpecError("perturbed LSV maps need a finite endpoint list")
    branches = []
    for j in range(base.n_branches):
        b = base.branch(j)
        if j in perturbation.etas:
            _check_eta_endpoints(j, b.lower, b.upper, perturbation.etas[j])
            b = _perturbed(b, perturbation.etas[j])
        branches.append(b)
    rem = perturbation.etas[0][0] if 0 in perturbation.etas else base.remainder
    return IntervalMap(
        branches, p=p, kappa=kappa, b_o=b_o, family="PerturbedLSV", remainder=rem, perturbation=perturbation
    )


def bump_perturbation(
    kind: str, p: float, endpoints: Sequence[float], amplitudes: Mapping[int, float], epsilon: float
) -> PerturbationSpec:
    """Polynomial perturbations vanishing at the cell ends.

    Branch 0 gets ``A x^(2p+1) (a_1 - x) / a_1``, so it is ``O(x^(2p+1))`` at 0.
    Branch ``j >= 1`` gets the concave quadratic ``A (x - a_j)(a_{j+1} - x)``.
    """
    etas = {}
    for j, amp in amplitudes.items():
        j = int(j)
        amp = float(amp)
        lo, hi = float(endpoints[j]), float(endpoints[j + 1])
        if j == 0:
            a1 = hi
            q = 2 * p + 1

            def e0(x, A=amp, a1=a1, q=q):
                return A * x**q * (a1 - x) / a1

            def e1(x, A=amp, a1=a1, q=q):
                return A * (q * x ** (q - 1) * (a1 - x) - x**q) / a1

            def e2(x, A=amp, a1=a1, q=q):
                return A * (q * (q - 1) * x ** (q - 2) * (a1 - x) - 2 * q * x ** (q - 1)) / a1

            etas[0] = (e0, e1, e2)
        else:

            def e0(x, A=amp, lo=lo, hi=hi):
                return A * (x - lo) * (hi - x)

            def e1(x, A=amp, lo=lo, hi=hi):
                return A * (lo + hi - 2 * x)

            def e2(x, A=amp):
                return np.full_like(np.asarray(x, dtype=float), -2.0 * A)

            etas[j] = (e0, e1, e2)
    return PerturbationSpec(etas=etas, epsilon=epsilon, kind=kind, amplitudes=dict(amplitudes))


# ---------------------------------------------------------------------------
# JSON map documents


def map_from_json(doc: Mapping) -> IntervalMap:
    """Build a map from ``{"family", "kappa", "p", "endpoints", "perturbation", "b_o"}``.

    ``endpoints`` may be a list or ``{"geometric": ratio, "a1": a_1}`` for
    countably many linear cells.  ``perturbation`` is
    ``{"epsilon": e, "bumps": {"0": A_0, "1": A_1, ...}}``.
    """
    try:
        family = doc["family"]
        p = float(doc["p"])
        kappa = doc.get("kappa")
    except (KeyError, TypeError, ValueError) as exc:
        raise MapSpecError(f"malformed map document: {exc}") from exc
    if kappa is None and family in ("GeneralizedLSV", "PerturbedLSV"):
        kappa = 2.0**p
    if kappa is None and family in ("GeneralizedPM", "PerturbedPM"):
        raise MapSpecError(f"{family} needs 'kappa'")
    b_o = doc.get("b_o")
    ends = doc.get("endpoints")
    if isinstance(ends, Mapping):
        if "geometric" not in ends:
            raise MapSpecError("endpoint object must carry 'geometric'")
        a1 = float(ends.get("a1", lsv_first_endpoint(float(kappa), p)))
        ends = geometric_endpoints(a1, float(ends["geometric"]))

    if family == "GeneralizedPM":
        m = build_generalized_pm(int(kappa), p, b_o=b_o)
    elif family == "GeneralizedLSV":
        if kappa is None:
            kappa = 2.0**p
        m = build_generalized_lsv(float(kappa), p, ends, b_o=b_o)
    elif family in ("PerturbedPM", "PerturbedLSV"):
        pert = doc.get("perturbation") or {}
        bumps = {int(k): float(v) for k, v in (pert.get("bumps") or {}).items()}
        eps = float(pert.get("epsilon", 1.0))
        if family == "PerturbedPM":
            pts = _pm_endpoints(int(kappa), p)
            spec = bump_perturbation(family, p, pts, bumps, eps)
            m = build_perturbed_pm(int(kappa), p, spec, b_o=b_o)
        else:
            if kappa is None:
                kappa = 2.0**p
            pts = _resolve_endpoints(float(kappa), p, ends)
            if callable(pts):
                raise MapSpecError("perturbed LSV maps need a finite endpoint list")
            spec = bump_perturbation(family, p, pts, bumps, eps)
            m = build_perturbed_lsv(float(kappa), p, spec, pts, b_o=b_o)
    else:
        raise MapSpecError(f"family {family!r} cannot be built from JSON; custom maps are programmatic only")
    m.spec = dict(doc)
    return m
