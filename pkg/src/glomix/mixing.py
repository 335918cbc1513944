"""Correlation sequences ``c_n = nu((F o T^n) g)`` and their diagnostics.

Three independent routes are provided: transfer-operator duality
(``leb(F P^n g)``), brute-force quadrature of ``F(T^n x) g(x)``, and
Monte-Carlo sampling of ``x`` from ``g dnu``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NonIntegrable, SamplingError
from .grid import GridFunction
from .halfline import HalfLineMap, conjugate, psi, psi_inv
from .maps import IntervalMap, eval_map, inverse_branch
from .measures import (
    HALF_LINE,
    UNIT_INTERVAL,
    MeasureSpec,
    Observable,
    counterexample_averages,
    counterexample_breakpoints,
    estimate_global_average,
    integrate,
    lambda_q,
    lebesgue,
)
from .quadrature import gk_integrate
from .transfer import halfline_grid, pf_callable, transfer_matrix, weighted_interp

TREND_SLOPE = 1e-3
SHARD_SIZE = 1 << 16


@dataclass
class MixingRun:
    map_id: str
    measure: MeasureSpec
    F: Observable
    g: Observable
    n_max: int
    correlations: list
    target: float | None
    method: str
    mc_samples: int | None = None
    seed: int | None = None
    se: list | None = None
    tags: list = field(default_factory=list)
    g_mass: float | None = None
    F_average: float | None = None
    error_bound: list | None = None

    def __post_init__(self):
        if len(self.correlations) != self.n_max + 1:
            raise ValueError("need one correlation per n = 0..n_max")

    def residuals(self) -> list:
        if self.target is None:
            return [math.nan] * len(self.correlations)
        return [c - self.target for c in self.correlations]


# ---------------------------------------------------------------------------
# where things live


def _works_on_halfline(measure: MeasureSpec) -> bool:
    return measure.kind in ("NuP", "LambdaQ") or measure.space == HALF_LINE


def _halfline_setup(m: IntervalMap, measure: MeasureSpec, F: Observable, g: Observable):
    """Half-line observables and weight: ``c_n = int F_o P_o^n (g_o w) dy``.

    ``nu_p`` observables live on (0, 1] and are transported by ``Psi``; for
    half-line measures ``F`` and ``g`` are already half-line functions.
    """
    p = m.p
    if measure.kind == "NuP":
        if measure.param != p:
            raise ValueError(f"nu_{measure.param:g} does not match the map's index p = {p:g}")

        def F_o(y):
            return F(psi_inv(y, p))

        def g_o(y):
            return g(psi_inv(y, p))

        def F_cuts(lo, hi):
            xs = F.cuts(psi_inv(hi, p), psi_inv(lo, p))
            return sorted(float(psi(c, p)) for c in xs if c > 0)

        def g_cuts(lo, hi):
            xs = g.cuts(psi_inv(hi, p), psi_inv(lo, p))
            return sorted(float(psi(c, p)) for c in xs if c > 0)

        return F_o, g_o, F_cuts, g_cuts
    dens = measure.density

    def gw(y):
        return g(y) * dens(y)

    return F, gw, F.cuts, g.cuts


def _support(g: Observable, space: str):
    """Breakpoints of ``g`` when it is a box; used to bound quadrature ranges."""
    name = g.name
    if name.startswith("box:"):
        a, b = (float(v) for v in name[4:].split(","))
        return a, b
    return (0.0, 1.0) if space == UNIT_INTERVAL else (0.0, math.inf)


# ---------------------------------------------------------------------------
# transfer duality


def correlation_transfer(
    m: IntervalMap,
    measure: MeasureSpec,
    F: Observable,
    g: Observable,
    n_max: int,
    *,
    mode: str = "auto",
    exact_max: int = 3,
    grid_size: int = 20_000,
    tol: float = 1e-10,
    with_error: bool = False,
):
    """``c_n = leb(F P^n (g h))`` for n = 0..n_max, ``h`` the density of ``measure``.

    ``mode='Exact'`` composes ``P`` exactly (cost grows like branches^n);
    ``mode='Grid'`` iterates a sparse discretization on ``grid_size`` points;
    ``'auto'`` uses Exact for ``n <= exact_max`` and Grid beyond.

    ``with_error=True`` also returns a per-n error bound: the quadrature
    tolerance for exact terms, and for grid terms ``sup|F|`` times the drift in
    ``int P^n |g h|`` (the exact operator conserves it).
    """
    if mode not in ("auto", "Exact", "Grid"):
        raise ValueError(f"unknown mode {mode!r}")
    exact_upto = n_max if mode == "Exact" else (-1 if mode == "Grid" else min(exact_max, n_max))
    out, err = [], []
    if _works_on_halfline(measure):
        hm = conjugate(m)
        F_o, gw, F_cuts, g_cuts = _halfline_setup(m, measure, F, g)
        target = hm
        space = HALF_LINE
    else:
        target = m
        dens = measure.density

        def gw(x):
            return g(x) * dens(x)

        F_o, F_cuts, g_cuts = F, F.cuts, g.cuts
        space = UNIT_INTERVAL
    leb = lebesgue(space)
    top = math.inf if space == HALF_LINE else 1.0
    for n in range(exact_upto + 1):
        Pg = pf_callable(target, gw, n)
        bps = F_cuts(0.0, 1e300 if top == math.inf else 1.0) + (g_cuts(0.0, 1e300 if top == math.inf else 1.0) if n == 0 else [])
        out.append(integrate(leb, lambda y, Pg=Pg: F_o(y) * Pg(y), 0.0, top, tol, breakpoints=sorted(set(bps)), tail_p=m.p))
        err.append(10 * tol * max(1.0, abs(out[-1])))
    if n_max > exact_upto:
        vals, drift = _grid_correlations(target, space, F_o, F_cuts, gw, g_cuts, exact_upto + 1, n_max, grid_size, tol, F.bound)
        out.extend(vals)
        err.extend(drift)
    return (out, err) if with_error else out


def _grid_correlations(target, space, F_o, F_cuts, gw, g_cuts, n_lo, n_hi, grid_size, tol, F_bound=None):
    if space == HALF_LINE:
        grid = np.union1d(halfline_grid(target, grid_size), np.linspace(0.0, 64.0, grid_size + 1))
        cuts = g_cuts(0.0, 1e300)
    else:
        grid = np.union1d(np.geomspace(1e-12, 1.0, grid_size), np.linspace(0.0, 1.0, grid_size + 1)[1:])
        cuts = g_cuts(0.0, 1.0)
    # P^n g jumps exactly at the forward images T^k(c), k <= n, of the cuts of g
    step = target.eval if space == HALF_LINE else (lambda x: eval_map(target, x))
    jumps = []
    for c in cuts:
        for _ in range(n_hi + 1):
            if not (0 < c < grid[-1]):
                break
            jumps.append(c)
            c = float(step(c))
    grid = np.union1d(grid, [c * (1 + s * 1e-12) for c in jumps for s in (-1, 1)])
    # half-line iterates decay like y^-(1 + 1/p); interpolating with that weight keeps mass
    w = 1 + 1 / target.p if space == HALF_LINE else 0.0
    A = transfer_matrix(target, grid, tail_exponent=w)
    v = gw(grid)
    mass = np.abs(v)
    one = lambda y: np.ones_like(y)  # noqa: E731
    no_cuts = lambda a, b: []  # noqa: E731
    mass0 = _integrate_against_grid(one, no_cuts, GridFunction(grid, mass, space), tol, w)
    if F_bound is None:
        F_bound = float(np.max(np.abs(F_o(grid))))
    vals, drift = [], []

    def record(vec, mvec):
        vals.append(_integrate_against_grid(F_o, F_cuts, GridFunction(grid, vec, space), tol, w))
        m_n = _integrate_against_grid(one, no_cuts, GridFunction(grid, mvec, space), tol, w)
        drift.append(F_bound * abs(m_n - mass0) + 10 * tol * max(1.0, abs(vals[-1])))

    if n_lo == 0:
        record(v, mass)
    for n in range(1, n_hi + 1):
        v = A @ v
        mass = A @ mass
        if n >= n_lo:
            record(v, mass)
    return vals, drift


def _integrate_against_grid(F, F_cuts, gf: GridFunction, tol, tail_exponent: float = 0.0) -> float:
    """``int F gf dy`` over the grid span, piecewise on each grid cell."""
    y = gf.grid
    cuts = [c for c in F_cuts(float(y[0]), float(y[-1]))]
    pts = np.union1d(y, cuts)
    # Gauss-Legendre on every cell: F is smooth or piecewise constant between cuts
    nodes, weights = np.polynomial.legendre.leggauss(8)
    lo, hi = pts[:-1], pts[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    xs = mid[:, None] + half[:, None] * nodes[None, :]
    vals = F(xs.ravel()).reshape(xs.shape) * weighted_interp(gf.grid, gf.values, xs.ravel(), tail_exponent).reshape(xs.shape)
    return math.fsum((half[:, None] * vals * weights[None, :]).ravel())


# ---------------------------------------------------------------------------
# brute force


def preimage_cuts(m, lo: float, hi: float, n: int) -> list[float]:
    """Discontinuities of ``T^n`` on ``[lo, hi]``: preimages of cell endpoints up to order ``n - 1``."""
    source = m.source if isinstance(m, HalfLineMap) else m
    ends = source.endpoints()
    pts = set(float(e) for e in ends if 0 < e < 1)
    level = set(pts)
    for _ in range(n - 1):
        new = set()
        for j in source.branch_indices():
            xs = inverse_branch(source, j, np.array(sorted(level)))
            new.update(float(v) for v in np.atleast_1d(xs))
        level = new
        pts |= new
    if isinstance(m, HalfLineMap):
        pts = set(float(psi(x, source.p)) for x in pts if x > 0)
    return sorted(c for c in pts if lo < c < hi)


def correlation_bruteforce(m: IntervalMap, measure: MeasureSpec, F: Observable, g: Observable, n: int, tol: float = 1e-11) -> float:
    """``int F(T^n x) g(x) dnu`` by composing ``T`` pointwise; independent of ``P``."""
    if measure.space == HALF_LINE:
        target = conjugate(m)
        step = target.eval
    else:
        target = m
        step = lambda x: eval_map(m, x)  # noqa: E731

    def integrand(x):
        z = np.asarray(x, dtype=float)
        for _ in range(n):
            z = step(z)
        return F(z) * g(x)

    lo, hi = _support(g, measure.space)
    if measure.space == UNIT_INTERVAL:
        lo = max(lo, 0.0)
        hi = min(hi, 1.0)
    cut_hi = 1e300 if math.isinf(hi) else hi
    bps = set(g.cuts(lo, cut_hi)) | set(preimage_cuts(target, lo, cut_hi, n) if n else [])
    if n == 0:
        bps |= set(F.cuts(lo, cut_hi))
    return integrate(measure, integrand, lo, hi, tol, breakpoints=sorted(bps), tail_p=m.p)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class Sampler:
    """Inverse-CDF sampler for ``|g| dnu / nu(|g|)`` on a fine grid."""

    edges: np.ndarray
    cdf: np.ndarray
    mass: float

    def draw(self, u: np.ndarray) -> np.ndarray:
        k = np.searchsorted(self.cdf, u, side="right") - 1
        k = np.clip(k, 0, self.edges.size - 2)
        width = self.cdf[k + 1] - self.cdf[k]
        t = np.where(width > 0, (u - self.cdf[k]) / np.where(width > 0, width, 1.0), 0.5)
        return self.edges[k] + t * (self.edges[k + 1] - self.edges[k])


def build_sampler(measure: MeasureSpec, weight, lo: float, hi: float, cuts=(), n: int = 200_000) -> Sampler:
    if math.isinf(hi):
        raise SamplingError("sampling needs a bounded support")
    if measure.space == UNIT_INTERVAL and lo == 0:
        lo = 1e-300
    if lo > 0 and hi / lo > 100:
        edges = np.geomspace(lo, hi, n)
    else:
        edges = np.linspace(lo, hi, n)
    edges = np.union1d(edges, [c for c in cuts if lo < c < hi])
    nodes, weights = np.polynomial.legendre.leggauss(4)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    xs = mid[:, None] + half[:, None] * nodes[None, :]
    w = np.abs(weight(xs.ravel()))
    dens = np.zeros(w.shape)
    nz = w != 0
    # zero weight beats an overflowing density near a singular end
    with np.errstate(over="ignore"):
        dens[nz] = w[nz] * measure.density(xs.ravel()[nz])
    dens = dens.reshape(xs.shape)
    cell = half * (dens @ weights)
    if not np.all(np.isfinite(cell)) or np.any(cell < 0):
        raise SamplingError("cell masses are not finite and non-negative")
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    total = cdf[-1]
    if not total > 0:
        raise SamplingError("weight has zero mass")
    cdf /= total
    if np.any(np.diff(cdf) < 0):
        raise SamplingError("CDF is not monotone")
    return Sampler(edges, cdf, float(total))


def worker_count() -> int:
    try:
        n = int(os.environ.get("GLOMIX_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _shard_sums(step, F, sampler: Sampler, seed: int, shard: int, size: int, n_max: int):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(shard,))))
    x = sampler.draw(rng.random(size))
    sums = np.empty(n_max + 1)
    sq = np.empty(n_max + 1)
    for n in range(n_max + 1):
        f = F(x)
        sums[n] = math.fsum(f)
        sq[n] = math.fsum(f * f)
        if n < n_max:
            x = step(x)
    return sums, sq


def _mc_part(step, F, sampler, seed, samples, n_max, salt):
    shards = [(i, min(SHARD_SIZE, samples - i * SHARD_SIZE)) for i in range(math.ceil(samples / SHARD_SIZE))]
    base = seed * 2 + salt
    jobs = [(step, F, sampler, base, i, size, n_max) for i, size in shards]
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _shard_sums(*a), jobs))
    else:
        results = [_shard_sums(*a) for a in jobs]
    # fixed-order merge
    s = np.array([math.fsum(r[0][n] for r in results) for n in range(n_max + 1)])
    q = np.array([math.fsum(r[1][n] for r in results) for n in range(n_max + 1)])
    mean = s / samples
    var = np.maximum(q / samples - mean**2, 0.0) * samples / max(samples - 1, 1)
    return mean, np.sqrt(var / samples)


def correlation_montecarlo(
    m: IntervalMap,
    measure: MeasureSpec,
    F: Observable,
    g: Observable,
    n_max: int,
    samples: int = 200_000,
    seed: int = 0,
    *,
    grid_points: int = 200_000,
):
    """``c_n ~ nu(g) mean F(T^n x)`` with ``x`` drawn from ``g dnu / nu(g)``.

    Signed ``g`` is split into positive and negative parts, each sampled with
    its own stream.  Returns ``(estimates, standard_errors)``.
    """
    if measure.space == HALF_LINE:
        hm = conjugate(m)
        step = hm.eval
    else:
        step = lambda x: eval_map(m, x)  # noqa: E731
    lo, hi = _support(g, measure.space)
    cuts = g.cuts(lo, hi if math.isfinite(hi) else 1e300)
    est = np.zeros(n_max + 1)
    var = np.zeros(n_max + 1)
    for salt, sign in ((0, 1.0), (1, -1.0)):
        part = lambda x, s=sign: np.maximum(s * g(x), 0.0)  # noqa: E731
        try:
            sampler = build_sampler(measure, part, lo, hi, cuts, grid_points)
        except SamplingError:
            if sign < 0:
                continue
            raise
        mean, se = _mc_part(step, F, sampler, seed, samples, n_max, salt)
        est += sign * sampler.mass * mean
        var += (sampler.mass * se) ** 2
    return est.tolist(), np.sqrt(var).tolist()


# ---------------------------------------------------------------------------
# runs and diagnostics


def observable_mass(measure: MeasureSpec, g: Observable, tol: float = 1e-10) -> float:
    lo, hi = _support(g, measure.space)
    return integrate(measure, g, lo, hi, tol, breakpoints=g.cuts(lo, hi if math.isfinite(hi) else 1e300), tail_p=measure.p or 1.0)


def global_average(measure: MeasureSpec, F: Observable):
    """``(value, converged)``: the known average when recorded, else the dyadic estimate."""
    if F.known_average is not None:
        return F.known_average, True
    est = estimate_global_average(measure, F)
    return est.value, est.converged


def run_mixing(
    m: IntervalMap,
    measure: MeasureSpec,
    F: Observable,
    g: Observable,
    n_max: int,
    *,
    method: str = "TransferDuality",
    samples: int = 200_000,
    seed: int = 0,
    map_id: str = "map",
    **kwargs,
) -> MixingRun:
    g_mass = observable_mass(measure, g)
    avg, ok = global_average(measure, F)
    tags = [] if ok else ["TargetUndefined"]
    target = avg * g_mass if ok else None
    if method == "TransferDuality":
        c, bound = correlation_transfer(m, measure, F, g, n_max, with_error=True, **kwargs)
        se = None
    elif method == "MonteCarlo":
        c, se = correlation_montecarlo(m, measure, F, g, n_max, samples, seed)
        bound = [3 * v for v in se]
    else:
        raise ValueError(f"unknown method {method!r}")
    return MixingRun(
        map_id, measure, F, g, n_max, list(c), target, method,
        samples if method == "MonteCarlo" else None, seed if method == "MonteCarlo" else None,
        se, tags, g_mass, avg if ok else None, list(bound),
    )


def classify_trend(seq, floor: float = 1e-13) -> tuple[str, float | None]:
    """Least-squares slope of ``log seq`` over the last half; Flat when every value is below ``floor``."""
    s = np.abs(np.asarray(seq, dtype=float))
    half = s[len(s) // 2:]
    if half.size == 0 or np.all(half <= floor):
        return "Flat", 0.0
    idx = np.arange(len(s))[len(s) // 2:]
    keep = half > floor
    if keep.sum() < 2:
        return "Decaying", None
    slope = float(np.polyfit(idx[keep], np.log(half[keep]), 1)[0])
    if slope < -TREND_SLOPE:
        return "Decaying", slope
    if slope > TREND_SLOPE:
        return "Increasing", slope
    return "Flat", slope


def glm_diagnostic(run: MixingRun) -> dict:
    """Tail sup of ``|c_n - target|`` and its trend.  Runs without a target are
    classified on successive differences ``|c_{n+1} - c_n|`` instead.

    Values below the run's error bound (grid drift, or 3 SE for Monte Carlo)
    are indistinguishable from zero and do not count toward the trend.
    """
    n_max = run.n_max
    floor = max([1e-13] + list(run.error_bound or []))
    if run.target is not None:
        resid = np.abs(np.asarray(run.residuals()))
        tail = resid[np.arange(n_max + 1) > n_max / 2]
        tail_sup = float(tail.max()) if tail.size else float(resid[-1])
        trend, slope = classify_trend(resid, floor)
        basis = "residual"
    else:
        diffs = np.abs(np.diff(run.correlations))
        tail_sup = None
        trend, slope = classify_trend(diffs, 2 * floor)
        basis = "increment"
    return {
        "tail_sup": tail_sup,
        "trend": trend,
        "slope": slope,
        "basis": basis,
        "tags": list(run.tags),
        "noise_floor": floor,
        "report": f"{run.method} {run.map_id}: trend {trend} on {basis}s"
        + (f", tail sup {tail_sup:.3e}" if tail_sup is not None else ", target undefined"),
    }


def local_local_decay(m: IntervalMap, measure: MeasureSpec, f: Observable, g: Observable, n_max: int, **kwargs) -> dict:
    """``|nu((f o T^n) g)|`` with its upper envelope ``sup_{k >= n} |c_k|``."""
    c = np.abs(np.asarray(correlation_transfer(m, measure, f, g, n_max, **kwargs)))
    envelope = np.maximum.accumulate(c[::-1])[::-1]
    return {
        "abs_correlations": c.tolist(),
        "envelope": envelope.tolist(),
        "envelope_decreasing": bool(np.all(np.diff(envelope) <= 0)),
        "final": float(c[-1]),
    }


def flag_candidate_witness(F: Observable, mu: MeasureSpec, nu: MeasureSpec, mu_sequence=None, nu_sequence=None, tol: float = 1e-6) -> dict:
    """Flag ``F`` whose ``mu``-average settles while its ``nu``-average does not.

    A flag is only a candidate: finite sequences cannot show that an average
    fails to exist.
    """
    a_mu = estimate_global_average(mu, F, mu_sequence, tol=tol)
    a_nu = estimate_global_average(nu, F, nu_sequence, tol=tol)
    return {
        "mu_average": a_mu.value,
        "mu_converged": a_mu.converged,
        "nu_average": a_nu.value,
        "nu_converged": a_nu.converged,
        "candidate": a_mu.converged and not a_nu.converged,
    }


# ---------------------------------------------------------------------------
# counterexample table


def counterexample_quadrature(n: int, tol: float = 1e-12) -> dict:
    """The four box averages of the k^k observable, computed by quadrature."""
    from .measures import counterexample_kk, finite_volume_average

    F = counterexample_kk()
    alpha, beta = float(n**n - 1), float(2 * n**n - 1)
    leb = lebesgue(HALF_LINE)
    lam = lambda_q(1.0)
    return {
        "leb_at_alpha": finite_volume_average(leb, F, alpha, tol),
        "leb_at_beta": finite_volume_average(leb, F, beta, tol),
        "lambda1_at_alpha": finite_volume_average(lam, F, alpha, tol),
        "lambda1_at_beta": finite_volume_average(lam, F, beta, tol),
    }


DEMO_COLUMNS = ("leb_at_alpha", "leb_at_beta", "lambda1_at_alpha", "lambda1_at_beta")


def appendixB_demo(n_max: int, quad_check: bool = True, quad_max: int = 40) -> list[dict]:
    """Rows for n = 2..n_max: closed-form averages, plus quadrature values and
    their largest relative discrepancy for ``n <= quad_max``."""
    rows = []
    for n in range(2, n_max + 1):
        row = {"n": n, **counterexample_averages(n)}
        if quad_check and n <= quad_max:
            q = counterexample_quadrature(n)
            row["quad_max_rel_err"] = max(abs(q[k] - row[k]) / abs(row[k]) for k in DEMO_COLUMNS)
        else:
            row["quad_max_rel_err"] = None
        rows.append(row)
    return rows

