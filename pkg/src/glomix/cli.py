"""``glomix`` command line: checks, conjugation, densities, mixing runs, demos.

Every run writes its numeric output as CSV plus a ``manifest.json`` holding
the resolved configuration; ``glomix replay manifest.json --out DIR``
re-runs it.  Exit status: 0 success, 2 failed assumption check or
inconsistent map, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import CheckReport, check_all
from .errors import ConfigError, EndpointMismatch, GlomixError, MapSpecError
from .halfline import conjugate
from .maps import map_from_json, orbit
from .measures import (
    HALF_LINE,
    UNIT_INTERVAL,
    constant,
    counterexample_kk,
    estimated_mu,
    identity,
    indicator,
    lambda_q,
    lebesgue,
    nu_p,
    table_observable,
)
from .mixing import appendixB_demo, glm_diagnostic, run_mixing
from .transfer import density_grid, estimate_invariant_density

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


# ---------------------------------------------------------------------------
# parsing helpers


def load_map_doc(path) -> dict:
    try:
        with Path(path).open() as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read map file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"map file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("map file must hold a JSON object")
    return doc


def parse_observable(text: str):
    """``identity | constant:c | box:a,b | counterexample_kk | table:path``."""
    if text == "identity":
        return identity()
    if text == "counterexample_kk":
        return counterexample_kk()
    kind, _, arg = text.partition(":")
    try:
        if kind == "constant":
            return constant(float(arg))
        if kind == "box":
            a, b = (float(v) for v in arg.split(","))
            return indicator(a, b)
        if kind == "table":
            return table_observable(arg)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad observable {text!r}: {exc}") from exc
    raise ConfigError(f"unknown observable {text!r}")


def parse_measure(text: str, m, grid: int, iters: int):
    """``leb | leb:halfline | nu_p | lambda_q:q | mu``."""
    if text == "leb":
        return lebesgue(UNIT_INTERVAL)
    if text == "leb:halfline":
        return lebesgue(HALF_LINE)
    if text == "nu_p":
        return nu_p(m.p)
    if text.startswith("lambda_q"):
        _, _, q = text.partition(":")
        try:
            return lambda_q(float(q) if q else 1.0)
        except ValueError as exc:
            raise ConfigError(f"bad measure {text!r}") from exc
    if text == "mu":
        est = estimate_invariant_density(m, iters, density_grid(grid, m=m))
        return estimated_mu(est.h, m.p)
    raise ConfigError(f"unknown measure {text!r}")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, config: dict, outputs: list[str]) -> None:
    doc = {
        "glomix_version": __version__,
        "config": config,
        "outputs": {name: _digest(out / name) for name in outputs},
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def _failed_a1(exc: Exception) -> CheckReport:
    witness = getattr(exc, "witness", None)
    return CheckReport("A1", False, float(witness) if witness is not None else 0.0, None, 0, {"error": str(exc)})


def cmd_check(cfg: dict, out: Path) -> int:
    try:
        m = map_from_json(cfg["map"])
    except (EndpointMismatch, MapSpecError) as exc:
        reports = [_failed_a1(exc)]
    else:
        reports = check_all(m, cfg["grid"])
    (out / "checks.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    rows = [(r.assumption_id, r.passed, r.witness, r.estimate, r.grid_size) for r in reports]
    write_csv(out / "checks.csv", ("assumption", "passed", "witness", "estimate", "grid_size"), rows)
    write_manifest(out, cfg, ["checks.json", "checks.csv"])
    for r in reports:
        print(f"{r.assumption_id:8s} {'PASS' if r.passed else 'FAIL'}" + ("" if r.passed else f"  witness={r.witness!r}"))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK


def cmd_conjugate(cfg: dict, out: Path) -> int:
    m = map_from_json(cfg["map"])
    hm = conjugate(m)
    if cfg.get("at"):
        ys = np.array(cfg["at"], dtype=float)
    else:
        ys = np.concatenate([np.linspace(0.0, 10.0, 101), np.geomspace(10.0, 1e6, cfg["grid"] // 10 or 2)[1:]])
    vals = hm.eval(ys)
    idx = hm.branch_index(ys)
    write_csv(out / "conjugate.csv", ("y", "T_o", "branch"), zip(map(float, ys), map(float, np.atleast_1d(vals)), map(int, np.atleast_1d(idx))))
    ends = hm.endpoints(None if m.finite else 64)
    write_csv(out / "endpoints_o.csv", ("j", "a_o"), [(j, float(a)) for j, a in enumerate(ends)])
    write_manifest(out, cfg, ["conjugate.csv", "endpoints_o.csv"])
    return EXIT_OK


def cmd_density(cfg: dict, out: Path) -> int:
    m = map_from_json(cfg["map"])
    est = estimate_invariant_density(m, cfg["iters"], density_grid(cfg["grid"], m=m), method=cfg.get("method", "accelerated"))
    write_csv(out / "density.csv", ("x", "h", "H"), zip(map(float, est.h.grid), map(float, est.h.values), map(float, est.H.values)))
    (out / "density_diagnostics.json").write_text(json.dumps(est.diagnostics, indent=2, sort_keys=True) + "\n")
    write_manifest(out, cfg, ["density.csv", "density_diagnostics.json"])
    d = est.diagnostics
    print(f"iterations={d['iterations']} NonConvergence={d['NonConvergence']} min_H={d['min_H']:.6g}")
    return EXIT_OK


def cmd_mix(cfg: dict, out: Path) -> int:
    m = map_from_json(cfg["map"])
    measure = parse_measure(cfg["measure"], m, cfg["grid"], cfg["iters"])
    F, g = parse_observable(cfg["F"]), parse_observable(cfg["g"])
    method = cfg.get("method", "TransferDuality")
    run = run_mixing(
        m, measure, F, g, cfg["n"], method=method, samples=cfg.get("samples", 200_000), seed=cfg.get("seed") or 0,
        map_id=Path(cfg.get("map_path", "map")).stem,
    )
    se = run.se or [None] * (run.n_max + 1)
    res = run.residuals()
    rows = [
        (n, float(c), run.target, (float(r) if run.target is not None else None), run.method, s, float(e))
        for n, (c, r, s, e) in enumerate(zip(run.correlations, res, se, run.error_bound))
    ]
    write_csv(out / "mix.csv", ("n", "c_n", "target", "residual", "method", "se", "error_bound"), rows)
    diag = glm_diagnostic(run)
    diag["g_mass"] = run.g_mass
    diag["F_average"] = run.F_average
    (out / "mix_diagnostic.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
    write_manifest(out, cfg, ["mix.csv", "mix_diagnostic.json"])
    print(diag["report"])
    return EXIT_OK


def cmd_demo(cfg: dict, out: Path) -> int:
    rows = appendixB_demo(cfg["n_max"])
    cols = ("n", "leb_at_alpha", "leb_at_beta", "lambda1_at_alpha", "lambda1_at_beta", "quad_max_rel_err")
    write_csv(out / "counterexample.csv", cols, [tuple(r[c] for c in cols) for r in rows])
    write_manifest(out, cfg, ["counterexample.csv"])
    for r in rows[:3]:
        print(", ".join(f"{r[c]:.6f}" if isinstance(r[c], float) else str(r[c]) for c in cols[:5]))
    return EXIT_OK


def cmd_orbit(cfg: dict, out: Path) -> int:
    m = map_from_json(cfg["map"])
    pts = orbit(m, cfg["x0"], cfg["n"])
    write_csv(out / "orbit.csv", ("n", "x"), enumerate(pts))
    write_manifest(out, cfg, ["orbit.csv"])
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "conjugate": cmd_conjugate,
    "density": cmd_density,
    "mix": cmd_mix,
    "demo-counterexample": cmd_demo,
    "orbit": cmd_orbit,
}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glomix", description="Global-local mixing experiments for intermittent interval maps.")
    parser.add_argument("--version", action="version", version=f"glomix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_map=True):
        if needs_map:
            p.add_argument("--map", required=True, help="map JSON document")
        p.add_argument("--out", default="glomix_out", help="output directory")
        return p

    p = common(sub.add_parser("check", help="run the assumption checks"))
    p.add_argument("--grid", type=int, default=10_000)

    p = common(sub.add_parser("conjugate", help="tabulate the half-line map"))
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--at", type=lambda s: [float(v) for v in s.split(",")], default=None, help="comma-separated y values")

    p = common(sub.add_parser("density", help="estimate the invariant density"))
    p.add_argument("--grid", type=int, default=20_000)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--method", choices=("accelerated", "power"), default="accelerated")

    p = common(sub.add_parser("mix", help="correlation sequence c_n"))
    p.add_argument("--measure", default="nu_p", help="leb | leb:halfline | nu_p | lambda_q:q | mu")
    p.add_argument("--F", default="identity")
    p.add_argument("--g", default="box:0.5,1")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--grid", type=int, default=4000, help="grid size for the estimated density (--measure mu)")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--method", choices=("TransferDuality", "MonteCarlo"), default="TransferDuality")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)

    p = common(sub.add_parser("demo-counterexample", help="averages of the k^k observable"), needs_map=False)
    p.add_argument("--n-max", dest="n_max", type=int, default=50)

    p = common(sub.add_parser("orbit", help="orbit of a point"))
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--n", type=int, default=20)

    p = sub.add_parser("replay", help="re-run the configuration stored in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out",)}
    if "map" in cfg:
        cfg["map_path"] = cfg["map"]
        cfg["map"] = load_map_doc(cfg["map"])
    return cfg


def run(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[cfg["command"]](cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            doc = json.loads(Path(args.manifest).read_text())
            cfg = doc["config"]
        else:
            cfg = resolve_config(args)
        return run(cfg, Path(args.out))
    except EndpointMismatch as exc:
        print(f"glomix: inconsistent map: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (GlomixError, ValueError, KeyError, OSError) as exc:
        print(f"glomix: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # internal error: still honour the exit-code contract
        print(f"glomix: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
