"""
Batch front-end.

    star-gns <experiment> --config <path> [--out <dir>] [--threads N] [--seed S]

Writes report.json (keys sorted; "config", "data", "verdicts", "metadata")
and, for limit sweeps, sweep.csv. Exit status: 0 all checks pass,
2 config error, 3 budget exceeded, 4 a check failed.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .config import (
    EXPERIMENTS,
    ConfigError,
    Tolerances,
    load_raw,
    parse_basis,
    parse_field,
    parse_functions,
    parse_grid,
    parse_matrix,
    parse_theta,
    parse_variant,
    resolve,
    _int,
)
from .gns import (
    GramMatrix,
    KreinError,
    commutative_limit_sweep,
    cyclicity_profile,
    gram,
    isotropic_quotient,
    krein_decompose,
)
from .nccore import GridError, GridSpec
from .star import ClosedFormError, star_chain_fourier, StarChain, star_closed, star_fft, star_series, tilde_star_2pt
from .wightman import BudgetExceeded, hermiticity_check

log = logging.getLogger("star_gns")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_CHECK = 0, 2, 3, 4
OUT_ENV = "STAR_GNS_OUT"


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


class Checks:
    def __init__(self):
        self.items: list[dict] = []

    def add(self, name: str, value: float, threshold: float, op: str = "<") -> bool:
        value = float(value)
        ok = {"<": value < threshold, "<=": value <= threshold, ">": value > threshold,
              ">=": value >= threshold, "==": value == threshold}[op]
        self.items.append({"name": name, "value": value, "threshold": float(threshold), "op": op, "passed": bool(ok)})
        return ok

    def flag(self, name: str, ok: bool, detail: Any = None) -> bool:
        self.items.append({"name": name, "passed": bool(ok), "detail": detail})
        return ok

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.items)


def _relerr(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


# ----------------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------------

def run_star_eval(cfg: dict, checks: Checks, threads: int) -> dict:
    tol = Tolerances(cfg["tolerances"])
    theta = parse_theta(cfg.get("theta"))
    funcs = parse_functions(cfg.get("functions"), theta.dim)
    pair = cfg["pair"]
    if not (isinstance(pair, list) and len(pair) == 2):
        raise ConfigError("pair", "expected two function names")
    for i, n in enumerate(pair):
        if n not in funcs:
            raise ConfigError(f"pair[{i}]", f"unknown function {n!r}")
    f, g = funcs[pair[0]], funcs[pair[1]]
    order = _int(cfg["series_order"], "series_order", 0)
    grid = parse_grid(cfg["grid"], theta.dim, "grid") or GridSpec.fitting([f, g])
    closed = star_closed(f, g, theta)
    pts = grid.points()
    ref = closed(pts)
    fft = star_fft(f, g, theta, grid)
    series = star_series(f, g, theta, order)
    e_fft = _relerr(fft.samples, ref)
    e_series = _relerr(series(pts), ref)
    checks.add("fft_vs_closed", e_fft, tol["fft_vs_closed"])
    checks.add("series_vs_closed", e_series, tol["series_vs_closed"])
    plain = f(pts) * g(pts)
    trace = abs(fft.integral() - plain.sum() * grid.cell_volume) / abs(plain.sum() * grid.cell_volume)
    checks.add("trace_property", trace, tol["trace"])

    rng = np.random.default_rng(cfg["seed"])
    names = sorted(funcs)
    worst = 0.0
    for _ in range(_int(cfg["random_chains"], "random_chains", 0)):
        n = int(rng.integers(2, 6))
        fs = [funcs[names[int(i)]] for i in rng.integers(0, len(names), n)]
        kappa = rng.normal(size=(n, theta.dim))
        lhs = star_chain_fourier(StarChain(tuple(h.conj() for h in reversed(fs)), theta), kappa[::-1])
        rhs = np.conj(star_chain_fourier(StarChain(tuple(fs), theta), -kappa))
        if abs(rhs) > 0:
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
    checks.add("conjugation_reversal", worst, tol["conjugation"])

    data = {
        "grid": {"lower": grid.lower, "upper": grid.upper, "n": grid.n},
        "errors": {"fft_vs_closed": e_fft, "series_vs_closed": e_series, "trace": trace,
                   "conjugation_reversal": worst},
        "closed_form": [{"coeff": t.coeff, "center": t.center, "momentum": t.momentum, "width": t.width}
                        for t in closed.terms],
        "integral": fft.integral(),
    }
    variant = parse_variant(cfg["variant"])
    if cfg["two_point_grid"] is not None:
        g2 = parse_grid(cfg["two_point_grid"], theta.dim, "two_point_grid")
        decay = tol["grid_decay"]
        two = tilde_star_2pt(variant, f, g, theta, g2, decay_tol=decay)
        diag_ref = star_fft(f, g, theta, g2, decay_tol=decay).samples
        e_diag = _relerr(two.diagonal(), diag_ref)
        checks.add(f"{variant.tag}_diagonal", e_diag, tol["diagonal"])
        data["two_point"] = {"variant": variant.tag, "diagonal_error": e_diag, "grid_n": g2.n}
    return data


def _gram_common(cfg: dict, threads: int) -> tuple[GramMatrix, Any, Any]:
    theta = parse_theta(cfg.get("theta"))
    field = parse_field(cfg["field"])
    if theta.dim != field.dim:
        raise ConfigError("theta.dim", f"the mode field is {field.dim}-dimensional")
    funcs = parse_functions(cfg.get("functions"), theta.dim)
    basis = parse_basis(cfg.get("basis"), funcs)
    tol = Tolerances(cfg["tolerances"])
    G = gram(basis, field, theta, tol["isotropic"], _int(cfg["budget"]["max_terms"], "budget.max_terms", 1), threads)
    return G, field, theta


def run_gram(cfg: dict, checks: Checks, threads: int) -> dict:
    tol = Tolerances(cfg["tolerances"])
    G, _, _ = _gram_common(cfg, threads)
    lam = np.linalg.eigvalsh(G.hermitian_part())
    checks.add("gram_hermiticity", G.hermiticity_residual(), tol["hermiticity"])
    top = float(np.abs(lam).max())
    checks.add("min_eigenvalue_nonnegative", lam.min(), -tol["isotropic"] * top, ">=")
    return {"gram": G.entries, "hermiticity_residual": G.hermiticity_residual(), "eigenvalues": lam}


def run_quotient_krein(cfg: dict, checks: Checks, threads: int) -> dict:
    tol = Tolerances(cfg["tolerances"])
    if cfg["matrix"] is not None:
        G = GramMatrix(parse_matrix(cfg["matrix"]), None, tol["isotropic"])
    else:
        G, _, _ = _gram_common(cfg, threads)
    q = isotropic_quotient(G)
    data: dict = {"gram": G.entries, "hermiticity_residual": q.asymmetry, "null_dim": q.null_dim,
                  "gram_eigenvalues": q.eigenvalues, "reduced": q.reduced.entries}
    checks.flag("not_all_isotropic", not q.all_isotropic)
    if q.all_isotropic:
        return data
    red_lam = np.linalg.eigvalsh(q.reduced.entries)
    top = np.abs(red_lam).max()
    checks.add("reduced_min_abs_eigenvalue", np.abs(red_lam).min(), tol["isotropic"] * top, ">")
    k = krein_decompose(q.reduced, null_dim=q.null_dim)
    recon = float(np.max(np.abs(k.reconstruct() - q.reduced.entries)))
    pos = np.linalg.eigvalsh(k.positive_gram())
    checks.add("krein_reconstruction", recon, tol["reconstruction"])
    checks.add("krein_cross_orthogonality", k.cross_residual(), tol["reconstruction"])
    checks.add("positive_product_min_eigenvalue", pos.min(), 0.0, ">")
    data.update({"signature": list(k.signature), "reconstruction_residual": recon,
                 "positive_product_eigenvalues": pos})
    if cfg["expected_null_dim"] is not None:
        checks.add("expected_null_dim", q.null_dim, _int(cfg["expected_null_dim"], "expected_null_dim", 0), "==")
    if cfg["expected_signature"] is not None:
        exp = cfg["expected_signature"]
        checks.flag("expected_signature", list(k.signature) == list(exp), {"expected": exp})
    return data


def run_limit_sweep(cfg: dict, checks: Checks, threads: int) -> dict:
    tol = Tolerances(cfg["tolerances"])
    field = parse_field(cfg["field"])
    funcs = parse_functions(cfg.get("functions"), field.dim)
    basis = parse_basis(cfg.get("basis"), funcs)
    values = cfg["theta_values"]
    if not isinstance(values, list) or len(values) < 3:
        raise ConfigError("theta_values", "need at least 3 values")
    try:
        res = commutative_limit_sweep(basis, field, values, noise=tol["sweep_noise"], min_slope=tol["min_slope"],
                                      budget=_int(cfg["budget"]["max_terms"], "budget.max_terms", 1),
                                      threads=threads)
    except ValueError as exc:
        raise ConfigError("theta_values", str(exc)) from exc
    checks.flag("monotone_deviation", res.monotone)
    checks.add("final_row_zero", res.rows[-1][1], 0.0, "==")
    if res.slope is not None:
        checks.add("loglog_slope", res.slope, tol["min_slope"], ">=")
    return {"rows": [list(r) for r in res.rows], "slope": res.slope}


def run_hermiticity(cfg: dict, checks: Checks, threads: int) -> dict:
    tol = Tolerances(cfg["tolerances"])
    field = parse_field(cfg["field"])
    samples = cfg["samples"]
    out = {}
    for i, n in enumerate(cfg["orders"]):
        n = _int(n, f"orders[{i}]", 2)
        s = samples.get(str(n), 100) if isinstance(samples, dict) else samples
        s = _int(s, f"samples.{n}", 1)
        try:
            dev = hermiticity_check(field, n, s, seed=cfg["seed"] + n)
        except ValueError as exc:
            raise ConfigError(f"orders[{i}]", str(exc)) from exc
        out[str(n)] = {"samples": s, "max_deviation": dev}
        checks.add(f"wightman_hermiticity_n{n}", dev, tol["wightman_hermiticity"])
    return {"deviations": out}


def run_cyclicity(cfg: dict, checks: Checks, threads: int) -> dict:
    tol = Tolerances(cfg["tolerances"])
    theta = parse_theta(cfg.get("theta"))
    field = parse_field(cfg["field"])
    gens = []
    if cfg["generators"]:
        funcs = parse_functions(cfg.get("functions"), theta.dim)
        for i, n in enumerate(cfg["generators"]):
            if n not in funcs:
                raise ConfigError(f"generators[{i}]", f"unknown function {n!r}")
            gens.append(funcs[n])
    try:
        prof = cyclicity_profile(field, theta, gens, _int(cfg["max_level"], "max_level", 0), tol["isotropic"],
                                 _int(cfg["budget"]["max_terms"], "budget.max_terms", 1), threads)
    except ValueError as exc:
        raise ConfigError("generators", str(exc)) from exc
    ranks = [r for _, r in prof]
    checks.flag("ranks_nondecreasing", all(b >= a for a, b in zip(ranks, ranks[1:])))
    if cfg["expected_ranks"] is not None:
        checks.flag("expected_ranks", ranks == list(cfg["expected_ranks"]), {"expected": cfg["expected_ranks"]})
    return {"profile": [list(p) for p in prof]}


RUNNERS = {
    "star_eval": run_star_eval,
    "gram": run_gram,
    "quotient_krein": run_quotient_krein,
    "limit_sweep": run_limit_sweep,
    "hermiticity": run_hermiticity,
    "cyclicity": run_cyclicity,
}


def write_report(out_dir: Path, report: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_sweep_csv(out_dir: Path, rows) -> Path:
    path = out_dir / "sweep.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(["theta_sup", "deviation"])
        for s, d in rows:
            w.writerow([repr(float(s)), repr(float(d))])
    return path


def run(experiment: str, config_path: str | Path, out: str | Path | None = None, threads: int = 1,
        seed: int | None = None) -> int:
    """Execute one experiment and write its report; returns the exit status."""
    try:
        raw = load_raw(config_path)
        cfg = resolve(raw, experiment, seed)
        seed_v = cfg["seed"]
        if isinstance(seed_v, bool) or not isinstance(seed_v, int):
            raise ConfigError("seed", "expected an integer")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out or os.environ.get(OUT_ENV) or cfg["output"]["dir"])
    checks = Checks()
    started = _dt.datetime.now(_dt.timezone.utc)
    status = EXIT_OK
    error = None
    data: dict = {}
    try:
        data = RUNNERS[experiment](cfg, checks, max(1, threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        status, error = EXIT_BUDGET, str(exc)
    except (GridError, ClosedFormError, KreinError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        status, error = EXIT_CHECK, f"{type(exc).__name__}: {exc}"
    if status == EXIT_OK and not checks.passed:
        status = EXIT_CHECK
    report = {
        "config": cfg,
        "data": data,
        "verdicts": {"checks": checks.items, "passed": status == EXIT_OK, "error": error},
        "metadata": {
            "started": started.isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "version": __version__,
            "threads": threads,
        },
    }
    write_report(out_dir, report)
    if experiment == "limit_sweep" and "rows" in data and cfg["output"].get("csv", True):
        write_sweep_csv(out_dir, data["rows"])
    for c in checks.items:
        log.info("%s %s", "PASS" if c["passed"] else "FAIL", c["name"])
    return status


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="star-gns",
        description="Star-product field-operator space experiments.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default=None, help=f"output directory (else ${OUT_ENV}, else config output.dir)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for Gram entries")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    return run(args.experiment, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
