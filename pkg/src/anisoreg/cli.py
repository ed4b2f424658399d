"""Command line driver: ``anisoreg {solve,verify,mms,all} --config PATH``.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, profiles
from . import field as fieldio
from .config import CHECKS, ConfigError, ExperimentConfig, load
from .geometry import ContainmentError, GeometryError, Polydisc, SplitPoint
from .kscover import KSError, ks_slice_bound
from .params import intrinsic_theta
from .regularity import (RegularityError, RegularityReport, expansion_check, harnack_estimate,
                         holder_fit, holder_validate, l1_linf_check, osc_decay, run_sweep,
                         sup_bound_check)
from .solver import (SolverError, bump, check_truncation_subsolution, normalize_transform,
                     solve, solve_forced)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class NonConvergence(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (tuple, list)):
        return " ".join(_fmt(v) for v in x)
    if isinstance(x, dict):
        return ";".join(f"{k}={_fmt(v)}" for k, v in sorted(x.items()))
    return str(x)


class Writer:
    """Single writer for every artifact of one run."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.artifacts: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: Sequence[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.cfg.sha256} seed={self.cfg.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        path = self.out / name
        path.write_text(buf.getvalue(), encoding="utf-8")
        self.artifacts.append(name)
        return path

    def field(self, name: str, u) -> Path | None:
        if "anis" not in self.cfg.formats:
            return None
        path = self.out / name
        fieldio.save(u, path)
        self.artifacts.append(name)
        return path

    def manifest(self, checks: dict[str, bool], wall: float) -> Path:
        data = {"config_sha256": self.cfg.sha256, "seed": self.cfg.seed, "version": __version__,
                "checks": dict(sorted(checks.items())), "artifacts": sorted(set(self.artifacts)),
                "wall_time": wall}
        path = self.out / "manifest.json"
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


# ---------------------------------------------------------------- solve

def run_solve(cfg: ExperimentConfig, writer: Writer | None = None):
    """Solve every configured boundary instance; returns ``[(label, field)]``."""
    out, rows = [], []
    g = cfg.grid
    for label, bc in cfg.boundaries():
        u, rep = solve(g, bc, cfg.flux, cfg.solver)
        centre = 0.5 * (g.lower + g.upper)
        rows.append((label, rep.sweeps, rep.residual, rep.energy, rep.converged, u.value_at(centre)))
        if not rep.converged:
            raise NonConvergence(f"{label}: residual {rep.residual:.3e} after {rep.sweeps} sweeps")
        out.append((label, u))
        if writer is not None:
            writer.field(f"field_{label}.anis", u)
    if writer is not None:
        writer.csv("solve.csv", ["field", "sweeps", "residual", "energy", "converged", "u_center"], rows)
    return out


# ---------------------------------------------------------------- verify

def _centers(cfg: ExperimentConfig) -> list[tuple[float, ...]]:
    if cfg.centers is not None:
        return cfg.centers
    lo, hi = np.asarray(cfg.lower), np.asarray(cfg.upper)
    fr = np.array([0.25, 0.375, 0.5, 0.625, 0.75])
    mesh = np.meshgrid(*[lo[a] + fr * (hi[a] - lo[a]) for a in range(len(lo))], indexing="ij")
    return [tuple(float(v) for v in pt) for pt in np.stack([m.ravel() for m in mesh], axis=1)]


def _random_centers(cfg: ExperimentConfig, count: int, seed: int):
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(cfg.lower), np.asarray(cfg.upper)
    pts = lo + (hi - lo) * rng.uniform(0.3, 0.7, size=(count, len(lo)))
    return [tuple(float(v) for v in p) for p in pts]


def _central_region(cfg: ExperimentConfig) -> Polydisc:
    lo, hi = np.asarray(cfg.lower), np.asarray(cfg.upper)
    c = SplitPoint.from_coords(0.5 * (lo + hi), cfg.params.s)
    q = 0.25 * (hi - lo)
    return Polydisc(c, float(q[:cfg.params.s].min()), float(q[cfg.params.s:].min()))


REPORT_HEADER = ["check", "field", "point", "scales", "branch", "hypothesis", "passed",
                 "constants", "notes"]


def _report_rows(label, results):
    rows, ok, admissible = [], True, 0
    for key, rep in results:
        if rep is None:
            rows.append((key[0], label, key[1], dict(key[2]), "inadmissible", False, True, "", ""))
            continue
        admissible += 1
        ok &= bool(rep.passed)
        rows.append((rep.check, label, rep.point, rep.scales, rep.branch, rep.hypothesis,
                     rep.passed, rep.constants, rep.notes))
    return rows, ok, admissible


def _verify_one(cfg: ExperimentConfig, check: str, label: str, u, threads: int, state: dict):
    """Returns ``(rows, passed)`` for one check on one field."""
    p, par = cfg.params.p, cfg.params
    jobs = []
    if check == "harnack":
        for c in _centers(cfg):
            for rho in cfg.rho:
                for db in cfg.delta_bar:
                    jobs.append(((check, c, {"rho": rho, "delta_bar": db}),
                                 lambda c=c, rho=rho, db=db: harnack_estimate(u, par, c, rho, db)))
    elif check == "supbound":
        uinf = u.sup_norm()
        for c in _centers(cfg):
            for rho in cfg.rho:
                th = intrinsic_theta(uinf, rho, p)
                jobs.append(((check, c, {"rho": rho, "theta": th}),
                             lambda c=c, th=th, rho=rho: sup_bound_check(u, par, c, th, rho)))
    elif check == "l1linf":
        for c in _centers(cfg):
            for rho in cfg.l1linf_rho:
                jobs.append(((check, c, {"rho": rho, "theta": 2 * rho}),
                             lambda c=c, rho=rho: l1_linf_check(u, par, c, 2 * rho, rho)))
    elif check == "expansion":
        interior = u.values[u.grid.interior_slice()]
        M = float(np.median(interior))
        for c in _centers(cfg):
            jobs.append(((check, c, {"M": M, "rho": cfg.expansion_rho}),
                         lambda c=c: expansion_check(u, par, c, M, cfg.expansion_rho,
                                                     cfg.expansion_nu, cfg.expansion_delta)))
    elif check == "oscdecay":
        K = cfg.osc_K if cfg.osc_K is not None else state.get("K_max", 2.0)
        K = max(K, 1.0 + 1e-9)
        for c in _random_centers(cfg, cfg.osc_centers, cfg.seed):
            jobs.append(((check, c, {"K": K}), lambda c=c: osc_decay(u, par, c, K)))
    elif check == "holder":
        region = _central_region(cfg)
        fit = holder_fit(u, par, region, cfg.holder_pairs, seed=cfg.seed)
        if fit.branch == "degenerate":
            fit.passed = fit.constants.get("osc", 1.0) == 0.0
        else:
            a, gm = fit.constants["alpha_hat"], fit.constants["gamma_hat"]
            frac = holder_validate(u, par, region, a, gm, cfg.holder_pairs, seed=cfg.seed + 1)
            fit.notes["validated_fraction"] = frac
            fit.passed = bool(0.1 < a <= 1.0 and frac == 1.0)
        jobs.append(((check, fit.point, fit.scales), lambda fit=fit: fit))
    elif check == "truncation":
        jobs.extend(_truncation_jobs(cfg, u))
    elif check == "ks":
        jobs.append(_ks_job(cfg, u))
    else:
        raise ConfigError(f"unknown check {check!r}")
    jobs = [((k[0], k[1], tuple(sorted(k[2].items()))), fn) for k, fn in jobs]
    results = run_sweep(jobs, threads)
    rows, ok, admissible = _report_rows(label, results)
    if admissible == 0:
        raise ContainmentError(f"{check}: no admissible (point, scale) for field {label}")
    if check == "harnack":
        ks = [r.constants["K_hat"] for _, r in results if r is not None]
        state["K_max"] = max(state.get("K_max", 1.0), max(ks))
    return rows, ok


def _truncation_jobs(cfg: ExperimentConfig, u):
    g = u.grid
    rng = np.random.default_rng(cfg.seed)
    lo, hi = g.lower, g.upper
    bumps = []
    for _ in range(cfg.truncation_bumps):
        c = lo + (hi - lo) * rng.uniform(0.2, 0.8, size=g.ndim)
        r = (hi - lo) * rng.uniform(0.1, 0.2, size=g.ndim)
        bumps.append(bump(g, c, r))
    interior = u.values[g.interior_slice()]
    qs = np.linspace(0.1, 0.9, cfg.truncation_levels)
    levels = [float(np.quantile(interior, q)) for q in qs]
    jobs = []
    for k in levels:
        for sign in (1, -1):
            def job(k=k, sign=sign):
                t = check_truncation_subsolution(u, k, sign, bumps, cfg.flux, cfg.params,
                                                 cfg.tol_residual)
                worst = max((v * sign) - e for v, e in zip(t.values, t.slack))
                return RegularityReport("truncation", (), "main",
                                        constants={"failures": float(t.failures), "worst_excess": worst},
                                        passed=t.passed, scales={"k": k, "sign": float(sign)})
            jobs.append((("truncation", (), {"k": k, "sign": float(sign)}), job))
    return jobs


def _ks_job(cfg: ExperimentConfig, u):
    region = _central_region(cfg)
    c = tuple(float(v) for v in region.center.coords)

    def job():
        norm = normalize_transform(u, c, region.theta, region.rho, cfg.params.C)
        try:
            b = ks_slice_bound(norm.v, cfg.ks_beta)
        except KSError as exc:
            raise RegularityError(str(exc)) from exc
        return RegularityReport("ks", c, "main",
                                constants={"omega": b["omega"], "r": b["r"]},
                                passed=b["ok"] and b["lower"] <= b["value"] <= b["sup"] <= b["upper"],
                                scales={"theta": region.theta, "rho": region.rho, "beta": cfg.ks_beta},
                                notes={"lower": b["lower"], "value": b["value"], "sup": b["sup"],
                                       "upper": b["upper"]})

    return ("ks", c, {"theta": region.theta, "rho": region.rho}), job


def run_verify(cfg: ExperimentConfig, fields, checks: Sequence[str], threads: int,
               writer: Writer | None = None) -> dict[str, bool]:
    status: dict[str, bool] = {}
    state: dict = {}
    # harnack first so oscdecay can reuse its K_max
    order = sorted(checks, key=lambda c: (c != "harnack", CHECKS.index(c)))
    for check in order:
        rows, ok = [], True
        for label, u in fields:
            r, passed = _verify_one(cfg, check, label, u, threads, state)
            rows.extend(r)
            ok &= passed
        status[check] = ok
        if writer is not None:
            writer.csv(f"report_{check}.csv", REPORT_HEADER, rows)
    return status


# ---------------------------------------------------------------- mms

def run_mms(cfg: ExperimentConfig, writer: Writer | None = None) -> list[tuple]:
    """Manufactured-solution convergence table ``(n, h, error, order)``."""
    p = cfg.params.p
    if cfg.mms_solution == "sine":
        exact, force = profiles.manufactured_solution, profiles.manufactured_forcing(p, cfg.epsilon)
    else:
        exact = lambda *x: profiles.affine(*x)  # noqa: E731
        force = profiles.zero_forcing
    rows, prev = [], None
    for n in cfg.mms_dims:
        g = type(cfg.grid).box([n] * cfg.params.N, cfg.lower, cfg.upper, cfg.params.s)
        bc = profiles.boundary(g, exact)
        u, rep = solve_forced(g, bc, cfg.flux, profiles.sample(g, force), cfg.solver)
        if not rep.converged:
            raise NonConvergence(f"mms n={n}: residual {rep.residual:.3e}")
        err = float(np.max(np.abs(u.values - profiles.sample(g, exact).values)))
        h = max(g.spacing)
        order = None
        if prev is not None and prev[1] > 0 and err > 0:
            order = math.log(prev[1] / err) / math.log(prev[0] / h)
        rows.append((n, h, err, order))
        prev = (h, err)
    if writer is not None:
        if len(rows) == 1:
            writer.csv("mms.csv", ["n", "h", "error"], [r[:3] for r in rows])
        else:
            writer.csv("mms.csv", ["n", "h", "error", "order"],
                       [r[:3] + ("" if r[3] is None else r[3],) for r in rows])
    return rows


# ---------------------------------------------------------------- entry point

def _threads(arg: int | None) -> int:
    env = os.environ.get("ANISOREG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ANISOREG_THREADS={env!r} is not an integer") from None
    return max(1, arg or 1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anisoreg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides [checks] seed")
        sp.add_argument("--threads", type=int, default=None)

    common(sub.add_parser("solve", help="solve and write ANIS fields"))
    v = sub.add_parser("verify", help="run one regularity check")
    v.add_argument("check", choices=CHECKS)
    v.add_argument("--field", type=Path, action="append", default=None,
                   help="ANIS field(s) to check; solved from the config when omitted")
    common(v)
    common(sub.add_parser("mms", help="manufactured-solution convergence table"))
    common(sub.add_parser("all", help="solve, run every enabled check and the mms table"))
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        threads = _threads(args.threads)
        writer = Writer(cfg, args.out if args.out is not None else cfg.out_dir)
        status: dict[str, bool] = {}
        if args.command == "solve":
            run_solve(cfg, writer)
        elif args.command == "verify":
            if args.field:
                fields = []
                for path in args.field:
                    try:
                        fields.append((path.stem, fieldio.load(path)))
                    except (OSError, fieldio.FieldFormatError) as exc:
                        raise ConfigError(f"{path}: {exc}") from None
                for _, u in fields:
                    u.p = cfg.params.p
            else:
                fields = run_solve(cfg, writer)
            status = run_verify(cfg, fields, [args.check], threads, writer)
        elif args.command == "mms":
            run_mms(cfg, writer)
        else:
            fields = run_solve(cfg, writer)
            status = run_verify(cfg, fields, cfg.checks, threads, writer)
            run_mms(cfg, writer)
        writer.manifest(status, time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ContainmentError, GeometryError, RegularityError, SolverError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    for name, ok in sorted(status.items()):
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all(status.values()) else EXIT_CHECK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
